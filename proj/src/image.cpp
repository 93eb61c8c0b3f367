#include "rsvp/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <jpeglib.h>

#include "rsvp/errors.hpp"

namespace rsvp {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw InvalidInput("raster dimensions must be non-negative");
    }
    data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
        data_[i] = fill.r;
        data_[i + 1] = fill.g;
        data_[i + 2] = fill.b;
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidInput("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InvalidInput("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> encode_png(const Raster& image) {
    if (image.empty()) {
        throw InvalidInput("cannot encode an empty raster");
    }
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    const auto stride = static_cast<png_int_32>(image.width() * 3);
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.bytes().data(), stride, nullptr)) {
        throw FormatError(std::string("png size query failed: ") + img.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.bytes().data(), stride, nullptr)) {
        throw FormatError(std::string("png encode failed: ") + img.message);
    }
    out.resize(size);
    return out;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
        throw FormatError(std::string("png header: ") + img.message);
    }
    img.format = PNG_FORMAT_RGB;
    Raster out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, out.bytes().data(),
                               static_cast<png_int_32>(img.width * 3), nullptr)) {
        png_image_free(&img);
        throw FormatError(std::string("png decode: ") + img.message);
    }
    return out;
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Decodes the header, and the pixels too when `out` is non-null.
ImageDims read_jpeg(std::span<const std::uint8_t> bytes, Raster* out) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError(std::string("jpeg: ") + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    ImageDims dims{static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height)};
    if (out != nullptr) {
        cinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&cinfo);
        *out = Raster(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
        const auto stride = static_cast<std::size_t>(cinfo.output_width) * 3;
        while (cinfo.output_scanline < cinfo.output_height) {
            JSAMPROW row = out->bytes().data() + cinfo.output_scanline * stride;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    jpeg_destroy_decompress(&cinfo);
    return dims;
}

bool is_png(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
    return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

}  // namespace

Raster load_image(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (is_png(bytes)) {
        return decode_png(bytes);
    }
    if (is_jpeg(bytes)) {
        Raster out;
        read_jpeg(bytes, &out);
        return out;
    }
    throw FormatError("unsupported image format: " + path.string());
}

ImageDims read_image_dims(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (is_png(bytes)) {
        // IHDR is always the first chunk: width and height are big-endian at offsets 16 and 20.
        if (bytes.size() < 24) {
            throw FormatError("truncated png: " + path.string());
        }
        auto be32 = [&](std::size_t o) {
            return static_cast<int>((std::uint32_t{bytes[o]} << 24) | (std::uint32_t{bytes[o + 1]} << 16) |
                                    (std::uint32_t{bytes[o + 2]} << 8) | std::uint32_t{bytes[o + 3]});
        };
        return {be32(16), be32(20)};
    }
    if (is_jpeg(bytes)) {
        return read_jpeg(bytes, nullptr);
    }
    throw FormatError("unsupported image format: " + path.string());
}

void write_png(const Raster& image, const std::filesystem::path& path) {
    write_file_bytes(path, encode_png(image));
}

}  // namespace rsvp
