#pragma once

#include <cstdint>
#include <vector>

namespace rsvp {

/// Dense binary mask, one byte per pixel (0 or 1), row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const { return width_; }
    int height() const { return height_; }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

    std::uint64_t popcount() const;
    bool any() const;

    const std::vector<std::uint8_t>& bits() const { return bits_; }

    BinaryMask& operator|=(const BinaryMask& other);

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

}  // namespace rsvp
