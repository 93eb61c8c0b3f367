#include "rsvp/mask.hpp"

#include <algorithm>
#include <numeric>

#include "rsvp/errors.hpp"

namespace rsvp {

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) {
        throw InvalidInput("mask dimensions must be non-negative");
    }
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

std::uint64_t BinaryMask::popcount() const {
    return std::accumulate(bits_.begin(), bits_.end(), std::uint64_t{0});
}

bool BinaryMask::any() const {
    return std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
    if (other.width_ != width_ || other.height_ != height_) {
        throw InvalidInput("mask union requires equal dimensions");
    }
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        bits_[i] |= other.bits_[i];
    }
    return *this;
}

}  // namespace rsvp
