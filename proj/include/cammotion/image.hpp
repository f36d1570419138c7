#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cammotion {

/// Interleaved row-major raster: value(x, y, c) lives at (y * width + x) * channels + c.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    T& at(int x, int y, int c = 0) noexcept {
        assert(contains(x, y) && c >= 0 && c < channels_);
        return data_[index(x, y, c)];
    }
    const T& at(int x, int y, int c = 0) const noexcept {
        assert(contains(x, y) && c >= 0 && c < channels_);
        return data_[index(x, y, c)];
    }

    std::span<T> pixel(int x, int y) noexcept {
        return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
    }
    std::span<const T> pixel(int x, int y) const noexcept {
        return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
    }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(int width, int height) const noexcept {
        return width_ == width && height_ == height;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<T> data_;
};

/// RGB, channels in [0, 1].
using ColorImage = Image<double>;
/// Single channel; 0 marks an invalid sample.
using DepthImage = Image<double>;
/// Single channel; nonzero = true.
using Mask = Image<std::uint8_t>;

inline std::size_t count_true(const Mask& mask) {
    std::size_t n = 0;
    for (auto v : mask.data()) n += v != 0;
    return n;
}

} // namespace cammotion
