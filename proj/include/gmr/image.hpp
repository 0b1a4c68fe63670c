#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace gmr {

/// Row-major interleaved float image, values nominally in [0, 1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double &at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::vector<double> &data() { return data_; }
    const std::vector<double> &data() const { return data_; }

    bool same_shape(const Image &other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// 8-bit PNG, grayscale for 1 channel, RGB for 3. Values are clamped to
/// [0, 1] and rounded.
void write_png(const Image &image, const std::filesystem::path &path);

/// Reads an 8-bit PNG into [0, 1] with the file's channel count reduced to
/// 1 (gray) or 3 (RGB); alpha is dropped and palettes are expanded.
Image read_png(const std::filesystem::path &path);

} // namespace gmr
