#pragma once

#include "splatforge/core.hpp"

#include <span>
#include <vector>

namespace splatforge {

/// Row-major double image with a fixed channel count. ImageRGBA is the
/// 4-channel instance; gradients and single-plane maps use other counts.
template <int Channels>
class Image {
public:
    static constexpr int kChannels = Channels;

    Image() = default;
    Image(int width, int height, double fill = 0.0)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * Channels, fill) {
        if (width < 0 || height < 0) throw InvalidParameter("image dimensions must be non-negative");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }
    bool same_size(int w, int h) const { return w == width_ && h == height_; }
    template <int C>
    bool same_size(const Image<C>& o) const {
        return o.width() == width_ && o.height() == height_;
    }

    double& at(int x, int y, int c) { return data_[index(x, y) + c]; }
    double at(int x, int y, int c) const { return data_[index(x, y) + c]; }
    double* pixel(int x, int y) { return data_.data() + index(x, y); }
    const double* pixel(int x, int y) const { return data_.data() + index(x, y); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && data_ == o.data_;
    }

private:
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width_ + x) * Channels;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

using ImageRGBA = Image<4>;
using ImageRGB = Image<3>;
using ImageGray = Image<1>;

/// True when every channel is finite and inside [0, 1].
bool is_valid_rgba(const ImageRGBA& img);

/// RGB planes of an RGBA image.
ImageRGB rgb_of(const ImageRGBA& img);
ImageGray alpha_of(const ImageRGBA& img);
ImageRGBA compose_rgba(const ImageRGB& rgb, const ImageGray& alpha);

/// Area-weighted box filter when shrinking, bilinear interpolation when
/// enlarging, applied per axis.
template <int C>
Image<C> resample(const Image<C>& src, int width, int height);

/// Keys cubic convolution (a = -0.5) upscaling, clamped to [0, 1].
ImageRGBA upscale_bicubic(const ImageRGBA& src, int factor);

/// Bilinear lookup at continuous texel coordinates where texel (i, j) has its
/// center at (i + 0.5, j + 0.5); clamp-to-edge addressing.
template <int C>
void sample_bilinear(const Image<C>& img, double x, double y, double* out);

}  // namespace splatforge
