#include "splatforge/image.hpp"

#include <algorithm>
#include <cmath>

namespace splatforge {

bool is_valid_rgba(const ImageRGBA& img) {
    return std::all_of(img.data().begin(), img.data().end(),
                       [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

ImageRGB rgb_of(const ImageRGBA& img) {
    ImageRGB out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
    return out;
}

ImageGray alpha_of(const ImageRGBA& img) {
    ImageGray out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y, 0) = img.at(x, y, 3);
    return out;
}

ImageRGBA compose_rgba(const ImageRGB& rgb, const ImageGray& alpha) {
    if (!rgb.same_size(alpha)) throw ContractViolation("compose_rgba: size mismatch");
    ImageRGBA out(rgb.width(), rgb.height());
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = rgb.at(x, y, c);
            out.at(x, y, 3) = alpha.at(x, y, 0);
        }
    return out;
}

namespace {

struct Tap {
    int index;
    double weight;
};

// One-dimensional resampling kernel from `src` samples to `dst` samples.
std::vector<std::vector<Tap>> resample_taps(int src, int dst) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
    const double ratio = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        auto& t = taps[static_cast<std::size_t>(i)];
        if (ratio >= 1.0) {
            // box filter: output cell [i*ratio, (i+1)*ratio) in source units
            const double lo = i * ratio;
            const double hi = (i + 1) * ratio;
            for (int s = static_cast<int>(std::floor(lo)); s < static_cast<int>(std::ceil(hi)); ++s) {
                const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
                if (overlap > 0.0) t.push_back({std::clamp(s, 0, src - 1), overlap / ratio});
            }
        } else {
            const double pos = (i + 0.5) * ratio - 0.5;
            const int s0 = static_cast<int>(std::floor(pos));
            const double f = pos - s0;
            t.push_back({std::clamp(s0, 0, src - 1), 1.0 - f});
            t.push_back({std::clamp(s0 + 1, 0, src - 1), f});
        }
    }
    return taps;
}

}  // namespace

template <int C>
Image<C> resample(const Image<C>& src, int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidParameter("resample: target size must be positive");
    if (src.same_size(width, height)) return src;
    const auto tx = resample_taps(src.width(), width);
    const auto ty = resample_taps(src.height(), height);

    Image<C> horiz(width, src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (const auto& tap : tx[static_cast<std::size_t>(x)]) acc += tap.weight * src.at(tap.index, y, c);
                horiz.at(x, y, c) = acc;
            }
    Image<C> out(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (const auto& tap : ty[static_cast<std::size_t>(y)]) acc += tap.weight * horiz.at(x, tap.index, c);
                out.at(x, y, c) = acc;
            }
    return out;
}

template Image<1> resample(const Image<1>&, int, int);
template Image<3> resample(const Image<3>&, int, int);
template Image<4> resample(const Image<4>&, int, int);

namespace {

double keys_cubic(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

}  // namespace

ImageRGBA upscale_bicubic(const ImageRGBA& src, int factor) {
    if (factor < 1) throw InvalidParameter("upscale: factor must be >= 1");
    if (factor == 1) return src;
    const int w = src.width() * factor;
    const int h = src.height() * factor;
    ImageRGBA out(w, h);
    for (int y = 0; y < h; ++y) {
        const double sy = (y + 0.5) / factor - 0.5;
        const int y0 = static_cast<int>(std::floor(sy));
        const double fy = sy - y0;
        for (int x = 0; x < w; ++x) {
            const double sx = (x + 0.5) / factor - 0.5;
            const int x0 = static_cast<int>(std::floor(sx));
            const double fx = sx - x0;
            double acc[4] = {0, 0, 0, 0};
            for (int j = -1; j <= 2; ++j) {
                const double wy = keys_cubic(j - fy);
                const int yy = std::clamp(y0 + j, 0, src.height() - 1);
                for (int i = -1; i <= 2; ++i) {
                    const double wgt = wy * keys_cubic(i - fx);
                    const int xx = std::clamp(x0 + i, 0, src.width() - 1);
                    for (int c = 0; c < 4; ++c) acc[c] += wgt * src.at(xx, yy, c);
                }
            }
            for (int c = 0; c < 4; ++c) out.at(x, y, c) = std::clamp(acc[c], 0.0, 1.0);
        }
    }
    return out;
}

template <int C>
void sample_bilinear(const Image<C>& img, double x, double y, double* out) {
    const double fx = x - 0.5;
    const double fy = y - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double ax = fx - x0;
    const double ay = fy - y0;
    const int xa = std::clamp(x0, 0, img.width() - 1), xb = std::clamp(x0 + 1, 0, img.width() - 1);
    const int ya = std::clamp(y0, 0, img.height() - 1), yb = std::clamp(y0 + 1, 0, img.height() - 1);
    for (int c = 0; c < C; ++c) {
        const double top = (1 - ax) * img.at(xa, ya, c) + ax * img.at(xb, ya, c);
        const double bot = (1 - ax) * img.at(xa, yb, c) + ax * img.at(xb, yb, c);
        out[c] = (1 - ay) * top + ay * bot;
    }
}

template void sample_bilinear(const Image<1>&, double, double, double*);
template void sample_bilinear(const Image<3>&, double, double, double*);
template void sample_bilinear(const Image<4>&, double, double, double*);

}  // namespace splatforge
