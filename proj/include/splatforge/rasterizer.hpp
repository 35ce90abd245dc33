#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "splatforge/image.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace splatforge {

inline constexpr int kTileSize = 16;

/// Splats are truncated where the Mahalanobis distance reaches 3 sigma. The
/// kernel has its tangent at the cutoff subtracted so that value and slope
/// both reach zero there, keeping the forward model C1 in every parameter.
inline constexpr double kSplatCutoffSq = 9.0;

/// Compositing stops once transmittance drops below this value.
inline constexpr double kMinTransmittance = 1e-4;

/// Per-splat alpha is clamped here so that 1 - alpha stays invertible.
inline constexpr double kMaxSplatAlpha = 0.99;

/// Screen-space low-pass added to every projected covariance (pixels²).
inline constexpr double kCovarianceDilation = 0.3;

inline constexpr double kMaxConditionNumber = 1e8;
inline constexpr double kNearPlane = 0.2;

struct RenderDiagnostics {
    std::size_t visible = 0;
    std::size_t culled_near = 0;
    std::size_t skipped_degenerate = 0;
};

struct RenderTape;

/// RGB and alpha planes of a splat render plus the tape needed to
/// differentiate it. The background is black and transparent.
struct RenderOutput {
    ImageRGB rgb;
    ImageGray alpha;
    RenderDiagnostics diagnostics;
    std::shared_ptr<const RenderTape> tape;

    int width() const { return rgb.width(); }
    int height() const { return rgb.height(); }
    ImageRGBA rgba() const { return compose_rgba(rgb, alpha); }
};

/// dL/dΘ with one 14-vector per Gaussian in checkpoint parameter order.
struct ParamGradients {
    std::vector<GaussianParams> grads;
    /// |dL/d(projected mean)| in normalized device units, per Gaussian;
    /// used for densification statistics.
    std::vector<double> screen_grad_norm;
    /// True for Gaussians that touched at least one pixel.
    std::vector<std::uint8_t> visible;

    explicit ParamGradients(std::size_t n = 0)
        : grads(n, GaussianParams{}), screen_grad_norm(n, 0.0), visible(n, 0) {}

    std::size_t size() const { return grads.size(); }
    void accumulate(const ParamGradients& other);
    bool all_finite() const;
};

/// Forward splatting of `cloud` seen from `camera` (camera resolution is
/// used as the output size).
RenderOutput render(const GaussianCloud& cloud, const Camera& camera);

/// Exact reverse-mode derivative of L = Σ grad_rgb·rgb + grad_alpha·alpha.
/// A default-constructed (empty) grad_alpha means zero.
ParamGradients backward(const RenderOutput& output, const ImageRGB& grad_rgb, const ImageGray& grad_alpha = {});

}  // namespace splatforge
