#pragma once

#include "splatforge/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace splatforge {

/// Zeroth-order spherical-harmonic basis constant; colors are stored as the
/// DC coefficient so checkpoints follow the usual splat PLY layout.
inline constexpr double kShC0 = 0.28209479177387814;

/// Number of scalar parameters per Gaussian, in checkpoint order:
/// center(3), color dc(3), opacity logit(1), log scale(3), rotation wxyz(4).
inline constexpr int kParamsPerGaussian = 14;

namespace param {
inline constexpr int kCenter = 0;
inline constexpr int kColor = 3;
inline constexpr int kOpacity = 6;
inline constexpr int kScale = 7;
inline constexpr int kRotation = 10;
}  // namespace param

using GaussianParams = std::array<double, kParamsPerGaussian>;

/// One anisotropic Gaussian. Fields hold the unconstrained optimizer
/// parameters; the accessors apply the activations (exp for scale, sigmoid
/// for opacity, normalization for the quaternion, SH-DC decode for color).
struct Gaussian3D {
    Vec3 center = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Quat rotation_raw = Quat(1, 0, 0, 0);
    double opacity_logit = 0.0;
    Vec3 color_dc = Vec3::Zero();

    Vec3 scale() const { return log_scale.array().exp(); }
    Quat rotation() const;
    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 color() const;
    Mat3 covariance() const { return covariance_from_scale_rotation(scale(), rotation()); }

    void set_scale(const Vec3& s) { log_scale = s.array().log(); }
    void set_opacity(double a) { opacity_logit = logit(a); }
    void set_color(const Vec3& rgb) { color_dc = (rgb.array() - 0.5) / kShC0; }

    GaussianParams to_params() const;
    static Gaussian3D from_params(const GaussianParams& p);

    /// Rounds every stored parameter to float32 precision.
    void quantize_to_f32();

    static Gaussian3D make(const Vec3& center, const Vec3& scale, const Quat& rotation, double opacity,
                           const Vec3& rgb);

    bool operator==(const Gaussian3D& o) const { return to_params() == o.to_params(); }
};

struct GaussianCloud {
    std::vector<Gaussian3D> gaussians;
    std::uint64_t generation = 0;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    void quantize_to_f32() {
        for (auto& g : gaussians) g.quantize_to_f32();
    }

    /// Applies a rigid rotation about the origin to every Gaussian.
    GaussianCloud rotated(const Quat& q) const;

    bool operator==(const GaussianCloud& o) const {
        return generation == o.generation && gaussians == o.gaussians;
    }
};

}  // namespace splatforge
