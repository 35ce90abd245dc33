#include "splatforge/camera.hpp"
#include "splatforge/core.hpp"
#include "splatforge/gaussian.hpp"

#include <cmath>

namespace splatforge {

Mat3 quat_to_matrix(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Quat quat_multiply(const Quat& a, const Quat& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Quat quat_from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 n = axis.normalized();
    const double s = std::sin(0.5 * angle_rad);
    return {std::cos(0.5 * angle_rad), s * n.x(), s * n.y(), s * n.z()};
}

Mat3 covariance_from_scale_rotation(const Vec3& scale, const Quat& rotation) {
    if (!scale.allFinite() || !rotation.allFinite())
        throw InvalidParameter("covariance: non-finite scale or rotation");
    if ((scale.array() <= 0.0).any()) throw InvalidParameter("covariance: scale must be positive");
    const Mat3 r = quat_to_matrix(rotation);
    const Mat3 m = r * scale.asDiagonal();
    Mat3 sigma = m * m.transpose();
    // exact symmetry
    sigma(1, 0) = sigma(0, 1);
    sigma(2, 0) = sigma(0, 2);
    sigma(2, 1) = sigma(1, 2);
    return sigma;
}

// --- Gaussian3D ------------------------------------------------------------

Quat Gaussian3D::rotation() const {
    const double n = rotation_raw.norm();
    if (!(n > 0.0) || !std::isfinite(n)) return Quat(1, 0, 0, 0);
    return rotation_raw / n;
}

Vec3 Gaussian3D::color() const {
    return (0.5 + kShC0 * color_dc.array()).cwiseMax(0.0).cwiseMin(1.0);
}

GaussianParams Gaussian3D::to_params() const {
    GaussianParams p{};
    for (int k = 0; k < 3; ++k) {
        p[param::kCenter + k] = center[k];
        p[param::kColor + k] = color_dc[k];
        p[param::kScale + k] = log_scale[k];
    }
    p[param::kOpacity] = opacity_logit;
    for (int k = 0; k < 4; ++k) p[param::kRotation + k] = rotation_raw[k];
    return p;
}

Gaussian3D Gaussian3D::from_params(const GaussianParams& p) {
    Gaussian3D g;
    for (int k = 0; k < 3; ++k) {
        g.center[k] = p[param::kCenter + k];
        g.color_dc[k] = p[param::kColor + k];
        g.log_scale[k] = p[param::kScale + k];
    }
    g.opacity_logit = p[param::kOpacity];
    for (int k = 0; k < 4; ++k) g.rotation_raw[k] = p[param::kRotation + k];
    return g;
}

void Gaussian3D::quantize_to_f32() {
    auto p = to_params();
    for (auto& v : p) v = static_cast<double>(static_cast<float>(v));
    *this = from_params(p);
}

Gaussian3D Gaussian3D::make(const Vec3& center, const Vec3& scale, const Quat& rotation, double opacity,
                            const Vec3& rgb) {
    Gaussian3D g;
    g.center = center;
    g.set_scale(scale);
    g.rotation_raw = rotation.normalized();
    g.set_opacity(opacity);
    g.set_color(rgb);
    return g;
}

GaussianCloud GaussianCloud::rotated(const Quat& q) const {
    GaussianCloud out = *this;
    const Mat3 r = quat_to_matrix(q.normalized());
    for (auto& g : out.gaussians) {
        g.center = r * g.center;
        g.rotation_raw = quat_multiply(q.normalized(), g.rotation());
    }
    return out;
}

// --- Camera ----------------------------------------------------------------

Camera::Camera(const Vec3& position, const Vec3& target, const Vec3& up, double fov_y_deg, int width,
               int height)
    : position_(position), target_(target), up_(up), fov_y_(fov_y_deg), width_(width), height_(height) {
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) throw InvalidParameter("camera: fov_y must be in (0, 180)");
    if ((position - target).norm() <= 0.0) throw InvalidParameter("camera: position equals target");
    if (width <= 0 || height <= 0) throw InvalidParameter("camera: resolution must be positive");
    const Vec3 forward = (target - position).normalized();
    const Vec3 right = forward.cross(up).normalized();
    if (!right.allFinite()) throw InvalidParameter("camera: up vector parallel to view direction");
    const Vec3 true_up = right.cross(forward);
    rotation_.row(0) = right.transpose();
    rotation_.row(1) = true_up.transpose();
    rotation_.row(2) = forward.transpose();
    focal_ = 0.5 * height / std::tan(0.5 * deg_to_rad(fov_y_deg));
}

Camera Camera::with_resolution(int width, int height) const {
    return Camera(position_, target_, up_, fov_y_, width, height);
}

Camera Camera::rotated(const Quat& q) const {
    const Mat3 r = quat_to_matrix(q.normalized());
    return Camera(r * position_, r * target_, r * up_, fov_y_, width_, height_);
}

Vec3 orbit_position(const CameraSample& s) {
    const double a = deg_to_rad(s.azimuth);
    const double e = deg_to_rad(s.elevation);
    return s.radius * Vec3(std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a));
}

Camera camera_from_sample(const CameraSample& sample, double fov_y_deg, int resolution) {
    return Camera(orbit_position(sample), Vec3::Zero(), Vec3::UnitY(), fov_y_deg, resolution, resolution);
}

CameraSample sample_training_camera(Rng& rng) {
    CameraSample s;
    s.azimuth = rng.uniform(kAzimuthMin, kAzimuthMax);
    s.elevation = rng.uniform(kElevationMin, kElevationMax);
    s.radius = kOrbitRadius;
    return s;
}

}  // namespace splatforge
