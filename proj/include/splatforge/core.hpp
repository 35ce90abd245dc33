#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatforge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4d;

// ---------------------------------------------------------------------------
// Error taxonomy. Every module throws one of these; the CLI maps them to exit
// codes and messages.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain numeric input.
class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition (resolution mismatch, missing UVs, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// A guidance plugin could not produce a residual.
class GuidanceUnavailable : public Error {
public:
    using Error::Error;
};

/// Contrastive classification or triplet loss had nothing to work with.
class NoSamples : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (at byte " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix for a unit quaternion (w, x, y, z).
Mat3 quat_to_matrix(const Quat& q);

/// Hamilton product a*b.
Quat quat_multiply(const Quat& a, const Quat& b);

/// Quaternion for a rotation of `angle_rad` about `axis` (need not be unit).
Quat quat_from_axis_angle(const Vec3& axis, double angle_rad);

/// Σ = R·diag(s)²·Rᵀ. Throws InvalidParameter on non-finite input or
/// non-positive scale.
Mat3 covariance_from_scale_rotation(const Vec3& scale, const Quat& rotation);

}  // namespace splatforge
