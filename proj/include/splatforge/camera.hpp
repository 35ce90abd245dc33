#pragma once

#include "splatforge/core.hpp"
#include "splatforge/random.hpp"

namespace splatforge {

inline constexpr double kOrbitRadius = 2.0;
inline constexpr double kDefaultFovY = 49.1;
inline constexpr double kAzimuthMin = -180.0;
inline constexpr double kAzimuthMax = 180.0;
inline constexpr double kElevationMin = -30.0;
inline constexpr double kElevationMax = 30.0;

/// Orbit pose relative to the reference (front) camera at azimuth 0,
/// elevation 0.
struct CameraSample {
    double azimuth = 0.0;    // degrees
    double elevation = 0.0;  // degrees
    double radius = kOrbitRadius;
};

/// Pinhole camera. World is y-up and right-handed; camera space is x right,
/// y up, z along the viewing direction. Pixel (i, j) samples image-plane
/// coordinate (i, j) with the principal point at (width/2, height/2).
class Camera {
public:
    Camera(const Vec3& position, const Vec3& target, const Vec3& up, double fov_y_deg, int width, int height);

    const Vec3& position() const { return position_; }
    const Vec3& target() const { return target_; }
    const Vec3& up() const { return up_; }
    double fov_y() const { return fov_y_; }
    int width() const { return width_; }
    int height() const { return height_; }

    /// Rows are the camera right, up and forward axes in world coordinates.
    const Mat3& world_to_camera() const { return rotation_; }
    double focal() const { return focal_; }
    double cx() const { return 0.5 * width_; }
    double cy() const { return 0.5 * height_; }

    Vec3 to_camera(const Vec3& world) const { return rotation_ * (world - position_); }

    /// Pixel coordinates of a camera-space point (z > 0 assumed).
    Vec2 project(const Vec3& cam) const {
        return {cx() + focal_ * cam.x() / cam.z(), cy() - focal_ * cam.y() / cam.z()};
    }

    /// Same camera with a different resolution.
    Camera with_resolution(int width, int height) const;

    /// Rigidly rotates position, target and up about the world origin.
    Camera rotated(const Quat& q) const;

private:
    Vec3 position_;
    Vec3 target_;
    Vec3 up_;
    double fov_y_;
    int width_;
    int height_;
    Mat3 rotation_;
    double focal_;
};

/// World position of an orbit sample: r·(cos e·sin a, sin e, cos e·cos a).
Vec3 orbit_position(const CameraSample& sample);

Camera camera_from_sample(const CameraSample& sample, double fov_y_deg, int resolution);

/// Azimuth uniform in [-180, 180], elevation uniform in [-30, 30], radius 2.
CameraSample sample_training_camera(Rng& rng);

}  // namespace splatforge
