#include "splatforge/scenes.hpp"

#include "splatforge/random.hpp"
#include "splatforge/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace splatforge {

namespace {

Quat random_rotation(Rng& rng) {
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized();
}

Vec3 clamp01(const Vec3& c) { return c.cwiseMax(0.02).cwiseMin(0.98); }

// Disc-shaped splat lying in the tangent plane of `normal`.
Gaussian3D surfel(const Vec3& center, const Vec3& normal, double radius, double thickness, double opacity,
                  const Vec3& rgb) {
    const Eigen::Quaterniond e = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized());
    const Quat q(e.w(), e.x(), e.y(), e.z());
    return Gaussian3D::make(center, Vec3(radius, radius, thickness), q, opacity, clamp01(rgb));
}

GaussianCloud sphere_shell(Rng& rng) {
    GaussianCloud cloud;
    const int n = 220;
    const double radius = 0.45;
    const Mat3 spin = quat_to_matrix(random_rotation(rng));
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(1.0 - y * y);
        const Vec3 dir = spin * Vec3(r * std::cos(golden * i), y, r * std::sin(golden * i));
        const Vec3 rgb = Vec3(0.5, 0.5, 0.5) + 0.38 * dir + Vec3::Constant(rng.uniform(-0.04, 0.04));
        cloud.gaussians.push_back(surfel(radius * dir, dir, 0.085, 0.02, 0.95, rgb));
    }
    return cloud;
}

GaussianCloud box(Rng& rng) {
    GaussianCloud cloud;
    const double half = 0.35;
    const int per_side = 7;
    const Vec3 face_colors[6] = {{0.85, 0.2, 0.2}, {0.2, 0.75, 0.3}, {0.2, 0.35, 0.85},
                                 {0.9, 0.8, 0.2},  {0.7, 0.3, 0.8},  {0.2, 0.8, 0.8}};
    for (int face = 0; face < 6; ++face) {
        const int axis = face / 2;
        const double sign = face % 2 == 0 ? 1.0 : -1.0;
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        Vec3 normal = Vec3::Zero();
        normal[axis] = sign;
        for (int j = 0; j < per_side; ++j)
            for (int i = 0; i < per_side; ++i) {
                Vec3 p = Vec3::Zero();
                p[axis] = sign * half;
                p[u] = -half + (i + 0.5) * (2 * half / per_side) + rng.uniform(-0.01, 0.01);
                p[v] = -half + (j + 0.5) * (2 * half / per_side) + rng.uniform(-0.01, 0.01);
                const Vec3 rgb = face_colors[face] + Vec3::Constant(rng.uniform(-0.05, 0.05));
                cloud.gaussians.push_back(surfel(p, normal, 0.06, 0.015, 0.95, rgb));
            }
    }
    return cloud;
}

// Two ellipsoidal shells of surfels, so each blob has a crisp opaque surface.
GaussianCloud two_blob(Rng& rng) {
    GaussianCloud cloud;
    struct Blob {
        Vec3 center;
        Vec3 radii;
        int count;
        Vec3 color;
    };
    const Blob blobs[2] = {{Vec3(-0.28, 0.03, 0.0), Vec3(0.3, 0.27, 0.28), 150, Vec3(0.9, 0.45, 0.2)},
                           {Vec3(0.3, -0.05, 0.05), Vec3(0.24, 0.26, 0.23), 120, Vec3(0.15, 0.55, 0.85)}};
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (const Blob& b : blobs)
        for (int i = 0; i < b.count; ++i) {
            const double y = 1.0 - 2.0 * (i + 0.5) / b.count;
            const double r = std::sqrt(1.0 - y * y);
            const Vec3 d(r * std::cos(golden * i), y, r * std::sin(golden * i));
            const Vec3 rgb = b.color + 0.15 * d + Vec3::Constant(rng.uniform(-0.04, 0.04));
            cloud.gaussians.push_back(
                surfel(b.center + b.radii.cwiseProduct(d), d.cwiseQuotient(b.radii), 0.07, 0.02, 0.95, rgb));
        }
    return cloud;
}

}  // namespace

std::vector<std::string> scene_ids() { return {"sphere-shell", "box", "two-blob"}; }

SyntheticScene make_scene(const std::string& id, std::uint64_t seed) {
    Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
    SyntheticScene scene;
    scene.id = id;
    scene.seed = seed;
    if (id == "sphere-shell") scene.cloud = sphere_shell(rng);
    else if (id == "box") scene.cloud = box(rng);
    else if (id == "two-blob") scene.cloud = two_blob(rng);
    else throw InvalidParameter("unknown scene: " + id);
    scene.cloud.quantize_to_f32();
    return scene;
}

ImageRGBA render_ground_truth(const SyntheticScene& scene, const CameraSample& pose, int resolution, double fov_y) {
    return render(scene.cloud, camera_from_sample(pose, fov_y, resolution)).rgba();
}

OracleGuidance::OracleGuidance(std::shared_ptr<const SyntheticScene> scene, double fov_y)
    : scene_(std::move(scene)), fov_y_(fov_y) {
    if (!scene_) throw InvalidParameter("OracleGuidance: null scene");
}

ImageRGB OracleGuidance::target(const CameraSample& pose, int resolution) {
    {
        std::lock_guard lock(mutex_);
        for (const auto& e : recent_)
            if (e.resolution == resolution && e.pose.azimuth == pose.azimuth && e.pose.elevation == pose.elevation &&
                e.pose.radius == pose.radius)
                return e.image;
    }
    ImageRGB image = render(scene_->cloud, camera_from_sample(pose, fov_y_, resolution)).rgb;
    std::lock_guard lock(mutex_);
    if (recent_.size() >= 4) recent_.erase(recent_.begin());
    recent_.push_back({pose, resolution, image});
    return image;
}

ImageRGB OracleRefiner::refine(const ImageRGB& noisy, double, const CameraSample& pose, std::uint64_t) {
    if (noisy.width() != noisy.height()) throw ContractViolation("OracleRefiner: renders must be square");
    return render(scene_->cloud, camera_from_sample(pose, fov_y_, noisy.width())).rgb;
}

GuidanceResult OracleGuidance::guide(const ImageRGB& current, const CameraSample& pose, int /*timestep*/) {
    const ImageRGB gt = target(pose, current.width());
    if (!gt.same_size(current)) throw ContractViolation("OracleGuidance: renders must be square");
    GuidanceResult out;
    out.residual = ImageRGB(current.width(), current.height());
    auto r = out.residual.data();
    auto a = current.data();
    auto b = gt.data();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] - b[i];
    out.weight = 1.0;
    return out;
}

std::optional<ImageRGB> OracleGuidance::target_image(const CameraSample& pose, int resolution) {
    return target(pose, resolution);
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_size(b)) throw ContractViolation("psnr: image sizes differ");
    double se = 0.0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    const double mse = std::max(se / static_cast<double>(x.size()), 1e-10);
    return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splatforge
