#include "splatforge/parallel.hpp"
#include "splatforge/rasterizer.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace splatforge;
using namespace splatforge::testing;

namespace {

Camera front_camera(int res) { return camera_from_sample({0, 0, 2}, kDefaultFovY, res); }

Gaussian3D isotropic(const Vec3& center, double scale, double opacity, const Vec3& rgb) {
    return Gaussian3D::make(center, Vec3::Constant(scale), Quat(1, 0, 0, 0), opacity, rgb);
}

}  // namespace

TEST_SUITE("rasterizer") {

TEST_CASE("empty cloud renders nothing") {
    const RenderOutput out = render(GaussianCloud{}, front_camera(64));
    for (double v : out.rgb.data()) CHECK(v == 0.0);
    for (double v : out.alpha.data()) CHECK(v == 0.0);
}

TEST_CASE("single splat peaks at its opacity") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(isotropic(Vec3::Zero(), 0.2, 0.8, Vec3(1, 0.5, 0.25)));
    const RenderOutput out = render(cloud, front_camera(64));
    CHECK(out.alpha.at(32, 32, 0) == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(out.rgb.at(32, 32, 0) == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(out.rgb.at(32, 32, 2) == doctest::Approx(0.2).epsilon(1e-3));
    for (double v : out.alpha.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("two coaxial splats follow the transmittance formula") {
    const double a = 0.6, b = 0.5;
    GaussianCloud cloud;
    cloud.gaussians.push_back(isotropic(Vec3(0, 0, -0.3), 0.15, b, Vec3(0, 0, 1)));  // back
    cloud.gaussians.push_back(isotropic(Vec3(0, 0, 0.3), 0.15, a, Vec3(1, 0, 0)));   // front
    const RenderOutput out = render(cloud, front_camera(64));
    CHECK(out.alpha.at(32, 32, 0) == doctest::Approx(a + (1 - a) * b).epsilon(1e-3));
    CHECK(out.rgb.at(32, 32, 0) == doctest::Approx(a).epsilon(1e-3));
    CHECK(out.rgb.at(32, 32, 2) == doctest::Approx((1 - a) * b).epsilon(1e-3));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    const GaussianCloud cloud = random_cloud(8, 1);
    const RenderOutput out = render(cloud, front_camera(64));
    const ParamGradients g = backward(out, ImageRGB(64, 64), ImageGray(64, 64));
    for (const auto& p : g.grads)
        for (double v : p) CHECK(v == 0.0);
}

TEST_CASE("color gradient equals accumulated blending weight") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(isotropic(Vec3(0.1, 0, 0), 0.2, 0.7, Vec3(0.3, 0.6, 0.2)));
    const RenderOutput out = render(cloud, front_camera(64));
    ImageRGB grad(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) grad.at(x, y, 1) = 1.0;
    const ParamGradients g = backward(out, grad);
    // one splat: the blending weight at each pixel is its alpha
    double weight_sum = 0.0;
    for (double v : out.alpha.data()) weight_sum += v;
    CHECK(g.grads[0][param::kColor + 1] == doctest::Approx(kShC0 * weight_sum).epsilon(1e-12));
    CHECK(g.grads[0][param::kColor + 0] == 0.0);
    CHECK(g.grads[0][param::kColor + 2] == 0.0);
}

TEST_CASE("backward matches central differences on random 8-splat scenes") {
    for (std::uint64_t seed : {101u, 202u, 303u}) {
        CAPTURE(seed);
        const GaussianCloud cloud = random_cloud(8, seed);
        Rng rng(seed + 1);
        const Camera cam = camera_from_sample(sample_training_camera(rng), kDefaultFovY, 64);
        const auto grad_rgb = random_image<3>(64, 64, seed + 2);
        const auto grad_a = random_image<1>(64, 64, seed + 3);
        const GradientCheckResult r = check_render_gradients(cloud, cam, grad_rgb, grad_a);
        CHECK(r.checked == 8 * kParamsPerGaussian);
        CHECK(r.failed == 0);
        MESSAGE("worst relative error " << r.worst_relative);
    }
}

TEST_CASE("gaussians that touch no pixel get zero gradient") {
    GaussianCloud cloud = random_cloud(4, 9);
    cloud.gaussians.push_back(isotropic(Vec3(0, 0, 5), 0.1, 0.5, Vec3(0.5, 0.5, 0.5)));   // behind camera
    cloud.gaussians.push_back(isotropic(Vec3(40, 0, 0), 0.1, 0.5, Vec3(0.5, 0.5, 0.5)));  // off screen
    const RenderOutput out = render(cloud, front_camera(64));
    CHECK(out.diagnostics.culled_near == 1);
    const ParamGradients g = backward(out, random_image<3>(64, 64, 4), random_image<1>(64, 64, 5));
    for (std::size_t i : {4u, 5u}) {
        for (double v : g.grads[i]) CHECK(v == 0.0);
        CHECK(g.visible[i] == 0);
    }
    CHECK(g.all_finite());
}

TEST_CASE("degenerate projected covariance is skipped and counted") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(
        Gaussian3D::make(Vec3::Zero(), Vec3(1e3, 1e-6, 1e-6), Quat(1, 0, 0, 0), 0.5, Vec3(1, 1, 1)));
    cloud.gaussians.push_back(isotropic(Vec3::Zero(), 0.1, 0.5, Vec3(1, 1, 1)));
    const RenderOutput out = render(cloud, front_camera(64));
    CHECK(out.diagnostics.skipped_degenerate == 1);
    CHECK(out.diagnostics.visible == 1);
    CHECK(out.alpha.at(32, 32, 0) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("resolution mismatch in backward is a contract violation") {
    const RenderOutput out = render(random_cloud(3, 2), front_camera(64));
    CHECK_THROWS_AS(backward(out, ImageRGB(32, 32)), ContractViolation);
    CHECK_THROWS_AS(backward(out, ImageRGB(64, 64), ImageGray(32, 64)), ContractViolation);
    CHECK_THROWS_AS(backward(RenderOutput{}, ImageRGB(64, 64)), ContractViolation);
}

TEST_CASE("alpha is monotone in each opacity") {
    // Early termination at transmittance 1e-4 bounds how far any pixel can
    // move against the trend.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        GaussianCloud cloud = random_cloud(12, 500 + seed);
        const Camera cam = front_camera(64);
        const RenderOutput before = render(cloud, cam);
        Rng rng(seed);
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, 11));
        cloud.gaussians[idx].opacity_logit += rng.uniform(0.1, 3.0);
        const RenderOutput after = render(cloud, cam);
        for (std::size_t p = 0; p < before.alpha.data().size(); ++p)
            CHECK(after.alpha.data()[p] >= before.alpha.data()[p] - kMinTransmittance);
    }
}

TEST_CASE("render and backward are bit-identical across worker counts") {
    const GaussianCloud cloud = random_cloud(200, 77);
    const Camera cam = camera_from_sample({30, 10, 2}, kDefaultFovY, 128);
    const auto grad_rgb = random_image<3>(128, 128, 1);
    set_worker_count(1);
    const RenderOutput a = render(cloud, cam);
    const ParamGradients ga = backward(a, grad_rgb);
    set_worker_count(4);
    const RenderOutput b = render(cloud, cam);
    const ParamGradients gb = backward(b, grad_rgb);
    set_worker_count(0);
    CHECK(a.rgb == b.rgb);
    CHECK(a.alpha == b.alpha);
    CHECK(ga.grads == gb.grads);
}

TEST_CASE("rendering is consistent under joint rotation about the up axis") {
    const GaussianCloud cloud = random_cloud(40, 31);
    for (double azimuth : {30.0, 90.0, -135.0}) {
        const Quat rot = quat_from_axis_angle(Vec3::UnitY(), deg_to_rad(azimuth));
        const RenderOutput turned = render(cloud.rotated(rot), camera_from_sample({azimuth, 0, 2}, kDefaultFovY, 64));
        const RenderOutput ref = render(cloud, front_camera(64));
        double worst = 0.0;
        for (std::size_t p = 0; p < ref.rgb.data().size(); ++p)
            worst = std::max(worst, std::abs(ref.rgb.data()[p] - turned.rgb.data()[p]));
        for (std::size_t p = 0; p < ref.alpha.data().size(); ++p)
            worst = std::max(worst, std::abs(ref.alpha.data()[p] - turned.alpha.data()[p]));
        CHECK(worst <= 1e-3);
    }
}

}  // TEST_SUITE
