#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace splatforge;

namespace {

// R·S·Sᵀ·Rᵀ with explicit index loops, independent of Eigen products.
Mat3 covariance_by_loops(const Vec3& s, const Mat3& r) {
    Mat3 out = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) out(i, j) += r(i, k) * s[k] * s[k] * r(j, k);
    return out;
}

}  // namespace

TEST_SUITE("gauss-core") {

TEST_CASE("covariance of identity rotation") {
    CHECK(covariance_from_scale_rotation(Vec3(1, 1, 1), Quat(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));
    const Mat3 d = covariance_from_scale_rotation(Vec3(2, 1, 1), Quat(1, 0, 0, 0));
    CHECK(d.isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST_CASE("covariance under a quarter turn about z matches the dense product") {
    const Vec3 s(2, 1, 0.5);
    const Quat q = quat_from_axis_angle(Vec3::UnitZ(), kPi / 2);
    Mat3 r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3 expected = covariance_by_loops(s, r);
    const Mat3 sigma = covariance_from_scale_rotation(s, q);
    CHECK((sigma - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(sigma(0, 0) == doctest::Approx(1.0));
    CHECK(sigma(1, 1) == doctest::Approx(4.0));
    CHECK(sigma(2, 2) == doctest::Approx(0.25));
}

TEST_CASE("covariance is symmetric with det = (s1 s2 s3)^2") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 s(rng.uniform(0.01, 2), rng.uniform(0.01, 2), rng.uniform(0.01, 2));
        const Quat q = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const Mat3 sigma = covariance_from_scale_rotation(s, q);
        CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
        const double expected = std::pow(s.prod(), 2);
        CHECK(std::abs(sigma.determinant() - expected) <= 1e-9 * std::max(1.0, expected));
    }
}

TEST_CASE("covariance is rotation-equivariant") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 s(rng.uniform(0.01, 2), rng.uniform(0.01, 2), rng.uniform(0.01, 2));
        const Quat q1 = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const Quat q2 = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const Mat3 r1 = quat_to_matrix(q1);
        const Mat3 lhs = covariance_from_scale_rotation(s, quat_multiply(q1, q2));
        const Mat3 rhs = r1 * covariance_from_scale_rotation(s, q2) * r1.transpose();
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("covariance rejects non-finite input") {
    CHECK_THROWS_AS(covariance_from_scale_rotation(Vec3(NAN, 1, 1), Quat(1, 0, 0, 0)), InvalidParameter);
    CHECK_THROWS_AS(covariance_from_scale_rotation(Vec3(1, 1, 1), Quat(INFINITY, 0, 0, 0)), InvalidParameter);
    CHECK_THROWS_AS(covariance_from_scale_rotation(Vec3(1, 0, 1), Quat(1, 0, 0, 0)), InvalidParameter);
}

TEST_CASE("parameterization round-trips and keeps invariants") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 center(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Vec3 scale(rng.uniform(1e-3, 1), rng.uniform(1e-3, 1), rng.uniform(1e-3, 1));
        const Quat q = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        const double opacity = rng.uniform(0.01, 0.99);
        const Vec3 rgb(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1));
        const Gaussian3D g = Gaussian3D::make(center, scale, q, opacity, rgb);

        CHECK(std::abs(g.rotation().norm() - 1.0) <= 1e-6);
        CHECK((g.scale().array() > 0).all());
        CHECK(g.opacity() >= 0.0);
        CHECK(g.opacity() <= 1.0);
        CHECK(std::abs(g.opacity() - opacity) <= 1e-7);
        CHECK((g.scale() - scale).cwiseAbs().maxCoeff() <= 1e-7);
        CHECK((g.color() - rgb).cwiseAbs().maxCoeff() <= 1e-7);

        const Gaussian3D back = Gaussian3D::from_params(g.to_params());
        CHECK(back == g);
    }
}

TEST_CASE("raw quaternion is normalized on read") {
    Gaussian3D g;
    g.rotation_raw = Quat(2, 0, 0, 2);
    CHECK(std::abs(g.rotation().norm() - 1.0) <= 1e-12);
    g.opacity_logit = 1e6;
    CHECK(g.opacity() <= 1.0);
    g.opacity_logit = -1e6;
    CHECK(g.opacity() >= 0.0);
}

TEST_CASE("orbit cameras") {
    const auto front = camera_from_sample({0, 0, 2}, kDefaultFovY, 64);
    CHECK((front.position() - Vec3(0, 0, 2)).norm() < 1e-12);
    const auto back = camera_from_sample({180, 0, 2}, kDefaultFovY, 64);
    CHECK((back.position() - Vec3(0, 0, -2)).norm() < 1e-12);

    const auto side = camera_from_sample({90, 30, 2}, kDefaultFovY, 64);
    const double c30 = std::cos(deg_to_rad(30)), s30 = std::sin(deg_to_rad(30));
    const Vec3 expected(2 * c30 * std::sin(deg_to_rad(90)), 2 * s30, 2 * c30 * std::cos(deg_to_rad(90)));
    CHECK((side.position() - expected).norm() < 1e-12);
    CHECK(side.position().x() == doctest::Approx(1.732).epsilon(1e-3));
    CHECK(side.position().y() == doctest::Approx(1.0));

    // looks at the origin along +z in camera space
    CHECK((front.to_camera(Vec3::Zero()) - Vec3(0, 0, 2)).norm() < 1e-12);
    CHECK((front.project(front.to_camera(Vec3::Zero())) - Vec2(32, 32)).norm() < 1e-12);
}

TEST_CASE("azimuth is 360-periodic") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform(-180, 180);
        const double e = rng.uniform(-30, 30);
        const Vec3 p0 = orbit_position({a, e, 2});
        const Vec3 p1 = orbit_position({a + 360, e, 2});
        CHECK((p0 - p1).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("camera validation") {
    CHECK_THROWS_AS(Camera(Vec3(0, 0, 2), Vec3::Zero(), Vec3::UnitY(), 180.0, 64, 64), InvalidParameter);
    CHECK_THROWS_AS(Camera(Vec3(0, 0, 2), Vec3::Zero(), Vec3::UnitY(), 0.0, 64, 64), InvalidParameter);
    CHECK_THROWS_AS(Camera(Vec3::Zero(), Vec3::Zero(), Vec3::UnitY(), 49.1, 64, 64), InvalidParameter);
}

TEST_CASE("training camera sampling") {
    SUBCASE("golden first draw for seed 42") {
        Rng rng(42);
        const CameraSample s = sample_training_camera(rng);
        CHECK(s.azimuth == doctest::Approx(91.855991863634017).epsilon(1e-12));
        CHECK(s.elevation == doctest::Approx(8.3418836312818456).epsilon(1e-12));
        CHECK(s.radius == 2.0);
    }
    SUBCASE("ranges and statistics over 10000 draws") {
        Rng rng(1234);
        double min_az = 1e9, max_az = -1e9, mean_el = 0;
        for (int i = 0; i < 10000; ++i) {
            const CameraSample s = sample_training_camera(rng);
            min_az = std::min(min_az, s.azimuth);
            max_az = std::max(max_az, s.azimuth);
            CHECK(s.elevation >= -30.0);
            CHECK(s.elevation <= 30.0);
            mean_el += s.elevation / 10000.0;
        }
        CHECK(min_az >= -180.0);
        CHECK(max_az <= 180.0);
        CHECK(std::abs(mean_el) <= 1.5);
    }
    SUBCASE("deterministic given the seed") {
        Rng a(9), b(9);
        for (int i = 0; i < 10; ++i) {
            const auto sa = sample_training_camera(a);
            const auto sb = sample_training_camera(b);
            CHECK(sa.azimuth == sb.azimuth);
            CHECK(sa.elevation == sb.elevation);
        }
    }
}

}  // TEST_SUITE
