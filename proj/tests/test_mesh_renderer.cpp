#include "splatforge/mesh.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace splatforge;
using namespace splatforge::testing;

namespace {

// Quad in the z = 0 plane spanning exactly the frustum of the front camera.
TexturedMesh frame_filling_quad(const ImageRGBA& texture) {
    const double half_h = 2.0 * std::tan(0.5 * deg_to_rad(kDefaultFovY));
    const double half_w = half_h;  // square frames
    TexturedMesh m;
    m.vertices = {Vec3(-half_w, -half_h, 0), Vec3(half_w, -half_h, 0), Vec3(half_w, half_h, 0),
                  Vec3(-half_w, half_h, 0)};
    m.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    m.normals.assign(4, Vec3::UnitZ());
    m.triangles = {Triangle{0, 1, 2}, Triangle{0, 2, 3}};
    m.texture = texture;
    return m;
}

}  // namespace

TEST_SUITE("rasterizer") {

TEST_CASE("frame-filling quad reproduces the bilinearly resampled texture") {
    const auto texture = random_image<4>(24, 24, 3, 0.0, 1.0);
    const TexturedMesh quad = frame_filling_quad(texture);
    const Camera cam = camera_from_sample({0, 0, 2}, kDefaultFovY, 64);
    const MeshRenderOutput out = render_mesh(quad, cam);
    double worst = 0.0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            CHECK(out.alpha.at(x, y, 0) == 1.0);
            // pixel (x, y) sees uv (x/64, 1 - y/64): texel coordinate (x/64·24, y/64·24)
            double expected[4];
            sample_bilinear(texture, x / 64.0 * 24.0, y / 64.0 * 24.0, expected);
            for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(out.rgb.at(x, y, c) - expected[c]));
        }
    CHECK(worst < 1e-9);
}

TEST_CASE("back-facing mesh renders empty") {
    const TexturedMesh quad = frame_filling_quad(ImageRGBA(4, 4, 1.0));
    const MeshRenderOutput out = render_mesh(quad, camera_from_sample({180, 0, 2}, kDefaultFovY, 64));
    for (double v : out.alpha.data()) CHECK(v == 0.0);
    for (double v : out.rgb.data()) CHECK(v == 0.0);
}

TEST_CASE("constant texture gives the constant color on covered pixels") {
    ImageRGBA tex(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            tex.at(x, y, 0) = 0.25;
            tex.at(x, y, 1) = 0.5;
            tex.at(x, y, 2) = 0.75;
            tex.at(x, y, 3) = 1.0;
        }
    TexturedMesh quad = frame_filling_quad(tex);
    for (auto& v : quad.vertices) v *= 0.5;
    const MeshRenderOutput out = render_mesh(quad, camera_from_sample({20, 10, 2}, kDefaultFovY, 64));
    int covered = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (out.alpha.at(x, y, 0) == 0.0) continue;
            ++covered;
            CHECK(out.rgb.at(x, y, 0) == doctest::Approx(0.25).epsilon(1e-12));
            CHECK(out.rgb.at(x, y, 1) == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(out.rgb.at(x, y, 2) == doctest::Approx(0.75).epsilon(1e-12));
        }
    CHECK(covered > 100);
}

TEST_CASE("texel gradients match finite differences") {
    const auto texture = random_image<4>(8, 8, 5, 0.0, 1.0);
    TexturedMesh quad = frame_filling_quad(texture);
    for (auto& v : quad.vertices) v *= 0.7;
    const Camera cam = camera_from_sample({25, -10, 2}, kDefaultFovY, 64);
    const auto grad = random_image<3>(64, 64, 6);
    const ImageRGB analytic = backward_texture(render_mesh(quad, cam), grad);
    CHECK(analytic.width() == 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) {
                auto loss = [&](double v) {
                    TexturedMesh m = quad;
                    m.texture.at(x, y, c) = v;
                    return dot(grad, render_mesh(m, cam).rgb);
                };
                const double numeric = central_difference(loss, texture.at(x, y, c), 1e-4);
                CHECK(gradient_close(analytic.at(x, y, c), numeric));
            }
}

TEST_CASE("mesh rendering requires an atlas") {
    TexturedMesh quad = frame_filling_quad(ImageRGBA(4, 4, 1.0));
    quad.uvs.clear();
    CHECK_THROWS_AS(render_mesh(quad, camera_from_sample({0, 0, 2}, kDefaultFovY, 64)), ContractViolation);
}

}  // TEST_SUITE
