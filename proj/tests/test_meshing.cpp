#include "splatforge/meshing.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace splatforge;
using namespace splatforge::testing;

namespace {

TexturedMesh unit_cube() {
    TexturedMesh m;
    for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1 ? 0.3 : -0.3, i & 2 ? 0.3 : -0.3, i & 4 ? 0.3 : -0.3);
    // outward-wound faces
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& q : quads) {
        m.triangles.push_back({std::uint32_t(q[0]), std::uint32_t(q[1]), std::uint32_t(q[2])});
        m.triangles.push_back({std::uint32_t(q[0]), std::uint32_t(q[2]), std::uint32_t(q[3])});
    }
    for (const auto& v : m.vertices) m.normals.push_back(v.normalized());
    return m;
}

GaussianCloud red_ball() {
    Rng rng(12);
    GaussianCloud cloud;
    while (cloud.size() < 400) {
        const Vec3 d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (d.squaredNorm() > 1) continue;
        cloud.gaussians.push_back(
            Gaussian3D::make(0.35 * d, Vec3::Constant(0.09), Quat(1, 0, 0, 0), 0.9, Vec3(0.9, 0.1, 0.1)));
    }
    cloud.quantize_to_f32();
    return cloud;
}

}  // namespace

TEST_SUITE("meshing") {

TEST_CASE("density of a single Gaussian") {
    GaussianCloud cloud;
    cloud.gaussians.push_back(Gaussian3D::make(Vec3::Zero(), Vec3::Constant(0.1), Quat(1, 0, 0, 0), 0.7, Vec3::Ones()));
    const DensityGrid grid = local_density_query(cloud);
    CHECK(grid.n == 128);
    CHECK(grid.values.size() == 128u * 128u * 128u);
    const Vec3 p = grid.position(64, 64, 64);
    const double expected = cloud.gaussians[0].opacity() * std::exp(-0.5 * p.squaredNorm() / 0.01);
    CHECK(grid.at(64, 64, 64) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(grid.at(64, 64, 64) == doctest::Approx(0.7).epsilon(0.02));
    CHECK(grid.skipped_degenerate == 0);
}

TEST_CASE("density query equals the uncalled sum") {
    const GaussianCloud cloud = trained_like_cloud(100, 77);
    const DensityGrid fast = local_density_query(cloud);
    const DensityGrid slow = brute_force_density(cloud);
    CHECK(max_abs_difference(fast, slow) < 1e-5);
    for (double v : fast.values) CHECK_MESSAGE(v >= 0.0, "negative density");
}

TEST_CASE("density query skips collapsed Gaussians") {
    GaussianCloud cloud = trained_like_cloud(5, 1);
    cloud.gaussians[2].log_scale = Vec3(-30, -30, -30);
    const DensityGrid grid = local_density_query(cloud);
    CHECK(grid.skipped_degenerate == 1);
    for (double v : grid.values) CHECK_MESSAGE(std::isfinite(v), "non-finite density");
    CHECK_THROWS_AS(local_density_query(GaussianCloud{}), ContractViolation);
}

TEST_CASE("marching cubes on an empty field") {
    const DensityGrid zero(kDensityResolution);
    const TexturedMesh m = marching_cubes(zero, 1.0);
    CHECK(m.vertices.empty());
    CHECK(m.triangles.empty());
}

TEST_CASE("isosurface of an isotropic Gaussian is the level-set sphere") {
    const double sigma = 0.3;
    const DensityGrid grid = analytic_gaussian_grid(4.0, sigma);
    const TexturedMesh m = marching_cubes(grid, 1.0);
    REQUIRE(m.triangles.size() > 1000);
    const double radius = sigma * std::sqrt(2.0 * std::log(4.0));
    const double diagonal = 2.0 * std::sqrt(3.0) / 128.0;
    double worst = 0.0;
    for (const auto& v : m.vertices) worst = std::max(worst, std::abs(v.norm() - radius));
    MESSAGE("max radial error " << worst);
    CHECK(worst <= diagonal);

    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        CHECK(m.area(t) > 1e-12);
        const Vec3 centroid = (m.vertices[m.triangles[t][0]] + m.vertices[m.triangles[t][1]] +
                               m.vertices[m.triangles[t][2]]) / 3.0;
        CHECK(m.face_normal(t).dot(centroid) > 0.0);  // wound outward
    }
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
        CHECK(std::abs(m.normals[v].norm() - 1.0) < 1e-4);
        CHECK(m.normals[v].dot(m.vertices[v].normalized()) > 0.99);
    }

    // closed surface: every edge shared by exactly two triangles
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& tri : m.triangles)
        for (int k = 0; k < 3; ++k) {
            auto a = tri[k], b = tri[(k + 1) % 3];
            ++edges[{std::min(a, b), std::max(a, b)}];
        }
    for (const auto& [e, count] : edges) CHECK(count == 2);
}

TEST_CASE("marching cubes is invariant to a common scale of field and threshold") {
    const DensityGrid grid = local_density_query(trained_like_cloud(300, 4));
    const TexturedMesh base = marching_cubes(grid, 0.5);
    REQUIRE(!base.empty());
    for (double k : {2.0, 3.0, 0.37}) {
        DensityGrid scaled = grid;
        for (auto& v : scaled.values) v *= k;
        const TexturedMesh m = marching_cubes(scaled, 0.5 * k);
        REQUIRE(m.vertices.size() == base.vertices.size());
        REQUIRE(m.triangles == base.triangles);
        double worst = 0.0;
        for (std::size_t i = 0; i < m.vertices.size(); ++i)
            worst = std::max(worst, (m.vertices[i] - base.vertices[i]).norm());
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("cube unwraps into one chart per face") {
    const TexturedMesh cube = unit_cube();
    const auto charts = chart_segmentation(cube);
    CHECK(std::set<int>(charts.begin(), charts.end()).size() == 6);
    for (int f = 0; f < 6; ++f) CHECK(charts[2 * f] == charts[2 * f + 1]);
    UnwrapReport rep;
    const TexturedMesh uv = uv_unwrap(cube, 256, &rep);
    CHECK(rep.charts == 6);
    CHECK(uv.has_uvs());
    CHECK(uv.vertices.size() == 24);  // seams split every corner three ways
    for (std::size_t t = 0; t < uv.triangles.size(); ++t) CHECK(uv.uv_area(t) > 0.0);
}

TEST_CASE("sphere atlas is valid and well utilized") {
    const TexturedMesh sphere = marching_cubes(analytic_gaussian_grid(4.0, 0.3), 1.0);
    const int size = 1024;
    UnwrapReport rep;
    const TexturedMesh m = uv_unwrap(sphere, size, &rep);
    MESSAGE("charts " << rep.charts << ", utilization " << rep.utilization);
    CHECK(m.triangles.size() == sphere.triangles.size());
    CHECK(rep.utilization >= 0.30);
    for (std::size_t t = 0; t < m.triangles.size(); ++t) CHECK(m.uv_area(t) > 0.0);
    for (const auto& uv : m.uvs) {
        CHECK(uv.x() >= 0.0);
        CHECK(uv.x() <= 1.0);
        CHECK(uv.y() >= 0.0);
        CHECK(uv.y() <= 1.0);
    }
    // texel footprints (bounding texels of each triangle) never overlap across charts
    const auto charts = chart_segmentation(sphere);
    std::vector<int> owner(static_cast<std::size_t>(size) * size, -1);
    std::size_t conflicts = 0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
        for (auto v : m.triangles[t]) {
            x0 = std::min(x0, m.uvs[v].x() * size);
            x1 = std::max(x1, m.uvs[v].x() * size);
            y0 = std::min(y0, m.uvs[v].y() * size);
            y1 = std::max(y1, m.uvs[v].y() * size);
        }
        for (int y = static_cast<int>(std::floor(y0)); y <= static_cast<int>(std::floor(y1)); ++y)
            for (int x = static_cast<int>(std::floor(x0)); x <= static_cast<int>(std::floor(x1)); ++x) {
                int& o = owner[static_cast<std::size_t>(std::min(y, size - 1)) * size + std::min(x, size - 1)];
                if (o >= 0 && o != charts[t]) ++conflicts;
                o = charts[t];
            }
    }
    CHECK(conflicts == 0);
    CHECK(uv_unwrap(sphere, size).uvs == m.uvs);
}

TEST_CASE("back-projection of a uniformly colored cloud") {
    const GaussianCloud cloud = red_ball();
    const TexturedMesh mesh = uv_unwrap(marching_cubes(local_density_query(cloud), 1.0), 256);
    REQUIRE(!mesh.empty());
    BackprojectOptions opt;
    opt.texture_size = 256;
    opt.render_resolution = 128;
    CoverageReport cov;
    const TexturedMesh baked = color_backproject(mesh, cloud, opt, &cov);
    CHECK(baked.texture.width() == 256);
    CHECK(cov.seen > cov.surface_texels / 2);
    // renders are premultiplied over black, so a texel is the base color
    // scaled by the mean coverage it was seen with: chroma exact, value ≤ base
    double chroma = 0.0, excess = 0.0;
    std::vector<double> value_error;
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) {
            if (!cov.seen_mask[static_cast<std::size_t>(y) * 256 + x]) continue;
            const double r = baked.texture.at(x, y, 0);
            chroma = std::max({chroma, std::abs(baked.texture.at(x, y, 1) / r - 1.0 / 9.0),
                               std::abs(baked.texture.at(x, y, 2) / r - 1.0 / 9.0)});
            excess = std::max(excess, r - 0.9);
            value_error.push_back(0.9 - r);
        }
    std::nth_element(value_error.begin(), value_error.begin() + value_error.size() / 2, value_error.end());
    const double median = value_error[value_error.size() / 2];
    MESSAGE("chroma deviation " << chroma << ", median value error " << median);
    CHECK(chroma <= 1e-6);
    CHECK(excess <= 1e-9);
    CHECK(median <= 2e-2);
    CHECK(baked.vertices == mesh.vertices);
    CHECK(baked.uvs == mesh.uvs);

    opt.texture_size = 300;
    CHECK_THROWS_AS(color_backproject(mesh, cloud, opt), ContractViolation);
    opt.texture_size = 128;
    CHECK_THROWS_AS(color_backproject(mesh, cloud, opt), ContractViolation);
}

TEST_CASE("occluded texels are dilated and reported") {
    // a small sphere hidden inside a larger one is never visible
    const TexturedMesh outer = marching_cubes(analytic_gaussian_grid(4.0, 0.3), 1.0);
    const TexturedMesh inner = marching_cubes(analytic_gaussian_grid(4.0, 0.1), 1.0);
    TexturedMesh both = outer;
    const auto offset = static_cast<std::uint32_t>(both.vertices.size());
    both.vertices.insert(both.vertices.end(), inner.vertices.begin(), inner.vertices.end());
    both.normals.insert(both.normals.end(), inner.normals.begin(), inner.normals.end());
    for (auto tri : inner.triangles) {
        for (auto& v : tri) v += offset;
        both.triangles.push_back(tri);
    }
    const TexturedMesh mesh = uv_unwrap(both, 256);
    BackprojectOptions opt;
    opt.texture_size = 256;
    opt.render_resolution = 96;
    CoverageReport cov;
    const TexturedMesh baked = color_backproject(mesh, red_ball(), opt, &cov);
    CHECK(cov.seen < cov.surface_texels);
    CHECK(cov.dilated + cov.unfilled == cov.surface_texels - cov.seen);
    CHECK(cov.dilated > 0);
    for (double v : baked.texture.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("back-projection is invariant to a joint rotation of scene and cameras") {
    const GaussianCloud cloud = [] {
        GaussianCloud c = red_ball();
        for (std::size_t i = 0; i < c.size(); ++i)
            c.gaussians[i].set_color(Vec3(0.2 + 0.6 * (c.gaussians[i].center.x() + 0.35) / 0.7, 0.5,
                                          0.8 - 0.6 * (c.gaussians[i].center.y() + 0.35) / 0.7));
        c.quantize_to_f32();
        return c;
    }();
    const TexturedMesh mesh = uv_unwrap(marching_cubes(local_density_query(cloud), 1.0), 256);
    BackprojectOptions opt;
    opt.texture_size = 256;
    opt.render_resolution = 96;
    const TexturedMesh a = color_backproject(mesh, cloud, opt);

    const Quat q = quat_from_axis_angle(Vec3(0.3, 1.0, -0.2).normalized(), 0.7);
    BackprojectOptions rotated = opt;
    for (const Camera& c : backprojection_cameras(opt.render_resolution)) rotated.cameras.push_back(c.rotated(q));
    const TexturedMesh b = color_backproject(mesh.rotated(q), cloud.rotated(q), rotated);
    double worst = 0.0;
    std::size_t over = 0;
    for (std::size_t i = 0; i < a.texture.data().size(); ++i) {
        const double d = std::abs(a.texture.data()[i] - b.texture.data()[i]);
        worst = std::max(worst, d);
        if (d > 1e-3) ++over;
    }
    MESSAGE("worst texel difference " << worst << ", texels over 1e-3: " << over);
    CHECK(worst <= 1e-3);
}

}  // TEST_SUITE
