#include "splatforge/meshing.hpp"

#include "mc_tables.hpp"
#include "splatforge/parallel.hpp"
#include "splatforge/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace splatforge {

// --- density -------------------------------------------------------------------

namespace {

struct DensityTerm {
    Vec3 center;
    Mat3 inv_cov;
    double alpha;
    Vec3 half_extent;
};

}  // namespace

DensityGrid local_density_query(const GaussianCloud& cloud) {
    if (cloud.empty()) throw ContractViolation("local_density_query: empty cloud");
    DensityGrid grid(kDensityResolution);

    std::vector<DensityTerm> terms;
    terms.reserve(cloud.size());
    for (const auto& g : cloud.gaussians) {
        const Vec3 s = g.scale();
        if (!s.allFinite() || s.minCoeff() < 1e-7 || !g.center.allFinite()) {
            ++grid.skipped_degenerate;
            continue;
        }
        const Mat3 r = quat_to_matrix(g.rotation());
        const Mat3 inv_cov = r * s.array().square().inverse().matrix().asDiagonal() * r.transpose();
        const Mat3 cov = g.covariance();
        if (!inv_cov.allFinite()) {
            ++grid.skipped_degenerate;
            continue;
        }
        const Vec3 half(kDensityCullSigma * std::sqrt(cov(0, 0)), kDensityCullSigma * std::sqrt(cov(1, 1)),
                        kDensityCullSigma * std::sqrt(cov(2, 2)));
        terms.push_back({g.center, inv_cov, g.opacity(), half});
    }

    // Per-block candidate lists, in cloud order.
    constexpr int B = kDensityBlocks;
    std::vector<std::vector<std::uint32_t>> blocks(static_cast<std::size_t>(B) * B * B);
    for (std::size_t t = 0; t < terms.size(); ++t) {
        std::array<std::array<bool, B>, 3> hit{};
        for (int axis = 0; axis < 3; ++axis)
            for (int b = 0; b < B; ++b) {
                const double lo = grid.coord(b * kDensityBlockSize);
                const double hi = grid.coord(b * kDensityBlockSize + kDensityBlockSize - 1);
                hit[axis][b] = terms[t].center[axis] + terms[t].half_extent[axis] >= lo &&
                               terms[t].center[axis] - terms[t].half_extent[axis] <= hi;
            }
        for (int bz = 0; bz < B; ++bz) {
            if (!hit[2][bz]) continue;
            for (int by = 0; by < B; ++by) {
                if (!hit[1][by]) continue;
                for (int bx = 0; bx < B; ++bx)
                    if (hit[0][bx])
                        blocks[(static_cast<std::size_t>(bz) * B + by) * B + bx].push_back(
                            static_cast<std::uint32_t>(t));
            }
        }
    }

    parallel_for(blocks.size(), [&](std::size_t b) {
        const auto& list = blocks[b];
        if (list.empty()) return;
        const int bx = static_cast<int>(b % B), by = static_cast<int>((b / B) % B), bz = static_cast<int>(b / (B * B));
        for (int z = bz * kDensityBlockSize; z < (bz + 1) * kDensityBlockSize; ++z)
            for (int y = by * kDensityBlockSize; y < (by + 1) * kDensityBlockSize; ++y)
                for (int x = bx * kDensityBlockSize; x < (bx + 1) * kDensityBlockSize; ++x) {
                    const Vec3 p = grid.position(x, y, z);
                    double acc = 0.0;
                    for (std::uint32_t t : list) {
                        const Vec3 d = p - terms[t].center;
                        acc += terms[t].alpha * std::exp(-0.5 * d.dot(terms[t].inv_cov * d));
                    }
                    grid.at(x, y, z) = acc;
                }
    });
    return grid;
}

// --- marching cubes ------------------------------------------------------------------

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

Vec3 grid_gradient(const DensityGrid& g, int x, int y, int z) {
    auto diff = [&](int axis) {
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        lo[axis] = std::max(0, lo[axis] - 1);
        hi[axis] = std::min(g.n - 1, hi[axis] + 1);
        return (g.at(hi[0], hi[1], hi[2]) - g.at(lo[0], lo[1], lo[2])) / ((hi[axis] - lo[axis]) * g.spacing());
    };
    return {diff(0), diff(1), diff(2)};
}

}  // namespace

TexturedMesh marching_cubes(const DensityGrid& grid, double threshold) {
    TexturedMesh mesh;
    if (grid.n < 2 || grid.values.empty()) return mesh;
    const auto [mn, mx] = std::minmax_element(grid.values.begin(), grid.values.end());
    if (!(threshold > *mn && threshold < *mx)) return mesh;

    const int n = grid.n;
    std::vector<std::int32_t> edge_vertex(static_cast<std::size_t>(n) * n * n * 3, -1);
    std::vector<Vec3> gradients;

    auto vertex_on_edge = [&](int x, int y, int z, int edge) {
        const int* a = kCorner[kEdgeCorners[edge][0]];
        const int* b = kCorner[kEdgeCorners[edge][1]];
        int lo[3] = {x + a[0], y + a[1], z + a[2]};
        int hi[3] = {x + b[0], y + b[1], z + b[2]};
        int axis = 0;
        while (lo[axis] == hi[axis]) ++axis;
        if (lo[axis] > hi[axis]) std::swap(lo, hi);
        const std::size_t key = grid.index(lo[0], lo[1], lo[2]) * 3 + axis;
        if (edge_vertex[key] >= 0) return edge_vertex[key];
        const double v0 = grid.at(lo[0], lo[1], lo[2]);
        const double v1 = grid.at(hi[0], hi[1], hi[2]);
        const double t = (threshold - v0) / (v1 - v0);
        const Vec3 p0 = grid.position(lo[0], lo[1], lo[2]);
        const Vec3 p1 = grid.position(hi[0], hi[1], hi[2]);
        const Vec3 g0 = grid_gradient(grid, lo[0], lo[1], lo[2]);
        const Vec3 g1 = grid_gradient(grid, hi[0], hi[1], hi[2]);
        const auto id = static_cast<std::int32_t>(mesh.vertices.size());
        mesh.vertices.push_back(p0 + t * (p1 - p0));
        gradients.push_back(g0 + t * (g1 - g0));
        edge_vertex[key] = id;
        return id;
    };

    for (int z = 0; z + 1 < n; ++z)
        for (int y = 0; y + 1 < n; ++y)
            for (int x = 0; x + 1 < n; ++x) {
                int cube = 0;
                for (int c = 0; c < 8; ++c)
                    if (grid.at(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]) < threshold) cube |= 1 << c;
                if (mc::kEdgeTable[cube] == 0) continue;
                const int* tri = mc::kTriTable[cube];
                for (int k = 0; tri[k] != -1; k += 3) {
                    const auto i0 = vertex_on_edge(x, y, z, tri[k]);
                    const auto i1 = vertex_on_edge(x, y, z, tri[k + 1]);
                    const auto i2 = vertex_on_edge(x, y, z, tri[k + 2]);
                    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
                    mesh.triangles.push_back(
                        {static_cast<std::uint32_t>(i0), static_cast<std::uint32_t>(i1), static_cast<std::uint32_t>(i2)});
                }
            }

    // Orient by the outward (decreasing-density) direction, drop slivers.
    std::vector<Triangle> kept;
    kept.reserve(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        Triangle tri = mesh.triangles[t];
        const Vec3 f = mesh.face_normal(t);
        if (0.5 * f.norm() <= 1e-12) continue;
        const Vec3 outward = -(gradients[tri[0]] + gradients[tri[1]] + gradients[tri[2]]);
        if (f.dot(outward) < 0.0) std::swap(tri[1], tri[2]);
        kept.push_back(tri);
    }

    // Compact to referenced vertices, preserving creation order.
    std::vector<std::int32_t> remap(mesh.vertices.size(), -1);
    for (const auto& tri : kept)
        for (auto v : tri) remap[v] = 0;
    TexturedMesh out;
    std::vector<Vec3> face_sum;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (remap[v] < 0) continue;
        remap[v] = static_cast<std::int32_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        out.normals.push_back(-gradients[v]);
    }
    for (auto tri : kept) {
        for (auto& v : tri) v = static_cast<std::uint32_t>(remap[v]);
        out.triangles.push_back(tri);
    }
    face_sum.assign(out.vertices.size(), Vec3::Zero());
    for (std::size_t t = 0; t < out.triangles.size(); ++t)
        for (auto v : out.triangles[t]) face_sum[v] += out.face_normal(t);
    for (std::size_t v = 0; v < out.normals.size(); ++v) {
        Vec3& nrm = out.normals[v];
        if (nrm.norm() < 1e-12) nrm = face_sum[v];
        nrm = nrm.norm() > 0.0 ? Vec3(nrm.normalized()) : Vec3::UnitY();
    }
    return out;
}

// --- UV unwrap ---------------------------------------------------------------------

namespace {

int normal_bin(const Vec3& f) {
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(f[a]) > std::abs(f[axis])) axis = a;
    return 2 * axis + (f[axis] < 0.0 ? 1 : 0);
}

Vec2 project_to_bin(const Vec3& p, int bin) {
    const int axis = bin / 2;
    const double sign = bin % 2 == 0 ? 1.0 : -1.0;
    return {sign * p[(axis + 1) % 3], p[(axis + 2) % 3]};
}

struct ChartRect {
    Vec2 lo, hi;  // projected bounds, world units
    Vec2 offset;  // packed lower-left corner, UV units (gutter included)
};

// Shelf packing at a given world→UV scale; false if it does not fit.
bool shelf_pack(std::vector<ChartRect>& rects, const std::vector<std::size_t>& order, double scale, double gutter) {
    double x = 0.0, y = 0.0, row = 0.0;
    for (std::size_t c : order) {
        const Vec2 size = (rects[c].hi - rects[c].lo) * scale + Vec2::Constant(2.0 * gutter);
        if (size.x() > 1.0) return false;
        if (x + size.x() > 1.0) {
            y += row;
            x = 0.0;
            row = 0.0;
        }
        rects[c].offset = Vec2(x, y);
        x += size.x();
        row = std::max(row, size.y());
    }
    return y + row <= 1.0;
}

}  // namespace

std::vector<int> chart_segmentation(const TexturedMesh& mesh) {
    const std::size_t nt = mesh.triangles.size();
    std::vector<int> bin(nt);
    for (std::size_t t = 0; t < nt; ++t) bin[t] = normal_bin(mesh.face_normal(t));

    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edge_tris;
    auto edge_key = [](std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | b;
    };
    for (std::size_t t = 0; t < nt; ++t)
        for (int k = 0; k < 3; ++k)
            edge_tris[edge_key(mesh.triangles[t][k], mesh.triangles[t][(k + 1) % 3])].push_back(
                static_cast<std::uint32_t>(t));

    std::vector<int> chart(nt, -1);
    int next = 0;
    std::vector<std::uint32_t> stack;
    for (std::size_t seed = 0; seed < nt; ++seed) {
        if (chart[seed] >= 0) continue;
        chart[seed] = next;
        stack.assign(1, static_cast<std::uint32_t>(seed));
        while (!stack.empty()) {
            const std::uint32_t t = stack.back();
            stack.pop_back();
            for (int k = 0; k < 3; ++k)
                for (std::uint32_t o : edge_tris[edge_key(mesh.triangles[t][k], mesh.triangles[t][(k + 1) % 3])])
                    if (chart[o] < 0 && bin[o] == bin[t]) {
                        chart[o] = next;
                        stack.push_back(o);
                    }
        }
        ++next;
    }
    return chart;
}

TexturedMesh uv_unwrap(const TexturedMesh& mesh, int texture_size, UnwrapReport* report) {
    if (texture_size < 8) throw InvalidParameter("uv_unwrap: texture too small");
    TexturedMesh out;
    out.texture = mesh.texture;
    if (mesh.triangles.empty()) {
        if (report) *report = {};
        return out;
    }
    const std::vector<int> chart = chart_segmentation(mesh);
    const int nc = *std::max_element(chart.begin(), chart.end()) + 1;
    std::vector<int> chart_bin(nc, 0);
    std::vector<ChartRect> rects(nc, {Vec2::Constant(1e300), Vec2::Constant(-1e300), Vec2::Zero()});
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const int c = chart[t];
        chart_bin[c] = normal_bin(mesh.face_normal(t));
        for (auto v : mesh.triangles[t]) {
            const Vec2 p = project_to_bin(mesh.vertices[v], chart_bin[c]);
            rects[c].lo = rects[c].lo.cwiseMin(p);
            rects[c].hi = rects[c].hi.cwiseMax(p);
        }
    }

    std::vector<std::size_t> order(nc);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rects[a].hi.y() - rects[a].lo.y() > rects[b].hi.y() - rects[b].lo.y();
    });
    const double gutter = 2.0 / texture_size;
    double max_extent = 1e-12;
    for (const auto& r : rects) max_extent = std::max(max_extent, (r.hi - r.lo).maxCoeff());
    double lo = 0.0, hi = 1.0 / max_extent;
    if (!shelf_pack(rects, order, 0.0, gutter))
        throw ContractViolation("uv_unwrap: too many charts for the atlas resolution");
    for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (shelf_pack(rects, order, mid, gutter)) lo = mid;
        else hi = mid;
    }
    const double scale = lo;
    shelf_pack(rects, order, scale, gutter);

    // Split vertices per chart, in triangle order.
    std::unordered_map<std::uint64_t, std::uint32_t> ids;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const int c = chart[t];
        Triangle tri{};
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t v = mesh.triangles[t][k];
            const std::uint64_t key = (static_cast<std::uint64_t>(c) << 32) | v;
            auto it = ids.find(key);
            if (it == ids.end()) {
                const auto id = static_cast<std::uint32_t>(out.vertices.size());
                it = ids.emplace(key, id).first;
                out.vertices.push_back(mesh.vertices[v]);
                out.normals.push_back(mesh.normals.empty() ? Vec3::UnitY() : mesh.normals[v]);
                const Vec2 p = project_to_bin(mesh.vertices[v], chart_bin[c]);
                out.uvs.push_back(rects[c].offset + Vec2::Constant(gutter) + (p - rects[c].lo) * scale);
            }
            tri[k] = it->second;
        }
        out.triangles.push_back(tri);
    }
    if (report) {
        report->charts = static_cast<std::size_t>(nc);
        report->scale = scale;
        report->utilization = 0.0;
        for (std::size_t t = 0; t < out.triangles.size(); ++t) report->utilization += out.uv_area(t);
    }
    return out;
}

// --- back-projection -----------------------------------------------------------

std::vector<Camera> backprojection_cameras(int resolution, double fov_y) {
    std::vector<Camera> cams;
    for (double elevation : {-30.0, 0.0, 30.0})
        for (int k = 0; k < 8; ++k)
            cams.push_back(camera_from_sample({-180.0 + 45.0 * k, elevation, kOrbitRadius}, fov_y, resolution));
    cams.push_back(camera_from_sample({0.0, 89.0, kOrbitRadius}, fov_y, resolution));
    cams.push_back(camera_from_sample({0.0, -89.0, kOrbitRadius}, fov_y, resolution));
    return cams;
}

namespace {

struct TexelSample {
    std::int32_t triangle = -1;
    Vec3 position;
    Vec3 normal;
};

std::vector<TexelSample> texel_surface(const TexturedMesh& mesh, int size) {
    std::vector<TexelSample> texels(static_cast<std::size_t>(size) * size);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        Vec2 p[3];
        for (int k = 0; k < 3; ++k) p[k] = Vec2(mesh.uvs[tri[k]].x() * size, (1.0 - mesh.uvs[tri[k]].y()) * size);
        const double area = (p[1].x() - p[0].x()) * (p[2].y() - p[0].y()) - (p[1].y() - p[0].y()) * (p[2].x() - p[0].x());
        if (area == 0.0) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].x(), p[1].x(), p[2].x()}) - 0.5)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({p[0].x(), p[1].x(), p[2].x()}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({p[0].y(), p[1].y(), p[2].y()}) - 0.5)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({p[0].y(), p[1].y(), p[2].y()}))));
        const Vec3 face = mesh.face_normal(t).normalized();
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const double w0 = ((p[1].x() - px) * (p[2].y() - py) - (p[1].y() - py) * (p[2].x() - px)) / area;
                const double w1 = ((p[2].x() - px) * (p[0].y() - py) - (p[2].y() - py) * (p[0].x() - px)) / area;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < -1e-9 || w1 < -1e-9 || w2 < -1e-9) continue;
                TexelSample& s = texels[static_cast<std::size_t>(y) * size + x];
                if (s.triangle >= 0) continue;
                s.triangle = static_cast<std::int32_t>(t);
                s.position = w0 * mesh.vertices[tri[0]] + w1 * mesh.vertices[tri[1]] + w2 * mesh.vertices[tri[2]];
                Vec3 nrm = mesh.normals.empty() ? face
                                                : Vec3(w0 * mesh.normals[tri[0]] + w1 * mesh.normals[tri[1]] +
                                                       w2 * mesh.normals[tri[2]]);
                s.normal = nrm.norm() > 1e-12 ? Vec3(nrm.normalized()) : face;
            }
    }
    return texels;
}

constexpr double kDepthTolerance = 0.02;

}  // namespace

TexturedMesh color_backproject(const TexturedMesh& mesh, const GaussianCloud& cloud, const BackprojectOptions& options,
                               CoverageReport* report) {
    const int size = options.texture_size;
    if (size < 256 || size > 2048 || (size & (size - 1)) != 0)
        throw ContractViolation("color_backproject: texture size must be a power of two in [256, 2048]");
    if (!mesh.has_uvs()) throw ContractViolation("color_backproject: mesh has no UV atlas");
    const std::vector<Camera> cameras = options.cameras.empty()
                                            ? backprojection_cameras(options.render_resolution, options.fov_y)
                                            : options.cameras;

    const std::vector<TexelSample> texels = texel_surface(mesh, size);
    const std::size_t count = texels.size();
    std::vector<Vec3> acc(count, Vec3::Zero());
    std::vector<double> weight(count, 0.0);

    for (const Camera& cam : cameras) {
        const RenderOutput shot = render(cloud, cam);
        const std::vector<SurfaceHit> hits = rasterize_surface(mesh, cam);
        const int w = cam.width(), h = cam.height();
        parallel_for(count, [&](std::size_t i) {
            const TexelSample& s = texels[i];
            if (s.triangle < 0) return;
            const Vec3 pc = cam.to_camera(s.position);
            if (!(pc.z() > kNearPlane)) return;
            const double cos_theta = -(s.position - cam.position()).normalized().dot(s.normal);
            if (cos_theta < options.cos_cutoff) return;
            const Vec2 uv = cam.project(pc);
            const long px = std::lround(uv.x()), py = std::lround(uv.y());
            if (px < 0 || py < 0 || px >= w || py >= h) return;
            const SurfaceHit& hit = hits[static_cast<std::size_t>(py) * w + px];
            if (hit.triangle < 0 || pc.z() > hit.depth + kDepthTolerance) return;
            double rgb[3];
            sample_bilinear(shot.rgb, uv.x() + 0.5, uv.y() + 0.5, rgb);
            acc[i] += cos_theta * Vec3(rgb[0], rgb[1], rgb[2]);
            weight[i] += cos_theta;
        });
    }

    CoverageReport cov;
    cov.seen_mask.assign(count, 0);
    std::vector<Vec3> color(count, Vec3::Zero());
    std::vector<std::uint8_t> filled(count, 0);
    Vec3 mean_seen = Vec3::Zero();
    for (std::size_t i = 0; i < count; ++i) {
        if (texels[i].triangle >= 0) ++cov.surface_texels;
        if (weight[i] > 0.0) {
            color[i] = acc[i] / weight[i];
            filled[i] = 1;
            cov.seen_mask[i] = 1;
            mean_seen += color[i];
            ++cov.seen;
        }
    }
    if (cov.seen > 0) mean_seen /= static_cast<double>(cov.seen);

    for (int pass = 0; pass < options.dilation_passes; ++pass) {
        std::vector<Vec3> next = color;
        std::vector<std::uint8_t> next_filled = filled;
        parallel_for(static_cast<std::size_t>(size), [&](std::size_t row) {
            const int y = static_cast<int>(row);
            for (int x = 0; x < size; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * size + x;
                if (filled[i]) continue;
                Vec3 sum = Vec3::Zero();
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= size || ny >= size) continue;
                        const std::size_t j = static_cast<std::size_t>(ny) * size + nx;
                        if (filled[j]) {
                            sum += color[j];
                            ++n;
                        }
                    }
                if (n > 0) {
                    next[i] = sum / n;
                    next_filled[i] = 1;
                }
            }
        });
        color.swap(next);
        filled.swap(next_filled);
    }

    TexturedMesh out = mesh;
    out.texture = ImageRGBA(size, size);
    for (std::size_t i = 0; i < count; ++i) {
        const bool surface = texels[i].triangle >= 0;
        if (surface && !cov.seen_mask[i]) {
            if (filled[i]) ++cov.dilated;
            else ++cov.unfilled;
        }
        const Vec3 c = filled[i] ? color[i] : mean_seen;
        const int x = static_cast<int>(i % size), y = static_cast<int>(i / size);
        for (int k = 0; k < 3; ++k) out.texture.at(x, y, k) = std::clamp(c[k], 0.0, 1.0);
        out.texture.at(x, y, 3) = 1.0;
    }
    if (report) *report = std::move(cov);
    return out;
}

}  // namespace splatforge
