#include "splatforge/mesh.hpp"
#include "splatforge/parallel.hpp"
#include "splatforge/rasterizer.hpp"

#include <algorithm>
#include <cmath>

namespace splatforge {

Vec3 TexturedMesh::face_normal(std::size_t t) const {
    const auto& tri = triangles[t];
    return (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]);
}

double TexturedMesh::area(std::size_t t) const { return 0.5 * face_normal(t).norm(); }

double TexturedMesh::uv_area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Vec2 a = uvs[tri[1]] - uvs[tri[0]];
    const Vec2 b = uvs[tri[2]] - uvs[tri[0]];
    return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

TexturedMesh TexturedMesh::rotated(const Quat& q) const {
    TexturedMesh out = *this;
    const Mat3 r = quat_to_matrix(q.normalized());
    for (auto& v : out.vertices) v = r * v;
    for (auto& n : out.normals) n = r * n;
    return out;
}

struct MeshTape {
    int width = 0;
    int height = 0;
    int tex_width = 0;
    int tex_height = 0;
    std::vector<std::int32_t> triangle;  // per pixel, -1 when empty
    std::vector<Vec2> texel;             // per pixel continuous texel coordinate
};

namespace {

struct ScreenTriangle {
    Vec2 p[3];
    double inv_z[3];
    int x0, x1, y0, y1;
};

// Projects front-facing triangles fully in front of the near plane and bins
// them to tiles in index order.
void bin_triangles(const TexturedMesh& mesh, const Camera& camera, std::vector<ScreenTriangle>& screen,
                   std::vector<std::uint8_t>& keep, std::vector<std::vector<std::uint32_t>>& tiles, int tiles_x,
                   int tiles_y) {
    const std::size_t n = mesh.triangles.size();
    screen.assign(n, {});
    keep.assign(n, 0);
    const int w = camera.width(), h = camera.height();
    parallel_for(n, [&](std::size_t t) {
        const auto& tri = mesh.triangles[t];
        if (mesh.face_normal(t).dot(camera.position() - mesh.vertices[tri[0]]) <= 0.0) return;
        ScreenTriangle& st = screen[t];
        double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
        for (int k = 0; k < 3; ++k) {
            const Vec3 c = camera.to_camera(mesh.vertices[tri[k]]);
            if (!(c.z() > kNearPlane)) return;
            st.p[k] = camera.project(c);
            st.inv_z[k] = 1.0 / c.z();
            minx = std::min(minx, st.p[k].x());
            maxx = std::max(maxx, st.p[k].x());
            miny = std::min(miny, st.p[k].y());
            maxy = std::max(maxy, st.p[k].y());
        }
        st.x0 = static_cast<int>(std::clamp(std::ceil(minx), 0.0, double(w)));
        st.x1 = static_cast<int>(std::clamp(std::floor(maxx), -1.0, w - 1.0));
        st.y0 = static_cast<int>(std::clamp(std::ceil(miny), 0.0, double(h)));
        st.y1 = static_cast<int>(std::clamp(std::floor(maxy), -1.0, h - 1.0));
        if (st.x0 > st.x1 || st.y0 > st.y1) return;
        keep[t] = 1;
    });
    tiles.assign(static_cast<std::size_t>(tiles_x) * tiles_y, {});
    for (std::size_t t = 0; t < n; ++t) {
        if (!keep[t]) continue;
        const auto& st = screen[t];
        for (int ty = st.y0 / kTileSize; ty <= st.y1 / kTileSize; ++ty)
            for (int tx = st.x0 / kTileSize; tx <= st.x1 / kTileSize; ++tx)
                tiles[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(t));
    }
}

// Edge-function coverage test; returns perspective-correct barycentrics.
inline bool cover(const ScreenTriangle& st, double px, double py, Vec3& bary, double& depth) {
    const Vec2& a = st.p[0];
    const Vec2& b = st.p[1];
    const Vec2& c = st.p[2];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    if (area == 0.0) return false;
    double w0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) / area;
    double w1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) / area;
    double w2 = 1.0 - w0 - w1;
    constexpr double eps = -1e-12;
    if (w0 < eps || w1 < eps || w2 < eps) return false;
    const double p0 = w0 * st.inv_z[0], p1 = w1 * st.inv_z[1], p2 = w2 * st.inv_z[2];
    const double inv_depth = p0 + p1 + p2;
    depth = 1.0 / inv_depth;
    bary = Vec3(p0, p1, p2) * depth;
    return true;
}

std::vector<SurfaceHit> rasterize(const TexturedMesh& mesh, const Camera& camera) {
    const int w = camera.width(), h = camera.height();
    const int tiles_x = (w + kTileSize - 1) / kTileSize;
    const int tiles_y = (h + kTileSize - 1) / kTileSize;
    std::vector<ScreenTriangle> screen;
    std::vector<std::uint8_t> keep;
    std::vector<std::vector<std::uint32_t>> tiles;
    bin_triangles(mesh, camera, screen, keep, tiles, tiles_x, tiles_y);

    std::vector<SurfaceHit> hits(static_cast<std::size_t>(w) * h);
    parallel_for(tiles.size(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
        const int px0 = tx * kTileSize, py0 = ty * kTileSize;
        const int px1 = std::min(w, px0 + kTileSize), py1 = std::min(h, py0 + kTileSize);
        for (std::uint32_t t : tiles[tile]) {
            const auto& st = screen[t];
            for (int py = std::max(py0, st.y0); py < std::min(py1, st.y1 + 1); ++py)
                for (int px = std::max(px0, st.x0); px < std::min(px1, st.x1 + 1); ++px) {
                    Vec3 bary;
                    double depth;
                    if (!cover(st, px, py, bary, depth)) continue;
                    SurfaceHit& hit = hits[static_cast<std::size_t>(py) * w + px];
                    if (hit.triangle >= 0 && !(depth < hit.depth)) continue;
                    hit.triangle = static_cast<std::int32_t>(t);
                    hit.depth = depth;
                    hit.barycentric = bary;
                }
        }
    });
    return hits;
}

}  // namespace

std::vector<SurfaceHit> rasterize_surface(const TexturedMesh& mesh, const Camera& camera) {
    return rasterize(mesh, camera);
}

MeshRenderOutput render_mesh(const TexturedMesh& mesh, const Camera& camera) {
    if (!mesh.has_uvs()) throw ContractViolation("render_mesh: mesh has no UV atlas");
    if (mesh.texture.empty()) throw ContractViolation("render_mesh: mesh has no texture");
    const int w = camera.width(), h = camera.height();
    auto tape = std::make_shared<MeshTape>();
    tape->width = w;
    tape->height = h;
    tape->tex_width = mesh.texture.width();
    tape->tex_height = mesh.texture.height();
    tape->triangle.assign(static_cast<std::size_t>(w) * h, -1);
    tape->texel.assign(static_cast<std::size_t>(w) * h, Vec2::Zero());

    const auto hits = rasterize(mesh, camera);
    MeshRenderOutput out;
    out.rgb = ImageRGB(w, h);
    out.alpha = ImageGray(w, h);
    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px) {
            const std::size_t p = static_cast<std::size_t>(py) * w + px;
            const SurfaceHit& hit = hits[p];
            if (hit.triangle < 0) continue;
            const auto& tri = mesh.triangles[static_cast<std::size_t>(hit.triangle)];
            const Vec2 uv = hit.barycentric[0] * mesh.uvs[tri[0]] + hit.barycentric[1] * mesh.uvs[tri[1]] +
                            hit.barycentric[2] * mesh.uvs[tri[2]];
            const Vec2 texel(uv.x() * tape->tex_width, (1.0 - uv.y()) * tape->tex_height);
            tape->triangle[p] = hit.triangle;
            tape->texel[p] = texel;
            double rgba[4];
            sample_bilinear(mesh.texture, texel.x(), texel.y(), rgba);
            for (int c = 0; c < 3; ++c) out.rgb.at(px, py, c) = rgba[c];
            out.alpha.at(px, py, 0) = 1.0;
        }
    out.tape = std::move(tape);
    return out;
}

ImageRGB backward_texture(const MeshRenderOutput& output, const ImageRGB& grad_rgb) {
    if (!output.tape) throw ContractViolation("backward_texture: render output carries no tape");
    const MeshTape& tape = *output.tape;
    if (!grad_rgb.same_size(tape.width, tape.height))
        throw ContractViolation("backward_texture: gradient resolution does not match the render");
    ImageRGB grad(tape.tex_width, tape.tex_height);
    for (int py = 0; py < tape.height; ++py)
        for (int px = 0; px < tape.width; ++px) {
            const std::size_t p = static_cast<std::size_t>(py) * tape.width + px;
            if (tape.triangle[p] < 0) continue;
            // adjoint of sample_bilinear
            const double fx = tape.texel[p].x() - 0.5, fy = tape.texel[p].y() - 0.5;
            const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
            const double ax = fx - x0, ay = fy - y0;
            const int xs[2] = {std::clamp(x0, 0, tape.tex_width - 1), std::clamp(x0 + 1, 0, tape.tex_width - 1)};
            const int ys[2] = {std::clamp(y0, 0, tape.tex_height - 1), std::clamp(y0 + 1, 0, tape.tex_height - 1)};
            const double wx[2] = {1 - ax, ax}, wy[2] = {1 - ay, ay};
            for (int j = 0; j < 2; ++j)
                for (int i = 0; i < 2; ++i)
                    for (int c = 0; c < 3; ++c) grad.at(xs[i], ys[j], c) += wx[i] * wy[j] * grad_rgb.at(px, py, c);
        }
    return grad;
}

}  // namespace splatforge
