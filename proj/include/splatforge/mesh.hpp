#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/image.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace splatforge {

using Triangle = std::array<std::uint32_t, 3>;

/// Triangle mesh with per-vertex normals and UVs and a texture atlas. UV
/// (0, 0) is the bottom-left corner of the texture image; row 0 of the
/// texture is v = 1.
struct TexturedMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec3> normals;
    std::vector<Vec2> uvs;
    ImageRGBA texture;

    bool empty() const { return triangles.empty(); }
    bool has_uvs() const { return !uvs.empty() && uvs.size() == vertices.size(); }
    bool has_texture() const { return has_uvs() && !texture.empty(); }

    Vec3 face_normal(std::size_t t) const;  // unnormalized, from winding
    double area(std::size_t t) const;
    double uv_area(std::size_t t) const;    // signed, in UV units

    /// Rigidly rotates vertices and normals about the origin.
    TexturedMesh rotated(const Quat& q) const;
};

struct MeshTape;

/// Z-buffered render of a textured mesh. Covered pixels have alpha 1.
struct MeshRenderOutput {
    ImageRGB rgb;
    ImageGray alpha;
    std::shared_ptr<const MeshTape> tape;

    ImageRGBA rgba() const { return compose_rgba(rgb, alpha); }
};

/// Per-pixel surface hit used by texture baking.
struct SurfaceHit {
    std::int32_t triangle = -1;
    double depth = 0.0;  // camera-space z
    Vec3 barycentric = Vec3::Zero();
};

/// Rasterizes triangles (back faces culled) and samples the texture
/// bilinearly at perspective-correct UVs. Throws ContractViolation when the
/// mesh has no UV atlas or texture.
MeshRenderOutput render_mesh(const TexturedMesh& mesh, const Camera& camera);

/// dL/d(texel RGB) for L = Σ grad_rgb·rgb; result has the texture's size.
ImageRGB backward_texture(const MeshRenderOutput& output, const ImageRGB& grad_rgb);

/// Depth buffer with triangle ids and barycentrics (no texture needed).
std::vector<SurfaceHit> rasterize_surface(const TexturedMesh& mesh, const Camera& camera);

}  // namespace splatforge
