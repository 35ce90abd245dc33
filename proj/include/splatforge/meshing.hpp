#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "splatforge/mesh.hpp"

#include <optional>
#include <vector>

namespace splatforge {

inline constexpr int kDensityBlocks = 16;
inline constexpr int kDensityBlockSize = 8;
inline constexpr int kDensityResolution = kDensityBlocks * kDensityBlockSize;  // 128
inline constexpr double kDensityThreshold = 1.0;
/// Per-axis half extent (in σ) of the box outside which a Gaussian is
/// culled from a block; beyond it every term is below e^(-24.5).
inline constexpr double kDensityCullSigma = 7.0;

/// Scalar field sampled at the corners of a regular lattice spanning
/// (−1, 1)³; corner i along an axis sits at −1 + 2i/(n−1).
struct DensityGrid {
    int n = 0;
    double lo = -1.0;
    double hi = 1.0;
    std::vector<double> values;  // x fastest, then y, then z
    std::size_t skipped_degenerate = 0;

    DensityGrid() = default;
    explicit DensityGrid(int size, double fill = 0.0)
        : n(size), values(static_cast<std::size_t>(size) * size * size, fill) {}

    double spacing() const { return (hi - lo) / (n - 1); }
    double coord(int i) const { return lo + (hi - lo) * i / (n - 1); }
    Vec3 position(int x, int y, int z) const { return Vec3(coord(x), coord(y), coord(z)); }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * n + y) * n + x;
    }
    double& at(int x, int y, int z) { return values[index(x, y, z)]; }
    double at(int x, int y, int z) const { return values[index(x, y, z)]; }
};

/// Σ αᵢ·exp(−½ dᵀΣᵢ⁻¹d) at every corner of the 128³ lattice, evaluated per
/// 8³ block over the Gaussians whose culling box meets the block.
/// Gaussians with non-finite or underflowing scales are skipped and counted.
DensityGrid local_density_query(const GaussianCloud& cloud);

/// 256-case marching cubes with shared edge vertices. Normals are −∇d from
/// central differences; triangles are wound so their geometric normal
/// agrees with them. Triangles of area ≤ 1e-12 are dropped.
TexturedMesh marching_cubes(const DensityGrid& grid, double threshold);

struct UnwrapReport {
    std::size_t charts = 0;
    double utilization = 0.0;  // Σ triangle UV area / atlas area
    double scale = 0.0;        // UV units per world unit
};

/// Normal-binned charts (6 dominant-axis bins split into edge-connected
/// components), planar projection, shelf packing with 2-texel gutters.
/// Vertices on chart seams are duplicated.
TexturedMesh uv_unwrap(const TexturedMesh& mesh, int texture_size = 1024, UnwrapReport* report = nullptr);

/// Chart id per triangle, in the same order uv_unwrap assigns them.
std::vector<int> chart_segmentation(const TexturedMesh& mesh);

struct BackprojectOptions {
    int texture_size = 1024;
    int render_resolution = 512;
    double cos_cutoff = 0.3;
    int dilation_passes = 8;
    double fov_y = kDefaultFovY;
    /// Defaults to backprojection_cameras() when empty.
    std::vector<Camera> cameras;
};

struct CoverageReport {
    std::size_t surface_texels = 0;  // texels inside some chart triangle
    std::size_t seen = 0;
    std::size_t dilated = 0;
    std::size_t unfilled = 0;  // surface texels beyond the dilation reach
    std::vector<std::uint8_t> seen_mask;  // per texel, row-major
};

/// 8 azimuths × {−30°, 0°, 30°} plus elevation ±89°, radius 2.
std::vector<Camera> backprojection_cameras(int resolution, double fov_y = kDefaultFovY);

/// Bakes splat renders into the atlas: cos-weighted mean over views in
/// which the texel passes the depth test and faces the camera by at least
/// the cutoff, followed by dilation into unseen texels.
TexturedMesh color_backproject(const TexturedMesh& mesh, const GaussianCloud& cloud,
                               const BackprojectOptions& options = {}, CoverageReport* report = nullptr);

}  // namespace splatforge
