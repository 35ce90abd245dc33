#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/mesh.hpp"
#include "splatforge/random.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace splatforge {

/// Turns a noised coarse render into a refined image of the same size.
/// Must be deterministic given `noise_seed`; output channels in [0, 1].
class TextureRefiner {
public:
    virtual ~TextureRefiner() = default;
    virtual ImageRGB refine(const ImageRGB& noisy, double t_start, const CameraSample& pose,
                            std::uint64_t noise_seed) = 0;
    virtual bool concurrent_safe() const { return false; }
};

/// Returns its input unchanged.
class IdentityRefiner final : public TextureRefiner {
public:
    ImageRGB refine(const ImageRGB& noisy, double, const CameraSample&, std::uint64_t) override { return noisy; }
    bool concurrent_safe() const override { return true; }
};

struct RefineConfig {
    int steps_stage2 = 50;
    double t_start = 0.5;  // noisy = coarse·(1−t) + u·t, u ~ U[0, 1]
    int views_per_step = 1;
    double texel_lr = 0.002;
    int resolution_min = 512;
    int resolution_max = 1024;
    double fov_y = kDefaultFovY;
    std::uint64_t seed = 0;

    void validate() const;
};

struct RefineState {
    std::vector<double> m, v;  // per texel channel (RGB), row-major
    int step = 0;
    Rng rng;

    static RefineState create(const TexturedMesh& mesh, const RefineConfig& config);
};

struct RefineReport {
    int step = 0;
    int resolution = 0;
    CameraSample pose;
    double loss = 0.0;
    bool skipped = false;
    std::string error;

    std::string to_json_line() const;
};

/// One stage-2 step: render the mesh from a sampled orbit view, noise it,
/// ask the refiner for a target, and take an Adam step on the texels
/// against mean‖refined − coarse‖². Geometry and UVs are never touched;
/// texels are clamped to [0, 1].
RefineReport refine_step(TexturedMesh& mesh, TextureRefiner& refiner, const RefineConfig& config, RefineState& state);

/// refine_step repeated steps_stage2 times; optional JSON-lines log.
std::vector<RefineReport> refine_texture(TexturedMesh& mesh, TextureRefiner& refiner, const RefineConfig& config,
                                         const std::string& log_path = {});

/// mean over pixels and channels of (a − b)².
double mean_squared_error(const ImageRGB& a, const ImageRGB& b);

}  // namespace splatforge
