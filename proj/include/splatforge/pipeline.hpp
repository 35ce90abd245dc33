#pragma once

#include "splatforge/config.hpp"
#include "splatforge/meshing.hpp"
#include "splatforge/refine.hpp"
#include "splatforge/scenes.hpp"

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace splatforge {

/// Input upscaling seam. Output dimensions are input × factor.
class Preprocessor {
public:
    virtual ~Preprocessor() = default;
    virtual ImageRGBA upscale(const ImageRGBA& image, int factor) const = 0;
};

class BicubicPreprocessor final : public Preprocessor {
public:
    ImageRGBA upscale(const ImageRGBA& image, int factor) const override { return upscale_bicubic(image, factor); }
};

/// Leaves the image untouched; only factor 1 is meaningful.
class PassThroughPreprocessor final : public Preprocessor {
public:
    ImageRGBA upscale(const ImageRGBA& image, int factor) const override;
};

/// "bicubic" or "none".
std::unique_ptr<Preprocessor> make_preprocessor(const std::string& name);

/// Upscale factor actually applied for a config (1 when preprocessing is off).
int effective_upscale_factor(const PipelineConfig& config);

// --- stages ---------------------------------------------------------------

struct Stage1Result {
    GaussianCloud initial;
    GaussianCloud cloud;
    std::vector<StepReport> log;
    double seconds = 0.0;
};

Stage1Result run_stage1(const ImageRGBA& reference, const PipelineConfig& config, GuidanceProvider& guidance,
                        const PerceptualMetric& metric, const std::string& log_path = {});

struct MeshResult {
    TexturedMesh mesh;
    UnwrapReport unwrap;
    CoverageReport coverage;
    std::size_t skipped_degenerate = 0;
    double seconds = 0.0;
};

/// Density grid → marching cubes → UV atlas → back-projected texture.
/// An empty isosurface yields an empty mesh (no texture).
MeshResult extract_mesh(const GaussianCloud& cloud, const PipelineConfig& config);

struct Stage2Result {
    TexturedMesh mesh;
    std::vector<RefineReport> log;
    double seconds = 0.0;
};

Stage2Result run_stage2(const TexturedMesh& mesh, const PipelineConfig& config, TextureRefiner& refiner,
                        const std::string& log_path = {});

// --- harness ----------------------------------------------------------------

inline constexpr int kEvalResolution = 256;

/// 8 held-out poses: azimuths 22.5° + 90°k at elevations ±15°.
std::vector<CameraSample> held_out_poses();

struct ViewScore {
    CameraSample pose;
    double psnr = 0.0;
    double perceptual = 0.0;
};

struct EvalReport {
    std::string subject;  // what was rendered: "init", "splats", "mesh", ...
    std::string scene;
    std::uint64_t seed = 0;
    std::vector<ViewScore> views;
    double mean_psnr = 0.0;
    double mean_perceptual = 0.0;
    double runtime_seconds = 0.0;
    nlohmann::ordered_json config;

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::ordered_json& j);
};

/// Scores splat renders of `cloud` against the scene on the held-out poses.
EvalReport evaluate_cloud(const SyntheticScene& scene, const GaussianCloud& cloud, const std::string& subject,
                          double fov_y = kDefaultFovY);

/// Same for mesh renders.
EvalReport evaluate_mesh(const SyntheticScene& scene, const TexturedMesh& mesh, const std::string& subject,
                         double fov_y = kDefaultFovY);

/// Ground-truth front view at the input resolution; the pipeline's input image.
ImageRGBA reference_image(const SyntheticScene& scene, const PipelineConfig& config);

std::unique_ptr<GuidanceProvider> make_guidance(const std::string& name, std::shared_ptr<const SyntheticScene> scene,
                                                double fov_y);
std::unique_ptr<TextureRefiner> make_refiner(const std::string& name, std::shared_ptr<const SyntheticScene> scene,
                                             double fov_y);

struct SceneRun {
    ImageRGBA reference;
    Stage1Result stage1;
    MeshResult coarse;
    Stage2Result stage2;  // empty when refinement is off
    EvalReport init_eval;
    EvalReport splat_eval;
    EvalReport coarse_eval;
    EvalReport final_eval;
    double seconds = 0.0;

    const TexturedMesh& final_mesh() const { return stage2.log.empty() ? coarse.mesh : stage2.mesh; }
};

/// Whole pipeline on a harness scene with the configured plugins,
/// evaluated after each stage.
SceneRun run_scene(std::shared_ptr<const SyntheticScene> scene, const PipelineConfig& config);

inline const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v = {"full", "no_sr_hook", "no_qa_triplet", "no_refine"};
    return v;
}

/// Config for one ablation variant derived from the full setting.
PipelineConfig variant_config(const PipelineConfig& full, const std::string& variant);

struct AblationRow {
    std::string variant;
    EvalReport report;
};

struct AblationTable {
    std::string scene;
    std::uint64_t seed = 0;
    std::vector<AblationRow> rows;
    std::string error;  // set when a variant failed; earlier rows are kept

    const AblationRow* find(const std::string& variant) const;
    std::string format() const;
    nlohmann::ordered_json to_json() const;
};

/// Runs each requested variant ("full" and "no_refine" share stage 1 and
/// the coarse mesh) and scores its final mesh on the held-out poses.
AblationTable run_ablation(std::shared_ptr<const SyntheticScene> scene, const std::vector<std::string>& variants,
                           const PipelineConfig& full);

/// `frames` azimuths evenly spaced from −180°, elevation 15°.
std::vector<CameraSample> turntable_poses(int frames);
std::vector<ImageRGBA> render_turntable(const TexturedMesh& mesh, int frames, int resolution,
                                        double fov_y = kDefaultFovY);

}  // namespace splatforge
