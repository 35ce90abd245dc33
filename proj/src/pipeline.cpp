#include "splatforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <iomanip>
#include <sstream>

namespace splatforge {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EvalReport score(const SyntheticScene& scene, const std::string& subject,
                 const std::function<ImageRGB(const Camera&)>& draw, double fov_y) {
    const auto t0 = std::chrono::steady_clock::now();
    const StructuralMetric metric;
    EvalReport rep;
    rep.subject = subject;
    rep.scene = scene.id;
    rep.seed = scene.seed;
    for (const CameraSample& pose : held_out_poses()) {
        const Camera cam = camera_from_sample(pose, fov_y, kEvalResolution);
        const ImageRGB gt = render(scene.cloud, cam).rgb;
        const ImageRGB img = draw(cam);
        rep.views.push_back({pose, psnr(img, gt), metric.distance(img, gt)});
        rep.mean_psnr += rep.views.back().psnr / 8.0;
        rep.mean_perceptual += rep.views.back().perceptual / 8.0;
    }
    rep.runtime_seconds = seconds_since(t0);
    return rep;
}

}  // namespace

ImageRGBA PassThroughPreprocessor::upscale(const ImageRGBA& image, int factor) const {
    if (factor != 1) throw ContractViolation("pass-through preprocessing cannot change the resolution");
    return image;
}

std::unique_ptr<Preprocessor> make_preprocessor(const std::string& name) {
    if (name == "bicubic") return std::make_unique<BicubicPreprocessor>();
    if (name == "none") return std::make_unique<PassThroughPreprocessor>();
    throw InvalidParameter("unknown preprocessor: " + name);
}

int effective_upscale_factor(const PipelineConfig& config) {
    return config.preprocess == "none" ? 1 : config.upscale_factor;
}

Stage1Result run_stage1(const ImageRGBA& reference, const PipelineConfig& config, GuidanceProvider& guidance,
                        const PerceptualMetric& metric, const std::string& log_path) {
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig c = config.resolved();
    Stage1Result r;
    r.initial = init_cloud(c.train);
    r.cloud = r.initial;
    OptState state = OptState::create(r.cloud, c.train);
    r.log = train(r.cloud, state, c.train, guidance, metric, reference, log_path);
    r.seconds = seconds_since(t0);
    return r;
}

MeshResult extract_mesh(const GaussianCloud& cloud, const PipelineConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    MeshResult r;
    const DensityGrid grid = local_density_query(cloud);
    r.skipped_degenerate = grid.skipped_degenerate;
    const TexturedMesh surface = marching_cubes(grid, config.density_threshold);
    if (!surface.empty()) {
        BackprojectOptions opt;
        opt.texture_size = config.texture_size;
        opt.render_resolution = config.backproject_resolution;
        opt.cos_cutoff = config.cull_cosine;
        opt.dilation_passes = config.dilation_passes;
        opt.fov_y = config.train.fov_y;
        r.mesh = color_backproject(uv_unwrap(surface, config.texture_size, &r.unwrap), cloud, opt, &r.coverage);
    }
    r.seconds = seconds_since(t0);
    return r;
}

Stage2Result run_stage2(const TexturedMesh& mesh, const PipelineConfig& config, TextureRefiner& refiner,
                        const std::string& log_path) {
    const auto t0 = std::chrono::steady_clock::now();
    Stage2Result r;
    r.mesh = mesh;
    if (!mesh.empty()) r.log = refine_texture(r.mesh, refiner, config.resolved().refine, log_path);
    r.seconds = seconds_since(t0);
    return r;
}

std::vector<CameraSample> held_out_poses() {
    std::vector<CameraSample> poses;
    for (double elevation : {-15.0, 15.0})
        for (int k = 0; k < 4; ++k) poses.push_back({22.5 + 90.0 * k, elevation, kOrbitRadius});
    return poses;
}

EvalReport evaluate_cloud(const SyntheticScene& scene, const GaussianCloud& cloud, const std::string& subject,
                          double fov_y) {
    return score(scene, subject, [&](const Camera& cam) { return render(cloud, cam).rgb; }, fov_y);
}

EvalReport evaluate_mesh(const SyntheticScene& scene, const TexturedMesh& mesh, const std::string& subject,
                         double fov_y) {
    return score(
        scene, subject,
        [&](const Camera& cam) { return mesh.empty() ? ImageRGB(cam.width(), cam.height()) : render_mesh(mesh, cam).rgb; },
        fov_y);
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["subject"] = subject;
    j["scene"] = scene;
    j["seed"] = seed;
    j["mean_psnr"] = mean_psnr;
    j["mean_perceptual"] = mean_perceptual;
    j["runtime_seconds"] = runtime_seconds;
    auto& v = j["views"] = nlohmann::ordered_json::array();
    for (const auto& s : views)
        v.push_back({{"azimuth", s.pose.azimuth},
                     {"elevation", s.pose.elevation},
                     {"psnr", s.psnr},
                     {"perceptual", s.perceptual}});
    j["config"] = config;
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::ordered_json& j) {
    try {
        EvalReport r;
        r.subject = j.at("subject").get<std::string>();
        r.scene = j.at("scene").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.mean_psnr = j.at("mean_psnr").get<double>();
        r.mean_perceptual = j.at("mean_perceptual").get<double>();
        r.runtime_seconds = j.at("runtime_seconds").get<double>();
        for (const auto& v : j.at("views"))
            r.views.push_back({{v.at("azimuth").get<double>(), v.at("elevation").get<double>(), kOrbitRadius},
                               v.at("psnr").get<double>(),
                               v.at("perceptual").get<double>()});
        if (j.contains("config")) r.config = j.at("config");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed eval report: ") + e.what(), 0);
    }
}

ImageRGBA reference_image(const SyntheticScene& scene, const PipelineConfig& config) {
    return render_ground_truth(scene, CameraSample{}, config.input_resolution, config.train.fov_y);
}

std::unique_ptr<GuidanceProvider> make_guidance(const std::string& name, std::shared_ptr<const SyntheticScene> scene,
                                                double fov_y) {
    if (name == "oracle") {
        if (!scene) throw InvalidParameter("oracle guidance needs a harness scene");
        return std::make_unique<OracleGuidance>(std::move(scene), fov_y);
    }
    if (name == "none") return std::make_unique<NoGuidance>();
    throw InvalidParameter("unknown guidance plugin: " + name);
}

std::unique_ptr<TextureRefiner> make_refiner(const std::string& name, std::shared_ptr<const SyntheticScene> scene,
                                             double fov_y) {
    if (name == "oracle") {
        if (!scene) throw InvalidParameter("oracle refiner needs a harness scene");
        return std::make_unique<OracleRefiner>(std::move(scene), fov_y);
    }
    if (name == "identity") return std::make_unique<IdentityRefiner>();
    throw InvalidParameter("unknown refiner plugin: " + name);
}

SceneRun run_scene(std::shared_ptr<const SyntheticScene> scene, const PipelineConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineConfig c = config.resolved();
    const double fov = c.train.fov_y;
    const nlohmann::ordered_json echo = config_to_json(c);

    SceneRun run;
    run.reference = reference_image(*scene, c);
    const ImageRGBA input = make_preprocessor(c.preprocess)->upscale(run.reference, effective_upscale_factor(c));
    auto guidance = make_guidance(c.guidance, scene, fov);
    const StructuralMetric metric;
    run.stage1 = run_stage1(input, c, *guidance, metric);
    run.coarse = extract_mesh(run.stage1.cloud, c);
    if (c.run_refine) {
        auto refiner = make_refiner(c.refiner, scene, fov);
        run.stage2 = run_stage2(run.coarse.mesh, c, *refiner);
    }

    run.init_eval = evaluate_cloud(*scene, run.stage1.initial, "init", fov);
    run.splat_eval = evaluate_cloud(*scene, run.stage1.cloud, "splats", fov);
    run.coarse_eval = evaluate_mesh(*scene, run.coarse.mesh, "coarse_mesh", fov);
    run.final_eval = evaluate_mesh(*scene, run.final_mesh(), "mesh", fov);
    run.seconds = seconds_since(t0);
    for (EvalReport* r : {&run.init_eval, &run.splat_eval, &run.coarse_eval, &run.final_eval}) {
        r->config = echo;
        r->seed = c.seed;
    }
    run.final_eval.runtime_seconds = run.seconds;
    return run;
}

PipelineConfig variant_config(const PipelineConfig& full, const std::string& variant) {
    PipelineConfig c = full;
    if (variant == "full") return c;
    if (variant == "no_sr_hook") c.preprocess = "none";
    else if (variant == "no_qa_triplet") c.train.triplet_weight = 0.0;
    else if (variant == "no_refine") c.run_refine = false;
    else throw InvalidParameter("unknown ablation variant: " + variant);
    return c;
}

const AblationRow* AblationTable::find(const std::string& variant) const {
    for (const auto& r : rows)
        if (r.variant == variant) return &r;
    return nullptr;
}

std::string AblationTable::format() const {
    std::ostringstream os;
    os << "scene " << scene << ", seed " << seed << "\n";
    os << std::left << std::setw(16) << "variant" << std::right << std::setw(12) << "psnr_db" << std::setw(14)
       << "perceptual" << std::setw(12) << "seconds" << "\n";
    os << std::fixed;
    for (const auto& r : rows)
        os << std::left << std::setw(16) << r.variant << std::right << std::setprecision(3) << std::setw(12)
           << r.report.mean_psnr << std::setprecision(5) << std::setw(14) << r.report.mean_perceptual
           << std::setprecision(1) << std::setw(12) << r.report.runtime_seconds << "\n";
    if (!error.empty()) os << "aborted: " << error << "\n";
    return os.str();
}

nlohmann::ordered_json AblationTable::to_json() const {
    nlohmann::ordered_json j;
    j["scene"] = scene;
    j["seed"] = seed;
    auto& rs = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) rs.push_back({{"variant", r.variant}, {"report", r.report.to_json()}});
    if (!error.empty()) j["error"] = error;
    return j;
}

AblationTable run_ablation(std::shared_ptr<const SyntheticScene> scene, const std::vector<std::string>& variants,
                           const PipelineConfig& full) {
    for (const auto& v : variants) variant_config(full, v);  // reject unknown names before any work

    AblationTable table;
    table.scene = scene->id;
    table.seed = full.seed;
    std::optional<SceneRun> shared;  // full setting; no_refine reads its coarse mesh
    const bool need_shared =
        std::find(variants.begin(), variants.end(), "full") != variants.end() ||
        std::find(variants.begin(), variants.end(), "no_refine") != variants.end();
    try {
        for (const auto& v : variants) {
            EvalReport rep;
            if (v == "full" || v == "no_refine") {
                if (need_shared && !shared) shared = run_scene(scene, full);
                if (v == "full") {
                    rep = shared->final_eval;
                } else {
                    rep = shared->coarse_eval;
                    rep.subject = "mesh";
                    rep.config = config_to_json(variant_config(full, v).resolved());
                    rep.runtime_seconds = shared->seconds - shared->stage2.seconds;
                }
            } else {
                rep = run_scene(scene, variant_config(full, v)).final_eval;
            }
            table.rows.push_back({v, rep});
        }
    } catch (const std::exception& e) {
        table.error = e.what();
    }
    return table;
}

std::vector<CameraSample> turntable_poses(int frames) {
    std::vector<CameraSample> poses;
    for (int k = 0; k < frames; ++k) poses.push_back({-180.0 + 360.0 * k / frames, 15.0, kOrbitRadius});
    return poses;
}

std::vector<ImageRGBA> render_turntable(const TexturedMesh& mesh, int frames, int resolution, double fov_y) {
    std::vector<ImageRGBA> out;
    for (const auto& pose : turntable_poses(frames)) {
        const Camera cam = camera_from_sample(pose, fov_y, resolution);
        out.push_back(mesh.empty() ? ImageRGBA(resolution, resolution) : render_mesh(mesh, cam).rgba());
    }
    return out;
}

}  // namespace splatforge
