#include "splatforge/cli.hpp"

#include "splatforge/io.hpp"
#include "splatforge/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace splatforge {

namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::shared_ptr<const SyntheticScene> scene_for(const PipelineConfig& c) {
    return std::make_shared<const SyntheticScene>(make_scene(c.scene, c.seed));
}

std::string frame_name(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%02d.png", k);
    return buf;
}

}  // namespace

GenerateArtifacts cmd_generate(const PipelineConfig& config, const GenerateOptions& options, std::ostream& log) {
    config.validate();
    const PipelineConfig c = config.resolved();
    const double fov = c.train.fov_y;
    const std::string& out = options.out_dir;
    fs::create_directories(out);
    const bool needs_scene = options.input.empty() || c.guidance == "oracle" || c.refiner == "oracle";
    std::shared_ptr<const SyntheticScene> scene = needs_scene ? scene_for(c) : nullptr;

    GenerateArtifacts a;
    a.config = join(out, "config.txt");
    write_file_atomic(a.config, config_to_text(config));

    ImageRGBA reference;
    if (options.input.empty()) {
        a.reference = join(out, "reference.png");
        save_png(reference_image(*scene, c), a.reference);
        reference = load_png(a.reference, true);  // same bytes a user would feed back in
    } else {
        reference = load_png(options.input, true);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const ImageRGBA input = make_preprocessor(c.preprocess)->upscale(reference, effective_upscale_factor(c));
    a.preprocessed = join(out, "preprocessed.png");
    save_png(input, a.preprocessed);
    log << "input " << reference.width() << "x" << reference.height() << " -> " << input.width() << "x"
        << input.height() << "\n";

    auto guidance = make_guidance(c.guidance, scene, fov);
    const StructuralMetric metric;
    a.train_log = join(out, "train_log.jsonl");
    const Stage1Result s1 = run_stage1(input, c, *guidance, metric, a.train_log);
    a.checkpoint = join(out, "checkpoint.ply");
    save_checkpoint(s1.cloud, a.checkpoint);
    log << "stage 1: " << s1.cloud.size() << " Gaussians, " << std::fixed << std::setprecision(1) << s1.seconds
        << " s\n";

    const MeshResult coarse = extract_mesh(s1.cloud, c);
    if (coarse.mesh.empty()) throw Error("isosurface is empty; no mesh can be extracted from this checkpoint");
    a.coarse_mesh = save_mesh(coarse.mesh, join(out, "mesh_coarse")).obj;
    log << "mesh: " << coarse.mesh.vertices.size() << " vertices, " << coarse.mesh.triangles.size()
        << " triangles, " << coarse.unwrap.charts << " charts, " << coarse.mesh.texture.width() << "px atlas, "
        << coarse.seconds << " s\n";

    TexturedMesh final_mesh = coarse.mesh;
    Stage2Result s2;
    if (c.run_refine) {
        auto refiner = make_refiner(c.refiner, scene, fov);
        a.refine_log = join(out, "refine_log.jsonl");
        s2 = run_stage2(coarse.mesh, c, *refiner, a.refine_log);
        final_mesh = s2.mesh;
        log << "stage 2: " << s2.log.size() << " steps, " << s2.seconds << " s\n";
    }
    a.mesh = save_mesh(final_mesh, join(out, "mesh")).obj;

    if (options.write_turntable) {
        const auto frames = render_turntable(final_mesh, c.turntable_frames, c.turntable_resolution, fov);
        for (std::size_t k = 0; k < frames.size(); ++k) {
            a.turntable.push_back(join(join(out, "turntable"), frame_name(static_cast<int>(k))));
            save_png(frames[k], a.turntable.back());
        }
    }

    nlohmann::ordered_json report;
    report["config"] = config_to_json(c);
    report["timings"] = {{"stage1", s1.seconds},
                         {"mesh", coarse.seconds},
                         {"stage2", s2.seconds},
                         {"total", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    report["gaussians"] = s1.cloud.size();
    report["mesh"] = {{"vertices", final_mesh.vertices.size()},
                      {"triangles", final_mesh.triangles.size()},
                      {"charts", coarse.unwrap.charts},
                      {"atlas_utilization", coarse.unwrap.utilization},
                      {"surface_texels", coarse.coverage.surface_texels},
                      {"seen_texels", coarse.coverage.seen},
                      {"dilated_texels", coarse.coverage.dilated},
                      {"unfilled_texels", coarse.coverage.unfilled}};
    if (scene) {
        EvalReport e = evaluate_mesh(*scene, final_mesh, "mesh", fov);
        e.config = report["config"];
        e.seed = c.seed;
        report["eval"] = e.to_json();
        log << "held-out: PSNR " << std::setprecision(2) << e.mean_psnr << " dB, perceptual " << std::setprecision(4)
            << e.mean_perceptual << "\n";
    }
    a.report = join(out, "report.json");
    write_json(a.report, report);
    return a;
}

std::string cmd_mesh(const PipelineConfig& config, const std::string& checkpoint, const std::string& out_dir) {
    config.validate();
    const MeshResult r = extract_mesh(load_checkpoint(checkpoint), config.resolved());
    if (r.mesh.empty()) throw Error("isosurface is empty for " + checkpoint);
    return save_mesh(r.mesh, join(out_dir, "mesh")).obj;
}

std::vector<std::string> cmd_render(const PipelineConfig& config, const std::string& checkpoint, int frames,
                                    const std::string& out_dir) {
    config.validate();
    if (frames < 0) throw InvalidParameter("frame count must be >= 0");
    const GaussianCloud cloud = load_checkpoint(checkpoint);
    std::vector<std::string> paths;
    const auto poses = turntable_poses(frames);
    for (int k = 0; k < frames; ++k) {
        const Camera cam = camera_from_sample(poses[k], config.train.fov_y, config.turntable_resolution);
        paths.push_back(join(out_dir, frame_name(k)));
        save_png(render(cloud, cam).rgba(), paths.back());
    }
    return paths;
}

EvalReport cmd_eval(const PipelineConfig& config, const std::string& checkpoint, const std::string& out_dir) {
    config.validate();
    const PipelineConfig c = config.resolved();
    const auto scene = scene_for(c);
    EvalReport r;
    if (checkpoint.empty()) {
        r = run_scene(scene, c).final_eval;
    } else {
        r = evaluate_cloud(*scene, load_checkpoint(checkpoint), "splats", c.train.fov_y);
        r.config = config_to_json(c);
        r.seed = c.seed;
    }
    write_json(join(out_dir, "eval.json"), r.to_json());
    return r;
}

AblationTable cmd_ablate(const PipelineConfig& config, const std::vector<std::string>& variants,
                         const std::string& out_dir) {
    config.validate();
    const AblationTable t = run_ablation(scene_for(config), variants, config);
    write_json(join(out_dir, "ablation.json"), t.to_json());
    write_file_atomic(join(out_dir, "ablation.txt"), t.format());
    return t;
}

std::string format_reports(const std::vector<std::string>& paths) {
    AblationTable table;
    for (const auto& p : paths) {
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(read_file(p));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(p + ": " + e.what(), e.byte);
        }
        if (j.contains("rows")) {
            for (const auto& row : j.at("rows"))
                table.rows.push_back({row.at("variant").get<std::string>(), EvalReport::from_json(row.at("report"))});
            table.scene = j.at("scene").get<std::string>();
            table.seed = j.at("seed").get<std::uint64_t>();
        } else {
            EvalReport r = EvalReport::from_json(j.contains("eval") ? j.at("eval") : j);
            table.scene = r.scene;
            table.seed = r.seed;
            table.rows.push_back({fs::path(p).parent_path().filename().string() + ":" + r.subject, r});
        }
    }
    return table.format();
}

int run_cli(int argc, char** argv) {
    CLI::App app{"splatforge: single-image Gaussian-splat reconstruction to textured meshes"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", guidance, refiner, preprocess, scene;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--plugin-guidance", guidance, "guidance plugin")->check(CLI::IsMember({"oracle", "none"}));
        cmd->add_option("--plugin-refiner", refiner, "texture refiner plugin")
            ->check(CLI::IsMember({"oracle", "identity"}));
        cmd->add_option("--preprocess", preprocess, "input upscaler")->check(CLI::IsMember({"bicubic", "none"}));
        cmd->add_option("--scene", scene, "harness scene backing the oracle plugins")
            ->check(CLI::IsMember(scene_ids()));
    };

    auto* gen = app.add_subcommand("generate", "image → splats → textured mesh");
    std::string input;
    bool no_turntable = false;
    gen->add_option("input", input, "pre-masked RGBA PNG (default: the scene's reference view)");
    gen->add_flag("--no-turntable", no_turntable, "skip turntable snapshots");
    common(gen);

    auto* mesh = app.add_subcommand("mesh", "checkpoint → textured mesh");
    std::string checkpoint;
    mesh->add_option("checkpoint", checkpoint, "PLY checkpoint")->required()->check(CLI::ExistingFile);
    common(mesh);

    auto* rend = app.add_subcommand("render", "checkpoint → turntable PNGs");
    int frames = -1;
    rend->add_option("checkpoint", checkpoint, "PLY checkpoint")->required()->check(CLI::ExistingFile);
    rend->add_option("--frames", frames, "number of turntable poses (default from config)");
    common(rend);

    auto* eval = app.add_subcommand("eval", "score a scene run (or a checkpoint) on held-out views");
    eval->add_option("--checkpoint", checkpoint, "score this checkpoint instead of running the pipeline")
        ->check(CLI::ExistingFile);
    common(eval);

    auto* abl = app.add_subcommand("ablate", "run ablation variants on a harness scene");
    std::vector<std::string> variants = ablation_variants();
    abl->add_option("--variants", variants, "subset of full,no_sr_hook,no_qa_triplet,no_refine")
        ->delimiter(',')
        ->check(CLI::IsMember(ablation_variants()));
    common(abl);

    auto* table = app.add_subcommand("table", "print eval/ablation reports as a table");
    std::vector<std::string> reports;
    table->add_option("reports", reports, "eval.json / ablation.json / report.json files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (table->parsed()) {
            std::cout << format_reports(reports);
            return 0;
        }
        PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
        const CLI::App* cmd = app.get_subcommands().front();
        if (cmd->count("--seed")) config.seed = seed;
        if (!guidance.empty()) config.guidance = guidance;
        if (!refiner.empty()) config.refiner = refiner;
        if (!preprocess.empty()) config.preprocess = preprocess;
        if (!scene.empty()) config.scene = scene;
        config.validate();
        std::cerr << "workers: " << worker_count() << "\n";

        if (gen->parsed()) {
            const GenerateArtifacts a = cmd_generate(config, {input, out_dir, !no_turntable}, std::cerr);
            std::cout << a.checkpoint << "\n" << a.mesh << "\n" << a.report << "\n";
        } else if (mesh->parsed()) {
            std::cout << cmd_mesh(config, checkpoint, out_dir) << "\n";
        } else if (rend->parsed()) {
            for (const auto& p : cmd_render(config, checkpoint, frames < 0 ? config.turntable_frames : frames, out_dir))
                std::cout << p << "\n";
        } else if (eval->parsed()) {
            const EvalReport r = cmd_eval(config, checkpoint, out_dir);
            std::cout << std::fixed << std::setprecision(3) << "PSNR " << r.mean_psnr << " dB, perceptual "
                      << std::setprecision(5) << r.mean_perceptual << "\n";
        } else if (abl->parsed()) {
            const AblationTable t = cmd_ablate(config, variants, out_dir);
            std::cout << t.format();
            if (!t.error.empty()) return 1;
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace splatforge
