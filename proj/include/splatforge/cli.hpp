#pragma once

#include "splatforge/config.hpp"
#include "splatforge/pipeline.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace splatforge {

struct GenerateOptions {
    std::string input;  // RGBA image; empty → the harness scene's reference view
    std::string out_dir = "out";
    bool write_turntable = true;
};

/// Artifact paths written by cmd_generate, relative to the output directory.
struct GenerateArtifacts {
    std::string config, reference, preprocessed, train_log, checkpoint, coarse_mesh, refine_log, mesh, report;
    std::vector<std::string> turntable;
};

/// preprocess → stage 1 → checkpoint → mesh → back-projection → stage 2,
/// writing each artifact as soon as its stage finishes.
GenerateArtifacts cmd_generate(const PipelineConfig& config, const GenerateOptions& options, std::ostream& log);

/// Meshes a checkpoint; returns the OBJ path.
std::string cmd_mesh(const PipelineConfig& config, const std::string& checkpoint, const std::string& out_dir);

/// Splat turntable of a checkpoint, one PNG per pose; returns written paths.
std::vector<std::string> cmd_render(const PipelineConfig& config, const std::string& checkpoint, int frames,
                                    const std::string& out_dir);

/// Runs the scene pipeline (or scores an existing checkpoint) and writes eval.json.
EvalReport cmd_eval(const PipelineConfig& config, const std::string& checkpoint, const std::string& out_dir);

AblationTable cmd_ablate(const PipelineConfig& config, const std::vector<std::string>& variants,
                         const std::string& out_dir);

/// Table of mean scores from eval.json / ablation.json files.
std::string format_reports(const std::vector<std::string>& paths);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace splatforge
