#pragma once

#include "splatforge/optimizer.hpp"
#include "splatforge/refine.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace splatforge {

/// Everything a generation run depends on. Text form is flat
/// `key = value` lines grouped by `[section]`; `#` starts a comment.
struct PipelineConfig {
    TrainConfig train;
    RefineConfig refine;

    // meshing
    double density_threshold = 1.0;
    int texture_size = 1024;
    double cull_cosine = 0.3;
    int backproject_resolution = 512;
    int dilation_passes = 8;

    // pipeline
    std::uint64_t seed = 0;
    std::string scene = "two-blob";
    int input_resolution = 256;
    int upscale_factor = 4;
    std::string preprocess = "bicubic";  // bicubic | none
    std::string guidance = "oracle";     // oracle | none
    std::string refiner = "oracle";      // oracle | identity
    bool run_refine = true;
    int turntable_frames = 16;
    int turntable_resolution = 256;

    /// Copies the seed and camera FOV into the stage configs.
    PipelineConfig resolved() const;

    /// Throws InvalidParameter on any out-of-range or unknown choice.
    void validate() const;
};

/// Parses the text form over the defaults. Unknown sections or keys,
/// malformed lines and unparsable values throw ParseError with the byte
/// offset of the offending line.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

/// Text form that parse_config reads back to an identical config.
std::string config_to_text(const PipelineConfig& config);

/// Fully resolved echo, including the fixed camera-orbit constants.
nlohmann::ordered_json config_to_json(const PipelineConfig& config);

}  // namespace splatforge
