#include "splatforge/config.hpp"

#include "splatforge/camera.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace splatforge {

namespace {

std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

struct Field {
    const char* section;
    const char* key;
    std::function<bool(PipelineConfig&, const std::string&)> set;  // false on a bad value
    std::function<std::string(const PipelineConfig&)> get;
    std::function<nlohmann::ordered_json(const PipelineConfig&)> json;
};

template <typename T>
Field numeric(const char* section, const char* key, T& (*ref)(PipelineConfig&)) {
    return {section, key,
            [ref](PipelineConfig& c, const std::string& v) { return parse_number(v, ref(c)); },
            [ref](const PipelineConfig& c) {
                const T x = ref(const_cast<PipelineConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) return format_double(x);
                else return std::to_string(x);
            },
            [ref](const PipelineConfig& c) { return nlohmann::ordered_json(ref(const_cast<PipelineConfig&>(c))); }};
}

Field text(const char* section, const char* key, std::string& (*ref)(PipelineConfig&)) {
    return {section, key,
            [ref](PipelineConfig& c, const std::string& v) {
                ref(c) = v;
                return true;
            },
            [ref](const PipelineConfig& c) { return ref(const_cast<PipelineConfig&>(c)); },
            [ref](const PipelineConfig& c) { return nlohmann::ordered_json(ref(const_cast<PipelineConfig&>(c))); }};
}

Field flag(const char* section, const char* key, bool& (*ref)(PipelineConfig&)) {
    return {section, key,
            [ref](PipelineConfig& c, const std::string& v) {
                if (v == "true") ref(c) = true;
                else if (v == "false") ref(c) = false;
                else return false;
                return true;
            },
            [ref](const PipelineConfig& c) { return std::string(ref(const_cast<PipelineConfig&>(c)) ? "true" : "false"); },
            [ref](const PipelineConfig& c) { return nlohmann::ordered_json(ref(const_cast<PipelineConfig&>(c))); }};
}

#define F_NUM(sec, key, member) numeric(sec, key, +[](PipelineConfig& c) -> auto& { return c.member; })
#define F_TEXT(sec, key, member) text(sec, key, +[](PipelineConfig& c) -> std::string& { return c.member; })
#define F_FLAG(sec, key, member) flag(sec, key, +[](PipelineConfig& c) -> bool& { return c.member; })

const std::vector<Field>& fields() {
    static const std::vector<Field> all = {
        F_NUM("pipeline", "seed", seed),
        F_TEXT("pipeline", "scene", scene),
        F_NUM("pipeline", "input_resolution", input_resolution),
        F_NUM("pipeline", "upscale_factor", upscale_factor),
        F_TEXT("pipeline", "preprocess", preprocess),
        F_TEXT("pipeline", "guidance", guidance),
        F_TEXT("pipeline", "refiner", refiner),
        F_FLAG("pipeline", "run_refine", run_refine),
        F_NUM("pipeline", "turntable_frames", turntable_frames),
        F_NUM("pipeline", "turntable_resolution", turntable_resolution),

        F_NUM("camera", "fov_y", train.fov_y),

        F_NUM("train", "num_particles", train.num_particles),
        F_NUM("train", "init_opacity", train.init_opacity),
        F_NUM("train", "init_radius", train.init_radius),
        F_NUM("train", "steps_stage1", train.steps_stage1),
        F_NUM("train", "densify_interval", train.densify_interval),
        F_NUM("train", "resolution_start", train.resolution_start),
        F_NUM("train", "resolution_end", train.resolution_end),
        F_NUM("train", "w_rgb_end", train.w_rgb_end),
        F_NUM("train", "w_a_end", train.w_a_end),
        F_NUM("train", "lpips_threshold", train.lpips_threshold),
        F_NUM("train", "batch_novel_views", train.batch_novel_views),
        F_NUM("train", "margin_start", train.margin_start),
        F_NUM("train", "margin_end", train.margin_end),
        F_NUM("train", "triplet_weight", train.triplet_weight),
        F_NUM("train", "densify_grad_threshold", train.densify_grad_threshold),
        F_NUM("train", "split_scale_threshold", train.split_scale_threshold),
        F_NUM("train", "prune_opacity_threshold", train.prune_opacity_threshold),
        F_NUM("train", "max_gaussians", train.max_gaussians),
        F_NUM("train", "lr_center", train.lr.center),
        F_NUM("train", "lr_center_final", train.lr.center_final),
        F_NUM("train", "lr_color", train.lr.color),
        F_NUM("train", "lr_opacity", train.lr.opacity),
        F_NUM("train", "lr_scale", train.lr.scale),
        F_NUM("train", "lr_rotation", train.lr.rotation),

        F_NUM("refine", "steps_stage2", refine.steps_stage2),
        F_NUM("refine", "t_start", refine.t_start),
        F_NUM("refine", "views_per_step", refine.views_per_step),
        F_NUM("refine", "texel_lr", refine.texel_lr),
        F_NUM("refine", "resolution_min", refine.resolution_min),
        F_NUM("refine", "resolution_max", refine.resolution_max),

        F_NUM("mesh", "density_threshold", density_threshold),
        F_NUM("mesh", "texture_size", texture_size),
        F_NUM("mesh", "cull_cosine", cull_cosine),
        F_NUM("mesh", "backproject_resolution", backproject_resolution),
        F_NUM("mesh", "dilation_passes", dilation_passes),
    };
    return all;
}

#undef F_NUM
#undef F_TEXT
#undef F_FLAG

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_power_of_two(int x) { return x > 0 && (x & (x - 1)) == 0; }

}  // namespace

PipelineConfig PipelineConfig::resolved() const {
    PipelineConfig c = *this;
    c.train.seed = seed;
    c.refine.seed = seed;
    c.refine.fov_y = train.fov_y;
    return c;
}

void PipelineConfig::validate() const {
    train.validate();
    refine.validate();
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw InvalidParameter(what);
    };
    require(density_threshold > 0.0, "density_threshold must be positive");
    require(is_power_of_two(texture_size) && texture_size >= 256 && texture_size <= 2048,
            "texture_size must be a power of two in [256, 2048]");
    require(cull_cosine >= 0.0 && cull_cosine < 1.0, "cull_cosine must lie in [0, 1)");
    require(backproject_resolution >= 32, "backproject_resolution must be >= 32");
    require(dilation_passes >= 0, "dilation_passes must be >= 0");
    require(input_resolution >= 32, "input_resolution must be >= 32");
    require(upscale_factor >= 1 && upscale_factor <= 8, "upscale_factor must lie in [1, 8]");
    require(preprocess == "bicubic" || preprocess == "none", "preprocess must be bicubic or none");
    require(guidance == "oracle" || guidance == "none", "guidance must be oracle or none");
    require(refiner == "oracle" || refiner == "identity", "refiner must be oracle or identity");
    require(turntable_frames >= 0, "turntable_frames must be >= 0");
    require(turntable_resolution >= 16, "turntable_resolution must be >= 16");
}

PipelineConfig parse_config(const std::string& input) {
    PipelineConfig c;
    std::string section = "pipeline";
    std::size_t offset = 0;
    while (offset < input.size() || offset == 0) {
        std::size_t end = input.find('\n', offset);
        if (end == std::string::npos) end = input.size();
        std::string line = input.substr(offset, end - offset);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (!line.empty()) {
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError("malformed section header", offset);
                section = trim(line.substr(1, line.size() - 2));
                bool known = false;
                for (const auto& f : fields()) known |= section == f.section;
                if (!known) throw ParseError("unknown section [" + section + "]", offset);
            } else {
                const auto eq = line.find('=');
                if (eq == std::string::npos) throw ParseError("expected key = value", offset);
                const std::string key = trim(line.substr(0, eq));
                const std::string value = trim(line.substr(eq + 1));
                const Field* field = nullptr;
                for (const auto& f : fields())
                    if (section == f.section && key == f.key) field = &f;
                if (!field) throw ParseError("unknown key '" + key + "' in [" + section + "]", offset);
                if (!field->set(c, value)) throw ParseError("bad value for " + key + ": '" + value + "'", offset);
            }
        }
        if (end >= input.size()) break;
        offset = end + 1;
    }
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_text(const PipelineConfig& config) {
    std::string out, section;
    for (const auto& f : fields()) {
        if (section != f.section) {
            section = f.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(f.key) + " = " + f.get(config) + "\n";
    }
    return out;
}

nlohmann::ordered_json config_to_json(const PipelineConfig& config) {
    nlohmann::ordered_json j;
    for (const auto& f : fields()) j[f.section][f.key] = f.json(config);
    j["camera"]["radius"] = kOrbitRadius;
    j["camera"]["azimuth_min"] = kAzimuthMin;
    j["camera"]["azimuth_max"] = kAzimuthMax;
    j["camera"]["elevation_min"] = kElevationMin;
    j["camera"]["elevation_max"] = kElevationMax;
    return j;
}

}  // namespace splatforge
