#include "splatforge/refine.hpp"

#include "splatforge/optimizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace splatforge {

void RefineConfig::validate() const {
    if (steps_stage2 <= 0) throw InvalidParameter("steps_stage2 must be positive");
    if (!(t_start >= 0.0 && t_start < 1.0)) throw InvalidParameter("t_start must lie in [0, 1)");
    if (views_per_step <= 0) throw InvalidParameter("views_per_step must be positive");
    if (!(texel_lr > 0.0) || !std::isfinite(texel_lr)) throw InvalidParameter("texel_lr must be positive");
    if (resolution_min < 16 || resolution_max < resolution_min)
        throw InvalidParameter("refine resolution range is invalid");
    if (!(fov_y > 0.0 && fov_y < 180.0)) throw InvalidParameter("fov_y must lie in (0, 180)");
}

RefineState RefineState::create(const TexturedMesh& mesh, const RefineConfig& config) {
    config.validate();
    if (!mesh.has_texture()) throw ContractViolation("refinement needs a UV-mapped, textured mesh");
    RefineState s;
    s.m.assign(mesh.texture.pixel_count() * 3, 0.0);
    s.v.assign(mesh.texture.pixel_count() * 3, 0.0);
    s.rng = Rng(config.seed ^ 0x2545f4914f6cdd1dULL);
    return s;
}

double mean_squared_error(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_size(b)) throw ContractViolation("mean_squared_error: size mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data().size());
}

namespace {

ImageRGB add_noise(const ImageRGB& coarse, double t, std::uint64_t seed) {
    if (t == 0.0) return coarse;
    ImageRGB out = coarse;
    Rng noise(seed);
    for (double& x : out.data()) x = x * (1.0 - t) + noise.uniform() * t;
    return out;
}

}  // namespace

RefineReport refine_step(TexturedMesh& mesh, TextureRefiner& refiner, const RefineConfig& config, RefineState& state) {
    if (!mesh.has_texture()) throw ContractViolation("refinement needs a UV-mapped, textured mesh");
    if (state.m.size() != mesh.texture.pixel_count() * 3) throw ContractViolation("refine state does not match texture");

    RefineReport rep;
    rep.step = ++state.step;
    // draw every random quantity up front so a skipped step consumes the same stream
    rep.resolution = state.rng.uniform_int(config.resolution_min, config.resolution_max);
    std::vector<CameraSample> poses;
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < config.views_per_step; ++k) {
        poses.push_back(sample_training_camera(state.rng));
        seeds.push_back(state.rng.next_u64());
    }
    rep.pose = poses.front();

    ImageRGB texel_grad(mesh.texture.width(), mesh.texture.height());
    try {
        for (int k = 0; k < config.views_per_step; ++k) {
            const Camera cam = camera_from_sample(poses[k], config.fov_y, rep.resolution);
            const MeshRenderOutput coarse = render_mesh(mesh, cam);
            const ImageRGB refined = refiner.refine(add_noise(coarse.rgb, config.t_start, seeds[k]), config.t_start,
                                                    poses[k], seeds[k]);
            if (!refined.same_size(coarse.rgb)) throw ContractViolation("refiner changed the image size");
            for (double x : refined.data())
                if (!std::isfinite(x)) throw ContractViolation("refiner produced non-finite output");

            rep.loss += mean_squared_error(refined, coarse.rgb) / config.views_per_step;
            ImageRGB g(coarse.rgb.width(), coarse.rgb.height());
            const double scale = 2.0 / (static_cast<double>(g.data().size()) * config.views_per_step);
            for (std::size_t i = 0; i < g.data().size(); ++i)
                g.data()[i] = scale * (coarse.rgb.data()[i] - refined.data()[i]);
            const ImageRGB tg = backward_texture(coarse, g);
            for (std::size_t i = 0; i < tg.data().size(); ++i) texel_grad.data()[i] += tg.data()[i];
        }
    } catch (const std::exception& e) {
        rep.skipped = true;
        rep.error = e.what();
        rep.loss = 0.0;
        return rep;
    }

    ImageRGBA& tex = mesh.texture;
    for (std::size_t p = 0; p < tex.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) {
            const std::size_t j = p * 3 + c;
            double& x = tex.data()[p * 4 + c];
            Adam::update(x, state.m[j], state.v[j], texel_grad.data()[j], config.texel_lr, rep.step);
            x = std::clamp(x, 0.0, 1.0);
        }
    return rep;
}

std::vector<RefineReport> refine_texture(TexturedMesh& mesh, TextureRefiner& refiner, const RefineConfig& config,
                                         const std::string& log_path) {
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::out | std::ios::trunc);
        if (!log) throw IoError("cannot open refine log: " + log_path);
    }
    RefineState state = RefineState::create(mesh, config);
    std::vector<RefineReport> reports;
    for (int s = 0; s < config.steps_stage2; ++s) {
        reports.push_back(refine_step(mesh, refiner, config, state));
        if (log) log << reports.back().to_json_line() << '\n';
    }
    return reports;
}

std::string RefineReport::to_json_line() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["resolution"] = resolution;
    j["azimuth"] = pose.azimuth;
    j["elevation"] = pose.elevation;
    j["loss"] = loss;
    j["skipped"] = skipped;
    if (skipped) j["error"] = error;
    return j.dump();
}

}  // namespace splatforge
