#include "splatforge/optimizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

namespace splatforge {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw InvalidParameter(what);
    };
    require(num_particles > 0, "num_particles must be positive");
    require(init_opacity > 0.0 && init_opacity < 1.0, "init_opacity must be in (0, 1)");
    require(init_radius > 0.0, "init_radius must be positive");
    require(steps_stage1 > 0, "steps_stage1 must be positive");
    require(densify_interval > 0, "densify_interval must be positive");
    require(resolution_start >= 32 && resolution_start <= resolution_end, "resolution schedule must rise from >= 32");
    require(w_rgb_end >= 0.0 && w_a_end >= 0.0, "loss weights must be >= 0");
    require(lpips_threshold > 0.0, "lpips_threshold must be positive");
    require(batch_novel_views > 0, "batch_novel_views must be positive");
    require(margin_start >= 0.0 && margin_start <= margin_end, "margin schedule must be non-negative and rising");
    require(triplet_weight >= 0.0, "triplet_weight must be >= 0");
    require(fov_y > 0.0 && fov_y < 180.0, "fov_y must be in (0, 180)");
    require(lr.center >= 0 && lr.center_final >= 0 && lr.color >= 0 && lr.opacity >= 0 && lr.scale >= 0 &&
                lr.rotation >= 0,
            "learning rates must be >= 0");
    require(densify_grad_threshold > 0.0 && split_scale_threshold > 0.0 && prune_opacity_threshold >= 0.0,
            "densify thresholds must be positive");
    require(max_gaussians >= 0, "max_gaussians must be >= 0");
}

OptState OptState::create(const GaussianCloud& cloud, const TrainConfig& config) {
    OptState s;
    s.m.assign(cloud.size(), GaussianParams{});
    s.v.assign(cloud.size(), GaussianParams{});
    s.grad_accum.assign(cloud.size(), 0.0);
    s.grad_count.assign(cloud.size(), 0);
    s.margin = config.margin_start;
    s.resolution = config.resolution_start;
    // separate stream from init_cloud's
    s.rng = Rng(config.seed ^ 0x5851f42d4c957f2dULL);
    return s;
}

Schedule schedule(int step, const TrainConfig& config) {
    if (step < 0 || step > config.steps_stage1) throw InvalidParameter("schedule: step outside [0, steps_stage1]");
    const double s = static_cast<double>(step) / config.steps_stage1;
    Schedule out;
    out.w_rgb = config.w_rgb_end * s;
    out.w_a = config.w_a_end * s;
    const double res = config.resolution_start + (config.resolution_end - config.resolution_start) * s;
    out.resolution = static_cast<int>(std::lround(res / 8.0)) * 8;
    out.margin = config.margin_start + (config.margin_end - config.margin_start) * s;
    return out;
}

double center_learning_rate(int step, const TrainConfig& config) {
    const double s = std::clamp(static_cast<double>(step) / config.steps_stage1, 0.0, 1.0);
    return config.lr.center_final + (config.lr.center - config.lr.center_final) * 0.5 * (1.0 + std::cos(kPi * s));
}

GaussianCloud init_cloud(const TrainConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const std::size_t n = static_cast<std::size_t>(config.num_particles);
    std::vector<Vec3> centers;
    std::vector<Quat> rotations;
    centers.reserve(n);
    while (centers.size() < n) {
        const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (p.squaredNorm() > 1.0) continue;
        centers.push_back(p * config.init_radius);
        Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        rotations.push_back(q.normalized());
    }

    // isotropic scale = mean nearest-neighbour distance
    double scale = config.init_radius;
    if (n > 1) {
        std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) nearest[i] = std::min(nearest[i], (centers[i] - centers[j]).squaredNorm());
        double acc = 0.0;
        for (double d : nearest) acc += std::sqrt(d);
        scale = acc / static_cast<double>(n);
    }

    GaussianCloud cloud;
    cloud.gaussians.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        cloud.gaussians.push_back(
            Gaussian3D::make(centers[i], Vec3::Constant(scale), rotations[i], config.init_opacity, Vec3::Constant(0.5)));
    cloud.quantize_to_f32();
    return cloud;
}

DensifyReport densify_and_prune(GaussianCloud& cloud, OptState& state, const TrainConfig& config) {
    if (state.size() != cloud.size()) throw ContractViolation("densify_and_prune: state does not match cloud");
    DensifyReport rep;
    rep.before = cloud.size();
    const std::size_t n = cloud.size();

    std::vector<double> mean_grad(n, 0.0);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        if (state.grad_count[i] > 0) mean_grad[i] = state.grad_accum[i] / state.grad_count[i];
        if (mean_grad[i] > config.densify_grad_threshold) candidates.push_back(i);
    }
    if (config.max_gaussians > 0) {
        // each candidate adds one Gaussian
        const std::size_t budget = n >= static_cast<std::size_t>(config.max_gaussians)
                                       ? 0
                                       : static_cast<std::size_t>(config.max_gaussians) - n;
        if (candidates.size() > budget) {
            std::stable_sort(candidates.begin(), candidates.end(),
                             [&](std::size_t a, std::size_t b) { return mean_grad[a] > mean_grad[b]; });
            candidates.resize(budget);
            std::sort(candidates.begin(), candidates.end());
            rep.capped = true;
        }
    }

    std::vector<Gaussian3D> kept;
    std::vector<GaussianParams> m, v;
    kept.reserve(n + candidates.size());
    std::vector<std::uint8_t> is_candidate(n, 0);
    for (std::size_t i : candidates) is_candidate[i] = 1;

    std::vector<Gaussian3D> appended;
    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian3D& g = cloud.gaussians[i];
        if (!is_candidate[i]) {
            kept.push_back(g);
            m.push_back(state.m[i]);
            v.push_back(state.v[i]);
            continue;
        }
        const Vec3 s = g.scale();
        if (s.maxCoeff() < config.split_scale_threshold) {
            kept.push_back(g);
            m.push_back(state.m[i]);
            v.push_back(state.v[i]);
            appended.push_back(g);
            ++rep.cloned;
        } else {
            int axis = 0;
            s.maxCoeff(&axis);
            const Vec3 offset = quat_to_matrix(g.rotation()).col(axis) * (0.5 * s[axis]);
            Gaussian3D a = g, b = g;
            a.center = g.center + offset;
            b.center = g.center - offset;
            a.set_scale(s / 1.6);
            b.set_scale(s / 1.6);
            kept.push_back(a);
            m.push_back(GaussianParams{});
            v.push_back(GaussianParams{});
            appended.push_back(b);
            ++rep.split;
        }
    }
    for (const auto& g : appended) {
        kept.push_back(g);
        m.push_back(GaussianParams{});
        v.push_back(GaussianParams{});
    }

    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < kept.size(); ++i)
        if (!(kept[i].opacity() < config.prune_opacity_threshold)) survivors.push_back(i);
    if (survivors.empty()) {
        rep.collapse_guard = true;
        std::vector<std::size_t> order(kept.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return kept[a].opacity() > kept[b].opacity(); });
        order.resize(std::min<std::size_t>(16, order.size()));
        std::sort(order.begin(), order.end());
        survivors = order;
    }
    rep.pruned = kept.size() - survivors.size();

    GaussianCloud out;
    out.generation = cloud.generation + 1;
    OptState& s = state;
    s.m.clear();
    s.v.clear();
    for (std::size_t i : survivors) {
        out.gaussians.push_back(kept[i]);
        s.m.push_back(m[i]);
        s.v.push_back(v[i]);
    }
    out.quantize_to_f32();
    s.grad_accum.assign(out.size(), 0.0);
    s.grad_count.assign(out.size(), 0);
    cloud = std::move(out);
    rep.after = cloud.size();
    return rep;
}

Camera reference_camera(const TrainConfig& config, int resolution) {
    return camera_from_sample(CameraSample{0.0, 0.0, kOrbitRadius}, config.fov_y, resolution);
}

namespace {

double group_learning_rate(int k, int step, const TrainConfig& config) {
    if (k < param::kColor) return center_learning_rate(step, config);
    if (k < param::kOpacity) return config.lr.color;
    if (k < param::kScale) return config.lr.opacity;
    if (k < param::kRotation) return config.lr.scale;
    return config.lr.rotation;
}

void add_into(ImageRGB& dst, const ImageRGB& src, double scale) {
    auto d = dst.data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

}  // namespace

StepReport training_step(GaussianCloud& cloud, OptState& state, const TrainConfig& config,
                         GuidanceProvider& guidance, const PerceptualMetric& metric, const ImageRGBA& reference) {
    if (state.size() != cloud.size()) throw ContractViolation("training_step: state does not match cloud");
    if (state.step >= config.steps_stage1) throw ContractViolation("training_step: stage-1 steps exhausted");
    if (cloud.empty()) throw ContractViolation("training_step: empty cloud");

    StepReport rep;
    rep.step = ++state.step;
    const Schedule sched = schedule(rep.step, config);
    const int res = sched.resolution;
    state.margin = sched.margin;
    state.resolution = res;
    rep.resolution = res;
    rep.w_rgb = sched.w_rgb;
    rep.w_a = sched.w_a;
    rep.margin = sched.margin;

    // All random draws of the step happen up front, in a fixed order.
    const int batch = config.batch_novel_views;
    for (int k = 0; k < batch; ++k) {
        rep.views.push_back(sample_training_camera(state.rng));
        rep.timesteps.push_back(state.rng.uniform_int(20, 980));
    }

    const ImageRGBA ref_img = reference.same_size(res, res) ? reference : resample(reference, res, res);
    const RenderOutput ref_render = render(cloud, reference_camera(config, res));
    const ReferenceLoss rl = reference_loss(ref_render, ref_img, sched.w_rgb, sched.w_a);
    rep.reference_loss = rl.loss;
    rep.rgb_mse = rl.rgb_mse;
    rep.alpha_mse = rl.alpha_mse;

    std::vector<RenderOutput> renders;
    std::vector<ImageRGB> view_grads;
    std::vector<std::optional<ImageRGB>> targets;
    for (int k = 0; k < batch; ++k) {
        const Camera cam = camera_from_sample(rep.views[k], config.fov_y, res);
        renders.push_back(render(cloud, cam));
        ImageRGB grad(res, res);
        try {
            const SdsGradient sds = sds_gradient(renders.back().rgb, guidance, rep.views[k], rep.timesteps[k]);
            grad = sds.grad_rgb;
            rep.sds_energy += sds.energy;
        } catch (const GuidanceUnavailable&) {
            rep.sds_skipped = true;
        }
        view_grads.push_back(std::move(grad));
        if (config.triplet_weight > 0.0) {
            try {
                targets.push_back(guidance.target_image(rep.views[k], res));
            } catch (const GuidanceUnavailable&) {
                targets.push_back(std::nullopt);
            }
        }
    }
    if (rep.sds_skipped) {
        // the SDS term is all-or-nothing per step
        for (auto& g : view_grads) g = ImageRGB(res, res);
        rep.sds_energy = 0.0;
    }

    if (config.triplet_weight > 0.0) {
        std::vector<Candidate> candidates;
        for (int k = 0; k < batch; ++k) {
            if (!targets[k] || !targets[k]->same_size(res, res)) {
                candidates.clear();
                break;
            }
            candidates.push_back({renders[k].rgb, *targets[k]});
        }
        try {
            if (candidates.empty()) throw NoSamples("no guidance targets for contrastive classification");
            const Classification cls = classify_samples(rgb_of(ref_img), candidates, metric, config.lpips_threshold);
            rep.num_positive = static_cast<int>(cls.samples.positives.size());
            rep.num_negative = static_cast<int>(cls.samples.negatives.size());
            const TripletLoss tl = qa_triplet_loss(cls.samples, sched.margin);
            rep.triplet_loss = tl.loss;
            if (tl.active) {
                // anchor is detached: only the rendered candidates receive gradient
                for (std::size_t j = 0; j < tl.grad_positives.size(); ++j) {
                    const std::size_t k = cls.positive_index[j];
                    add_into(view_grads[k], metric.embed_backward(renders[k].rgb, tl.grad_positives[j]),
                             config.triplet_weight);
                }
                for (std::size_t j = 0; j < tl.grad_negatives.size(); ++j) {
                    const std::size_t k = cls.negative_index[j];
                    add_into(view_grads[k], metric.embed_backward(renders[k].rgb, tl.grad_negatives[j]),
                             config.triplet_weight);
                }
            }
        } catch (const NoSamples&) {
            rep.triplet_skipped = true;
            rep.num_positive = rep.num_negative = 0;
            rep.triplet_loss = 0.0;
        }
    } else {
        rep.triplet_skipped = true;
    }
    rep.total_loss = rep.reference_loss + rep.sds_energy + config.triplet_weight * rep.triplet_loss;

    // Backpropagate every view; reduction in fixed view order.
    const std::size_t n = cloud.size();
    ParamGradients total(n);
    auto absorb = [&](const ParamGradients& g) {
        for (std::size_t i = 0; i < n; ++i) {
            for (int k = 0; k < kParamsPerGaussian; ++k) total.grads[i][k] += g.grads[i][k];
            if (g.visible[i]) {
                state.grad_accum[i] += g.screen_grad_norm[i];
                ++state.grad_count[i];
            }
        }
    };
    absorb(backward(ref_render, rl.grad_rgb, rl.grad_alpha));
    for (int k = 0; k < batch; ++k) absorb(backward(renders[k], view_grads[k]));
    if (!total.all_finite()) throw ContractViolation("training_step: non-finite gradient");

    for (std::size_t i = 0; i < n; ++i) {
        GaussianParams p = cloud.gaussians[i].to_params();
        for (int k = 0; k < kParamsPerGaussian; ++k)
            Adam::update(p[k], state.m[i][k], state.v[i][k], total.grads[i][k],
                         group_learning_rate(k, rep.step, config), rep.step);
        cloud.gaussians[i] = Gaussian3D::from_params(p);
    }
    cloud.quantize_to_f32();

    if (rep.step % config.densify_interval == 0 && rep.step < config.steps_stage1) {
        rep.densify = densify_and_prune(cloud, state, config);
        rep.densified = true;
    }
    rep.num_gaussians = cloud.size();
    return rep;
}

std::vector<StepReport> train(GaussianCloud& cloud, OptState& state, const TrainConfig& config,
                              GuidanceProvider& guidance, const PerceptualMetric& metric, const ImageRGBA& reference,
                              const std::string& log_path) {
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::out | std::ios::trunc);
        if (!log) throw IoError("cannot open step log: " + log_path);
    }
    std::vector<StepReport> reports;
    while (state.step < config.steps_stage1) {
        reports.push_back(training_step(cloud, state, config, guidance, metric, reference));
        if (log) log << reports.back().to_json_line() << '\n';
    }
    return reports;
}

std::string StepReport::to_json_line() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["resolution"] = resolution;
    j["w_rgb"] = w_rgb;
    j["w_a"] = w_a;
    j["margin"] = margin;
    j["reference_loss"] = reference_loss;
    j["rgb_mse"] = rgb_mse;
    j["alpha_mse"] = alpha_mse;
    j["sds_energy"] = sds_energy;
    j["triplet_loss"] = triplet_loss;
    j["total_loss"] = total_loss;
    j["num_positive"] = num_positive;
    j["num_negative"] = num_negative;
    j["sds_skipped"] = sds_skipped;
    j["triplet_skipped"] = triplet_skipped;
    auto& views_json = j["views"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < views.size(); ++k)
        views_json.push_back({{"azimuth", views[k].azimuth},
                              {"elevation", views[k].elevation},
                              {"timestep", timesteps[k]}});
    j["num_gaussians"] = num_gaussians;
    if (densified)
        j["densify"] = {{"before", densify.before}, {"cloned", densify.cloned},     {"split", densify.split},
                        {"pruned", densify.pruned}, {"after", densify.after},       {"collapse_guard", densify.collapse_guard},
                        {"capped", densify.capped}};
    return j.dump();
}

}  // namespace splatforge
