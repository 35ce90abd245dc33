#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "splatforge/losses.hpp"
#include "splatforge/random.hpp"
#include "splatforge/rasterizer.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace splatforge {

struct LearningRates {
    double center = 1.6e-4;
    double center_final = 1.6e-6;  // cosine decay target
    double color = 2.5e-3;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct TrainConfig {
    int num_particles = 5000;
    double init_opacity = 0.1;
    double init_radius = 0.5;
    int steps_stage1 = 500;
    int densify_interval = 100;
    int resolution_start = 64;
    int resolution_end = 512;
    double w_rgb_end = 1e4;
    double w_a_end = 1e3;
    double lpips_threshold = 0.3;
    int batch_novel_views = 2;
    double margin_start = 0.1;
    double margin_end = 0.5;
    double triplet_weight = 1.0;
    double fov_y = kDefaultFovY;
    LearningRates lr;

    double densify_grad_threshold = 2e-4;  // mean NDC positional gradient
    double split_scale_threshold = 0.04;   // 2% of the (−1,1)³ extent
    double prune_opacity_threshold = 0.01;
    /// 0 = unbounded. Candidates are taken by decreasing gradient when a
    /// densify pass would exceed it.
    int max_gaussians = 0;

    std::uint64_t seed = 0;

    /// Throws InvalidParameter on non-positive counts or decreasing schedules.
    void validate() const;
};

/// Adaptive-moment state, one 14-vector per Gaussian for each moment.
struct OptState {
    std::vector<GaussianParams> m;
    std::vector<GaussianParams> v;
    std::vector<double> grad_accum;  // Σ per-view NDC positional gradient norms
    std::vector<int> grad_count;     // views in which the Gaussian was visible
    int step = 0;
    double margin = 0.0;
    int resolution = 0;
    Rng rng;

    static OptState create(const GaussianCloud& cloud, const TrainConfig& config);
    std::size_t size() const { return m.size(); }
};

struct Schedule {
    double w_rgb = 0.0;
    double w_a = 0.0;
    int resolution = 0;
    double margin = 0.0;
};

Schedule schedule(int step, const TrainConfig& config);

/// Learning rate of the center group at `step` (cosine from lr.center to lr.center_final).
double center_learning_rate(int step, const TrainConfig& config);

GaussianCloud init_cloud(const TrainConfig& config);

struct DensifyReport {
    std::size_t before = 0;
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    std::size_t after = 0;
    bool collapse_guard = false;  // everything would have been pruned
    bool capped = false;          // max_gaussians limited the candidates
};

DensifyReport densify_and_prune(GaussianCloud& cloud, OptState& state, const TrainConfig& config);

/// Camera the reference image is assumed to be taken from.
Camera reference_camera(const TrainConfig& config, int resolution);

struct StepReport {
    int step = 0;
    int resolution = 0;
    double w_rgb = 0.0;
    double w_a = 0.0;
    double margin = 0.0;
    double reference_loss = 0.0;
    double rgb_mse = 0.0;
    double alpha_mse = 0.0;
    double sds_energy = 0.0;
    double triplet_loss = 0.0;
    double total_loss = 0.0;
    int num_positive = 0;
    int num_negative = 0;
    bool sds_skipped = false;
    bool triplet_skipped = false;
    std::vector<CameraSample> views;
    std::vector<int> timesteps;
    std::size_t num_gaussians = 0;
    bool densified = false;
    DensifyReport densify;

    std::string to_json_line() const;
};

/// One stage-1 iteration; mutates cloud and state in place.
StepReport training_step(GaussianCloud& cloud, OptState& state, const TrainConfig& config,
                         GuidanceProvider& guidance, const PerceptualMetric& metric, const ImageRGBA& reference);

/// Runs all remaining stage-1 steps. When `log_path` is non-empty each
/// StepReport is appended there as one JSON line.
std::vector<StepReport> train(GaussianCloud& cloud, OptState& state, const TrainConfig& config,
                              GuidanceProvider& guidance, const PerceptualMetric& metric, const ImageRGBA& reference,
                              const std::string& log_path = {});

/// Plain adaptive-moment update shared with texture refinement.
struct Adam {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-15;

    /// Updates x from gradient g with bias correction at (1-based) step t.
    static void update(double& x, double& m, double& v, double g, double lr, int t) {
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g * g;
        const double mhat = m / (1.0 - std::pow(kBeta1, t));
        const double vhat = v / (1.0 - std::pow(kBeta2, t));
        x -= lr * mhat / (std::sqrt(vhat) + kEpsilon);
    }
};

}  // namespace splatforge
