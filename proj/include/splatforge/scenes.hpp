#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "splatforge/losses.hpp"
#include "splatforge/refine.hpp"

#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace splatforge {

/// Procedural ground-truth scene: a few hundred colored Gaussians.
struct SyntheticScene {
    std::string id;
    std::uint64_t seed = 0;
    GaussianCloud cloud;
};

/// "sphere-shell", "box" or "two-blob". Throws InvalidParameter otherwise.
SyntheticScene make_scene(const std::string& id, std::uint64_t seed);
std::vector<std::string> scene_ids();

/// Ground-truth RGBA render at `pose`.
ImageRGBA render_ground_truth(const SyntheticScene& scene, const CameraSample& pose, int resolution,
                              double fov_y = kDefaultFovY);

/// Residual = render − ground-truth render at the same pose, w(t) = 1.
class OracleGuidance final : public GuidanceProvider {
public:
    explicit OracleGuidance(std::shared_ptr<const SyntheticScene> scene, double fov_y = kDefaultFovY);

    GuidanceResult guide(const ImageRGB& render, const CameraSample& pose, int timestep) override;
    std::optional<ImageRGB> target_image(const CameraSample& pose, int resolution) override;
    bool concurrent_safe() const override { return true; }

    ImageRGB target(const CameraSample& pose, int resolution);

private:
    std::shared_ptr<const SyntheticScene> scene_;
    double fov_y_;
    struct Entry {
        CameraSample pose;
        int resolution;
        ImageRGB image;
    };
    std::mutex mutex_;
    std::vector<Entry> recent_;  // small FIFO; guide() and target_image() share a pose within a step
};

/// Guidance that is never available; training proceeds on the reference term.
class NoGuidance final : public GuidanceProvider {
public:
    GuidanceResult guide(const ImageRGB&, const CameraSample&, int) override {
        throw GuidanceUnavailable("guidance disabled");
    }
    std::optional<ImageRGB> target_image(const CameraSample&, int) override { return std::nullopt; }
    bool concurrent_safe() const override { return true; }
};

/// Ignores the noisy input and returns the ground-truth render at the pose.
class OracleRefiner final : public TextureRefiner {
public:
    explicit OracleRefiner(std::shared_ptr<const SyntheticScene> scene, double fov_y = kDefaultFovY)
        : scene_(std::move(scene)), fov_y_(fov_y) {}

    ImageRGB refine(const ImageRGB& noisy, double t_start, const CameraSample& pose, std::uint64_t noise_seed) override;
    bool concurrent_safe() const override { return true; }

private:
    std::shared_ptr<const SyntheticScene> scene_;
    double fov_y_;
};

/// 10·log10(1/mse) over RGB with mse floored at 1e-10.
double psnr(const ImageRGB& a, const ImageRGB& b);

}  // namespace splatforge
