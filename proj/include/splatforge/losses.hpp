#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/image.hpp"
#include "splatforge/rasterizer.hpp"

#include <optional>
#include <span>
#include <vector>

namespace splatforge {

using Embedding = std::vector<double>;

// ---------------------------------------------------------------------------
// Plugin seams
// ---------------------------------------------------------------------------

struct GuidanceResult {
    ImageRGB residual;  // ε_φ(I; t, reference, Δp) − ε, per pixel
    double weight = 1.0;  // w(t)
};

/// Noise-prediction guidance. Implementations may throw GuidanceUnavailable.
class GuidanceProvider {
public:
    virtual ~GuidanceProvider() = default;

    virtual GuidanceResult guide(const ImageRGB& render, const CameraSample& pose, int timestep) = 0;

    /// Image the provider would steer the render at `pose` towards, used to
    /// score novel views for contrastive classification. Providers without
    /// such an image return nullopt.
    virtual std::optional<ImageRGB> target_image(const CameraSample& pose, int resolution) = 0;

    /// Whether guide()/target_image() may be called from several threads.
    virtual bool concurrent_safe() const { return false; }
};

/// Perceptual embedding f(·) and distance d(·,·). The base distance is the
/// Euclidean embedding distance; metrics may override it with a structural
/// score as long as it stays symmetric, non-negative and zero on identity.
class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;

    virtual Embedding embed(const ImageRGB& image) const = 0;

    /// Adjoint of embed(): dL/dimage given dL/dembedding.
    virtual ImageRGB embed_backward(const ImageRGB& image, std::span<const double> grad_embedding) const = 0;

    virtual double distance(const ImageRGB& a, const ImageRGB& b) const;
};

/// Embedding made of area-averaged RGB over 4×4, 8×8 and 16×16 grids,
/// normalized so the Euclidean distance is the RMS difference of cell means.
/// distance() is the embedding distance.
class PooledEmbeddingMetric : public PerceptualMetric {
public:
    Embedding embed(const ImageRGB& image) const override;
    ImageRGB embed_backward(const ImageRGB& image, std::span<const double> grad_embedding) const override;

    static constexpr int kGrids[3] = {4, 8, 16};
    static constexpr std::size_t kLength = 3 * (4 * 4 + 8 * 8 + 16 * 16);
};

/// Default metric: pooled embedding for the triplet loss, multi-scale
/// structural dissimilarity (default_perceptual_distance) for scoring.
class StructuralMetric : public PooledEmbeddingMetric {
public:
    double distance(const ImageRGB& a, const ImageRGB& b) const override;
};

/// 1 − mean over three dyadic scales of SSIM computed on 8×8 windows
/// (stride 4, per channel). Symmetric, 0 on identical images, in [0, 2].
/// Requires equal sizes of at least 32×32.
double default_perceptual_distance(const ImageRGB& a, const ImageRGB& b);

inline constexpr int kSsimWindow = 8;
inline constexpr int kSsimStride = 4;
inline constexpr int kSsimScales = 3;

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct ReferenceLoss {
    double loss = 0.0;
    double rgb_mse = 0.0;
    double alpha_mse = 0.0;
    ImageRGB grad_rgb;
    ImageGray grad_alpha;
};

/// w_rgb·mean‖I_RGB − Ĩ_RGB‖² + w_a·mean‖I_A − Ĩ_A‖², means over all image
/// elements, with exact gradients.
ReferenceLoss reference_loss(const ImageRGB& rgb, const ImageGray& alpha, const ImageRGBA& reference, double w_rgb,
                             double w_a);

inline ReferenceLoss reference_loss(const RenderOutput& render, const ImageRGBA& reference, double w_rgb,
                                    double w_a) {
    return reference_loss(render.rgb, render.alpha, reference, w_rgb, w_a);
}

struct SdsGradient {
    ImageRGB grad_rgb;
    double weight = 0.0;
    /// ½·w·Σ residual², the energy whose gradient the residual represents
    /// when the provider is an oracle; reported, never differentiated.
    double energy = 0.0;
};

/// grad_rgb = w(t)·residual. Provider failures surface as GuidanceUnavailable.
SdsGradient sds_gradient(const ImageRGB& render, GuidanceProvider& provider, const CameraSample& pose, int timestep);

/// Q(n) = log2(1 + n).
double quantity_weight(std::size_t count);

struct SampleSet {
    Embedding anchor;
    std::vector<Embedding> positives;
    std::vector<Embedding> negatives;
};

struct TripletLoss {
    double loss = 0.0;
    double positive_distance = 0.0;  // mean anchor-positive distance, 0 if none
    double negative_distance = 0.0;
    bool active = false;             // hinge strictly positive
    Embedding grad_anchor;
    std::vector<Embedding> grad_positives;
    std::vector<Embedding> grad_negatives;
};

/// max(0, Q(N_p)·d(a,p) − Q(N_n)·d(a,n) + margin) with set distances taken as
/// the mean embedding distance, plus exact subgradients (0 at ties and at
/// coincident embeddings). Throws NoSamples when both sets are empty.
TripletLoss qa_triplet_loss(const SampleSet& samples, double margin);

struct Candidate {
    ImageRGB render;
    ImageRGB target;
};

struct Classification {
    SampleSet samples;
    std::vector<double> scores;           // metric distance render↔target
    std::vector<bool> positive;           // per candidate
    std::vector<std::size_t> positive_index;  // candidate index of samples.positives[k]
    std::vector<std::size_t> negative_index;
};

/// score < threshold → positive, else negative. Anchor = metric.embed(anchor_view).
Classification classify_samples(const ImageRGB& anchor_view, const std::vector<Candidate>& candidates,
                                const PerceptualMetric& metric, double threshold);

}  // namespace splatforge
