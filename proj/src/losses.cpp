#include "splatforge/losses.hpp"

#include <algorithm>
#include <cmath>

namespace splatforge {

// --- metrics -----------------------------------------------------------------

double PerceptualMetric::distance(const ImageRGB& a, const ImageRGB& b) const {
    const Embedding fa = embed(a);
    const Embedding fb = embed(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) acc += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    return std::sqrt(acc);
}

namespace {

inline int cell_of(int x, int extent, int grid) {
    return static_cast<int>((static_cast<long long>(x) * grid) / extent);
}

}  // namespace

Embedding PooledEmbeddingMetric::embed(const ImageRGB& image) const {
    if (image.width() < 16 || image.height() < 16) throw ContractViolation("embed: image smaller than 16x16");
    Embedding out;
    out.reserve(kLength);
    for (int grid : kGrids) {
        std::vector<double> sums(static_cast<std::size_t>(grid) * grid * 3, 0.0);
        std::vector<int> counts(static_cast<std::size_t>(grid) * grid, 0);
        for (int y = 0; y < image.height(); ++y) {
            const int cy = cell_of(y, image.height(), grid);
            for (int x = 0; x < image.width(); ++x) {
                const std::size_t cell = static_cast<std::size_t>(cy) * grid + cell_of(x, image.width(), grid);
                ++counts[cell];
                for (int c = 0; c < 3; ++c) sums[cell * 3 + c] += image.at(x, y, c);
            }
        }
        const double norm = 1.0 / std::sqrt(3.0 * 3.0 * grid * grid);
        for (std::size_t cell = 0; cell < counts.size(); ++cell)
            for (int c = 0; c < 3; ++c) out.push_back(norm * sums[cell * 3 + c] / counts[cell]);
    }
    return out;
}

ImageRGB PooledEmbeddingMetric::embed_backward(const ImageRGB& image, std::span<const double> grad) const {
    if (grad.size() != kLength) throw ContractViolation("embed_backward: embedding gradient has wrong length");
    ImageRGB out(image.width(), image.height());
    std::size_t offset = 0;
    for (int grid : kGrids) {
        std::vector<int> counts(static_cast<std::size_t>(grid) * grid, 0);
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < image.width(); ++x)
                ++counts[static_cast<std::size_t>(cell_of(y, image.height(), grid)) * grid +
                         cell_of(x, image.width(), grid)];
        const double norm = 1.0 / std::sqrt(3.0 * 3.0 * grid * grid);
        for (int y = 0; y < image.height(); ++y) {
            const int cy = cell_of(y, image.height(), grid);
            for (int x = 0; x < image.width(); ++x) {
                const std::size_t cell = static_cast<std::size_t>(cy) * grid + cell_of(x, image.width(), grid);
                for (int c = 0; c < 3; ++c) out.at(x, y, c) += grad[offset + cell * 3 + c] * norm / counts[cell];
            }
        }
        offset += counts.size() * 3;
    }
    return out;
}

double StructuralMetric::distance(const ImageRGB& a, const ImageRGB& b) const {
    return default_perceptual_distance(a, b);
}

namespace {

ImageRGB halve(const ImageRGB& img) {
    ImageRGB out(img.width() / 2, img.height() / 2);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                          img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
    return out;
}

double mean_ssim(const ImageRGB& a, const ImageRGB& b) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    constexpr double n = kSsimWindow * kSsimWindow;
    double total = 0.0;
    long windows = 0;
    for (int wy = 0; wy + kSsimWindow <= a.height(); wy += kSsimStride)
        for (int wx = 0; wx + kSsimWindow <= a.width(); wx += kSsimStride)
            for (int c = 0; c < 3; ++c) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int y = wy; y < wy + kSsimWindow; ++y)
                    for (int x = wx; x < wx + kSsimWindow; ++x) {
                        const double va = a.at(x, y, c), vb = b.at(x, y, c);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                const double ma = sa / n, mb = sb / n;
                const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
    return total / static_cast<double>(windows);
}

}  // namespace

double default_perceptual_distance(const ImageRGB& a, const ImageRGB& b) {
    if (!a.same_size(b)) throw ContractViolation("perceptual distance: image sizes differ");
    if (a.width() < 32 || a.height() < 32) throw ContractViolation("perceptual distance: images below 32x32");
    ImageRGB sa = a, sb = b;
    double acc = 0.0;
    for (int scale = 0; scale < kSsimScales; ++scale) {
        if (scale > 0) {
            sa = halve(sa);
            sb = halve(sb);
        }
        acc += mean_ssim(sa, sb);
    }
    return std::clamp(1.0 - acc / kSsimScales, 0.0, 2.0);
}

// --- reference loss ------------------------------------------------------------

ReferenceLoss reference_loss(const ImageRGB& rgb, const ImageGray& alpha, const ImageRGBA& reference, double w_rgb,
                             double w_a) {
    if (!rgb.same_size(reference) || !alpha.same_size(reference))
        throw ContractViolation("reference_loss: render and reference resolutions differ");
    ReferenceLoss out;
    out.grad_rgb = ImageRGB(rgb.width(), rgb.height());
    out.grad_alpha = ImageGray(rgb.width(), rgb.height());
    const double n = static_cast<double>(rgb.pixel_count());
    double se_rgb = 0.0, se_a = 0.0;
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const double d = rgb.at(x, y, c) - reference.at(x, y, c);
                se_rgb += d * d;
                out.grad_rgb.at(x, y, c) = w_rgb * 2.0 * d / (3.0 * n);
            }
            const double d = alpha.at(x, y, 0) - reference.at(x, y, 3);
            se_a += d * d;
            out.grad_alpha.at(x, y, 0) = w_a * 2.0 * d / n;
        }
    out.rgb_mse = se_rgb / (3.0 * n);
    out.alpha_mse = se_a / n;
    out.loss = w_rgb * out.rgb_mse + w_a * out.alpha_mse;
    return out;
}

// --- SDS -----------------------------------------------------------------------

SdsGradient sds_gradient(const ImageRGB& render, GuidanceProvider& provider, const CameraSample& pose, int timestep) {
    GuidanceResult g;
    try {
        g = provider.guide(render, pose, timestep);
    } catch (const GuidanceUnavailable&) {
        throw;
    } catch (const std::exception& e) {
        throw GuidanceUnavailable(std::string("guidance provider failed: ") + e.what());
    }
    if (!g.residual.same_size(render))
        throw ContractViolation("sds_gradient: residual resolution does not match the render");
    if (!std::isfinite(g.weight) || g.weight < 0.0) throw GuidanceUnavailable("guidance weight must be finite and >= 0");
    SdsGradient out;
    out.weight = g.weight;
    out.grad_rgb = ImageRGB(render.width(), render.height());
    auto dst = out.grad_rgb.data();
    auto src = g.residual.data();
    double energy = 0.0;
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = g.weight * src[i];
        energy += src[i] * src[i];
    }
    out.energy = 0.5 * g.weight * energy;
    return out;
}

// --- QA-Triplet ------------------------------------------------------------------

double quantity_weight(std::size_t count) { return std::log2(1.0 + static_cast<double>(count)); }

namespace {

double euclid(const Embedding& a, const Embedding& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

TripletLoss qa_triplet_loss(const SampleSet& samples, double margin) {
    if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidParameter("qa_triplet_loss: margin must be >= 0");
    if (samples.positives.empty() && samples.negatives.empty())
        throw NoSamples("qa_triplet_loss: no positive or negative samples");
    const std::size_t dim = samples.anchor.size();
    for (const auto* set : {&samples.positives, &samples.negatives})
        for (const auto& e : *set)
            if (e.size() != dim) throw ContractViolation("qa_triplet_loss: embedding lengths differ");

    TripletLoss out;
    const std::size_t np = samples.positives.size(), nn = samples.negatives.size();
    std::vector<double> dp(np), dn(nn);
    for (std::size_t j = 0; j < np; ++j) dp[j] = euclid(samples.anchor, samples.positives[j]);
    for (std::size_t j = 0; j < nn; ++j) dn[j] = euclid(samples.anchor, samples.negatives[j]);
    for (double d : dp) out.positive_distance += d / static_cast<double>(np);
    for (double d : dn) out.negative_distance += d / static_cast<double>(nn);

    const double qp = quantity_weight(np), qn = quantity_weight(nn);
    const double hinge = qp * out.positive_distance - qn * out.negative_distance + margin;
    out.loss = std::max(0.0, hinge);
    out.active = hinge > 0.0;

    out.grad_anchor.assign(dim, 0.0);
    out.grad_positives.assign(np, Embedding(dim, 0.0));
    out.grad_negatives.assign(nn, Embedding(dim, 0.0));
    if (!out.active) return out;

    // d‖a − x‖/da = (a − x)/‖a − x‖
    for (std::size_t j = 0; j < np; ++j) {
        if (dp[j] == 0.0) continue;
        const double s = qp / static_cast<double>(np) / dp[j];
        for (std::size_t i = 0; i < dim; ++i) {
            const double g = s * (samples.anchor[i] - samples.positives[j][i]);
            out.grad_anchor[i] += g;
            out.grad_positives[j][i] = -g;
        }
    }
    for (std::size_t j = 0; j < nn; ++j) {
        if (dn[j] == 0.0) continue;
        const double s = qn / static_cast<double>(nn) / dn[j];
        for (std::size_t i = 0; i < dim; ++i) {
            const double g = s * (samples.anchor[i] - samples.negatives[j][i]);
            out.grad_anchor[i] -= g;
            out.grad_negatives[j][i] = g;
        }
    }
    return out;
}

Classification classify_samples(const ImageRGB& anchor_view, const std::vector<Candidate>& candidates,
                                const PerceptualMetric& metric, double threshold) {
    if (candidates.empty()) throw NoSamples("classify_samples: no candidates");
    if (!(threshold > 0.0)) throw InvalidParameter("classify_samples: threshold must be > 0");
    Classification out;
    out.samples.anchor = metric.embed(anchor_view);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        if (!c.render.same_size(c.target) || !c.render.same_size(anchor_view))
            throw ContractViolation("classify_samples: image sizes differ");
        const double score = metric.distance(c.render, c.target);
        const bool pos = score < threshold;
        out.scores.push_back(score);
        out.positive.push_back(pos);
        if (pos) {
            out.samples.positives.push_back(metric.embed(c.render));
            out.positive_index.push_back(i);
        } else {
            out.samples.negatives.push_back(metric.embed(c.render));
            out.negative_index.push_back(i);
        }
    }
    return out;
}

}  // namespace splatforge
