#include "splatforge/losses.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace splatforge;
using namespace splatforge::testing;

namespace {

struct ConstantProvider final : GuidanceProvider {
    ImageRGB residual;
    double weight = 1.0;
    bool fail = false;
    GuidanceResult guide(const ImageRGB&, const CameraSample&, int) override {
        if (fail) throw std::runtime_error("backend offline");
        return {residual, weight};
    }
    std::optional<ImageRGB> target_image(const CameraSample&, int) override { return std::nullopt; }
};

// Second, deliberately plain SSIM implementation: windows enumerated by index,
// downsampling by explicit 2×2 averages into fresh vectors.
double naive_structural_distance(const ImageRGB& a, const ImageRGB& b) {
    struct Plane {
        int w, h;
        std::vector<double> v;
    };
    auto plane = [](const ImageRGB& img, int c) {
        Plane p{img.width(), img.height(), {}};
        for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x) p.v.push_back(img.at(x, y, c));
        return p;
    };
    auto down = [](const Plane& p) {
        Plane q{p.w / 2, p.h / 2, {}};
        for (int y = 0; y < q.h; ++y)
            for (int x = 0; x < q.w; ++x) {
                const double s = p.v[(2 * y) * p.w + 2 * x] + p.v[(2 * y) * p.w + 2 * x + 1] +
                                 p.v[(2 * y + 1) * p.w + 2 * x] + p.v[(2 * y + 1) * p.w + 2 * x + 1];
                q.v.push_back(s / 4);
            }
        return q;
    };
    double per_scale[3] = {0, 0, 0};
    long counts[3] = {0, 0, 0};
    for (int c = 0; c < 3; ++c) {
        Plane pa = plane(a, c), pb = plane(b, c);
        for (int s = 0; s < 3; ++s) {
            if (s) {
                pa = down(pa);
                pb = down(pb);
            }
            const int nx = (pa.w - 8) / 4 + 1, ny = (pa.h - 8) / 4 + 1;
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    std::vector<double> xa, xb;
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) {
                            xa.push_back(pa.v[(4 * j + y) * pa.w + 4 * i + x]);
                            xb.push_back(pb.v[(4 * j + y) * pb.w + 4 * i + x]);
                        }
                    double ma = 0, mb = 0;
                    for (int k = 0; k < 64; ++k) ma += xa[k] / 64, mb += xb[k] / 64;
                    double va = 0, vb = 0, cv = 0;
                    for (int k = 0; k < 64; ++k) {
                        va += (xa[k] - ma) * (xa[k] - ma) / 64;
                        vb += (xb[k] - mb) * (xb[k] - mb) / 64;
                        cv += (xa[k] - ma) * (xb[k] - mb) / 64;
                    }
                    const double c1 = 1e-4, c2 = 9e-4;
                    per_scale[s] += (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++counts[s];
                }
        }
    }
    double mean = 0;
    for (int s = 0; s < 3; ++s) mean += per_scale[s] / counts[s] / 3;
    return 1.0 - mean;
}

Embedding at_distance(const Embedding& anchor, double d, int axis) {
    Embedding e = anchor;
    e[static_cast<std::size_t>(axis)] += d;
    return e;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("reference loss arithmetic") {
    ImageRGB rgb(8, 8, 0.5);
    ImageGray alpha(8, 8, 0.3);
    ImageRGBA ref(8, 8, 0.0);
    const auto r = reference_loss(rgb, alpha, ref, 2.0, 0.0);
    CHECK(r.loss == doctest::Approx(0.5).epsilon(1e-15));

    const auto same = reference_loss(rgb, alpha, compose_rgba(rgb, alpha), 1e4, 1e3);
    CHECK(same.loss == 0.0);
    for (double v : same.grad_rgb.data()) CHECK(v == 0.0);
    for (double v : same.grad_alpha.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(reference_loss(rgb, alpha, ImageRGBA(4, 8), 1, 1), ContractViolation);
}

TEST_CASE("reference loss matches direct evaluation and finite differences") {
    const auto rgb = random_image<3>(32, 32, 11, 0, 1);
    const auto alpha = random_image<1>(32, 32, 12, 0, 1);
    const auto ref = random_image<4>(32, 32, 13, 0, 1);
    const double w_rgb = 3.5, w_a = 0.7;
    const auto r = reference_loss(rgb, alpha, ref, w_rgb, w_a);

    double se_rgb = 0, se_a = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            for (int c = 0; c < 3; ++c) se_rgb += std::pow(rgb.at(x, y, c) - ref.at(x, y, c), 2);
            se_a += std::pow(alpha.at(x, y, 0) - ref.at(x, y, 3), 2);
        }
    CHECK(std::abs(r.loss - (w_rgb * se_rgb / (32 * 32 * 3) + w_a * se_a / (32 * 32))) < 1e-7);

    Rng rng(3);
    for (int k = 0; k < 40; ++k) {
        const int x = rng.uniform_int(0, 31), y = rng.uniform_int(0, 31), c = rng.uniform_int(0, 3);
        auto f = [&](double v) {
            auto rr = rgb;
            auto aa = alpha;
            if (c < 3) rr.at(x, y, c) = v;
            else aa.at(x, y, 0) = v;
            return reference_loss(rr, aa, ref, w_rgb, w_a).loss;
        };
        const double analytic = c < 3 ? r.grad_rgb.at(x, y, c) : r.grad_alpha.at(x, y, 0);
        const double numeric = central_difference(f, c < 3 ? rgb.at(x, y, c) : alpha.at(x, y, 0), 1e-4);
        CHECK(gradient_close(analytic, numeric, 1e-5, 1e-12));
    }
}

TEST_CASE("sds gradient scales the provider residual") {
    ConstantProvider p;
    const ImageRGB render = random_image<3>(16, 16, 1, 0, 1);
    p.residual = ImageRGB(16, 16, 0.0);
    const auto zero = sds_gradient(render, p, {}, 500);
    for (double v : zero.grad_rgb.data()) CHECK(v == 0.0);

    p.residual = ImageRGB(16, 16, 1.0);
    p.weight = 0.5;
    const auto half = sds_gradient(render, p, {}, 500);
    for (double v : half.grad_rgb.data()) CHECK(v == 0.5);

    // oracle: residual = render − target, w = 1
    const ImageRGB target = random_image<3>(16, 16, 2, 0, 1);
    p.weight = 1.0;
    for (std::size_t i = 0; i < p.residual.data().size(); ++i)
        p.residual.data()[i] = render.data()[i] - target.data()[i];
    const auto g = sds_gradient(render, p, {}, 20);
    for (std::size_t i = 0; i < g.grad_rgb.data().size(); ++i)
        CHECK(g.grad_rgb.data()[i] == render.data()[i] - target.data()[i]);

    p.residual = ImageRGB(8, 8);
    CHECK_THROWS_AS(sds_gradient(render, p, {}, 20), ContractViolation);
    p.residual = ImageRGB(16, 16);
    p.weight = -1.0;
    CHECK_THROWS_AS(sds_gradient(render, p, {}, 20), GuidanceUnavailable);
    p.weight = 1.0;
    p.fail = true;
    CHECK_THROWS_AS(sds_gradient(render, p, {}, 20), GuidanceUnavailable);
}

TEST_CASE("quantity weight") {
    CHECK(quantity_weight(0) == 0.0);
    CHECK(quantity_weight(1) == 1.0);
    CHECK(quantity_weight(7) == 3.0);
    for (std::size_t n = 1; n < 1024; ++n) {
        CHECK(quantity_weight(n + 1) > quantity_weight(n));
        // concavity: increments shrink
        CHECK(quantity_weight(n + 1) - quantity_weight(n) <= quantity_weight(n) - quantity_weight(n - 1));
    }
}

TEST_CASE("triplet worked examples") {
    const Embedding a = {0.1, -0.2, 0.3, 0.0};
    SampleSet s;
    s.anchor = a;

    s.negatives = {at_distance(a, 2.0, 1)};
    CHECK(qa_triplet_loss(s, 0.5).loss == 0.0);

    s.positives = {at_distance(a, 1.0, 0)};
    s.negatives = {at_distance(a, -1.0, 2)};
    CHECK(std::abs(qa_triplet_loss(s, 0.5).loss - 0.5) < 1e-9);

    s.positives = {at_distance(a, 0.2, 0), at_distance(a, -0.2, 1), at_distance(a, 0.2, 3)};
    s.negatives = {at_distance(a, 1.0, 2)};
    CHECK(qa_triplet_loss(s, 0.3).loss == 0.0);

    // absent-negative branch: Q(Np)·d + margin, shrinking as positives approach
    s.negatives.clear();
    s.positives = {at_distance(a, 0.4, 0)};
    double prev = qa_triplet_loss(s, 0.1).loss;
    CHECK(std::abs(prev - 0.5) < 1e-9);
    for (double d : {0.3, 0.2, 0.1, 0.0}) {
        s.positives = {at_distance(a, d, 0)};
        const double cur = qa_triplet_loss(s, 0.1).loss;
        CHECK(cur < prev);
        prev = cur;
    }

    s.positives.clear();
    CHECK_THROWS_AS(qa_triplet_loss(s, 0.1), NoSamples);
    s.positives = {a};
    CHECK_THROWS_AS(qa_triplet_loss(s, -0.1), InvalidParameter);
    s.positives = {Embedding{1.0}};
    CHECK_THROWS_AS(qa_triplet_loss(s, 0.1), ContractViolation);
}

TEST_CASE("triplet loss is non-negative and its gradients match finite differences") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        SampleSet s;
        const int dim = 6;
        auto vec = [&] {
            Embedding e(dim);
            for (auto& v : e) v = rng.uniform(-1, 1);
            return e;
        };
        s.anchor = vec();
        const int np = rng.uniform_int(0, 3), nn = rng.uniform_int(np == 0 ? 1 : 0, 3);
        for (int i = 0; i < np; ++i) s.positives.push_back(vec());
        for (int i = 0; i < nn; ++i) s.negatives.push_back(vec());
        const double margin = rng.uniform(0, 1);
        const auto r = qa_triplet_loss(s, margin);
        CHECK(r.loss >= 0.0);
        const double q_n = quantity_weight(s.negatives.size()) * r.negative_distance;
        const double q_p = quantity_weight(s.positives.size()) * r.positive_distance;
        if (q_n >= q_p + margin) CHECK(r.loss == 0.0);
        if (!r.active) {
            for (double g : r.grad_anchor) CHECK(g == 0.0);
            continue;
        }
        for (int i = 0; i < dim; ++i) {
            auto f = [&](double v) {
                SampleSet t = s;
                t.anchor[static_cast<std::size_t>(i)] = v;
                return qa_triplet_loss(t, margin).loss;
            };
            CHECK(gradient_close(r.grad_anchor[static_cast<std::size_t>(i)],
                                 central_difference(f, s.anchor[static_cast<std::size_t>(i)], 1e-6), 1e-5, 1e-9));
        }
        for (std::size_t j = 0; j < s.positives.size(); ++j) {
            auto f = [&](double v) {
                SampleSet t = s;
                t.positives[j][0] = v;
                return qa_triplet_loss(t, margin).loss;
            };
            CHECK(gradient_close(r.grad_positives[j][0], central_difference(f, s.positives[j][0], 1e-6), 1e-5, 1e-9));
        }
        for (std::size_t j = 0; j < s.negatives.size(); ++j) {
            auto f = [&](double v) {
                SampleSet t = s;
                t.negatives[j][0] = v;
                return qa_triplet_loss(t, margin).loss;
            };
            CHECK(gradient_close(r.grad_negatives[j][0], central_difference(f, s.negatives[j][0], 1e-6), 1e-5, 1e-9));
        }
    }
}

TEST_CASE("default perceptual distance") {
    const auto a = random_image<3>(48, 40, 21, 0, 1);
    CHECK(default_perceptual_distance(a, a) == 0.0);

    ImageRGB shifted = a;
    for (auto& v : shifted.data()) v += 0.5;
    const double d = default_perceptual_distance(a, shifted);
    CHECK(d > 0.0);
    CHECK(std::abs(d - naive_structural_distance(a, shifted)) < 1e-6);

    for (int k = 0; k < 100; ++k) {
        const auto x = random_image<3>(32, 32, 1000 + k, 0, 1);
        const auto y = random_image<3>(32, 32, 5000 + k, 0, 1);
        const double dxy = default_perceptual_distance(x, y);
        CHECK(dxy == default_perceptual_distance(y, x));
        CHECK(dxy >= 0.0);
        CHECK(dxy <= 2.0);
        if (k < 5) CHECK(std::abs(dxy - naive_structural_distance(x, y)) < 1e-6);
    }

    CHECK_THROWS_AS(default_perceptual_distance(ImageRGB(31, 64), ImageRGB(31, 64)), ContractViolation);
    CHECK_THROWS_AS(default_perceptual_distance(ImageRGB(32, 32), ImageRGB(64, 64)), ContractViolation);
}

TEST_CASE("pooled embedding metric is consistent with its distance") {
    PooledEmbeddingMetric m;
    for (int k = 0; k < 10; ++k) {
        const auto x = random_image<3>(40, 36, 70 + k, 0, 1);
        const auto y = random_image<3>(40, 36, 90 + k, 0, 1);
        const auto fx = m.embed(x), fy = m.embed(y);
        CHECK(fx.size() == PooledEmbeddingMetric::kLength);
        double n = 0;
        for (std::size_t i = 0; i < fx.size(); ++i) n += (fx[i] - fy[i]) * (fx[i] - fy[i]);
        CHECK(std::abs(m.distance(x, y) - std::sqrt(n)) < 1e-6);
        CHECK(m.distance(x, y) == m.distance(y, x));
        CHECK(m.distance(x, x) == 0.0);
    }
    // constant offset c on every pixel gives distance exactly c
    ImageRGB a(32, 32, 0.2), b(32, 32, 0.45);
    CHECK(m.distance(a, b) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("embedding adjoint") {
    PooledEmbeddingMetric m;
    const auto img = random_image<3>(37, 29, 5, 0, 1);
    Rng rng(8);
    Embedding g(PooledEmbeddingMetric::kLength);
    for (auto& v : g) v = rng.normal();
    const ImageRGB back = m.embed_backward(img, g);
    // embed is linear: <g, f(x)> = <f^T g, x>
    const auto f = m.embed(img);
    double lhs = 0;
    for (std::size_t i = 0; i < f.size(); ++i) lhs += g[i] * f[i];
    CHECK(std::abs(lhs - dot(back, img)) < 1e-10);
    CHECK_THROWS_AS(m.embed_backward(img, std::span<const double>(g.data(), 5)), ContractViolation);
}

TEST_CASE("sample classification") {
    StructuralMetric m;
    const auto target = random_image<3>(64, 64, 30, 0, 1);
    ImageRGB inverted = target;
    for (auto& v : inverted.data()) v = 1.0 - v;
    CHECK(m.distance(inverted, target) > 0.3);

    const auto anchor = random_image<3>(64, 64, 31, 0, 1);
    auto only = classify_samples(anchor, {{target, target}}, m, 0.3);
    CHECK(only.samples.positives.size() == 1);
    CHECK(only.samples.negatives.empty());
    CHECK(only.scores[0] == 0.0);

    const auto both = classify_samples(anchor, {{target, target}, {inverted, target}}, m, 0.3);
    CHECK(both.samples.positives.size() == 1);
    CHECK(both.samples.negatives.size() == 1);
    CHECK(both.negative_index[0] == 1);
    CHECK(both.samples.anchor == m.embed(anchor));
    CHECK(both.samples.negatives[0] == m.embed(inverted));

    // threshold monotonicity
    std::vector<Candidate> cands;
    for (int k = 0; k < 8; ++k) {
        ImageRGB r = target;
        const auto noise = random_image<3>(64, 64, 200 + k, -0.15 * k, 0.15 * k);
        for (std::size_t i = 0; i < r.data().size(); ++i) r.data()[i] += noise.data()[i];
        cands.push_back({r, target});
    }
    std::vector<bool> prev(cands.size(), false);
    for (double th : {0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.2}) {
        const auto c = classify_samples(anchor, cands, m, th);
        for (std::size_t i = 0; i < cands.size(); ++i) {
            if (prev[i]) CHECK(c.positive[i]);
            prev[i] = c.positive[i];
        }
    }

    CHECK_THROWS_AS(classify_samples(anchor, {}, m, 0.3), NoSamples);
    CHECK_THROWS_AS(classify_samples(anchor, {{target, target}}, m, 0.0), InvalidParameter);
}

}  // TEST_SUITE
