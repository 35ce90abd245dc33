#pragma once

#include "splatforge/camera.hpp"
#include "splatforge/gaussian.hpp"
#include "splatforge/image.hpp"
#include "splatforge/random.hpp"
#include "splatforge/rasterizer.hpp"

#include <functional>

namespace splatforge::testing {

/// Random cloud with moderate opacities and unclamped colors so the forward
/// model stays smooth around every sampled parameter.
inline GaussianCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 0.5) {
    Rng rng(seed);
    GaussianCloud cloud;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 center(rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent));
        const Vec3 scale(rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2));
        Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q *= rng.uniform(0.7, 1.4) / q.norm();  // deliberately non-unit raw quaternion
        Gaussian3D g = Gaussian3D::make(center, scale, q.normalized(), rng.uniform(0.1, 0.7),
                                        Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)));
        g.rotation_raw = q;
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

template <int C>
Image<C> random_image(int w, int h, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Image<C> img(w, h);
    for (auto& v : img.data()) v = rng.uniform(lo, hi);
    return img;
}

/// Σ over pixels of a·b.
template <int C>
double dot(const Image<C>& a, const Image<C>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
}

/// Central finite difference of f around x.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Gradient comparison used by the gradient-check suites: relative tolerance
/// with an absolute floor.
inline bool gradient_close(double analytic, double numeric, double rel = 1e-3, double abs_floor = 1e-6) {
    const double err = std::abs(analytic - numeric);
    return err <= std::max(rel * std::max(std::abs(analytic), std::abs(numeric)), abs_floor);
}

struct GradientCheckResult {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst_relative = 0.0;
};

/// Compares rasterizer backward() against central differences of
/// L = Σ grad_rgb·rgb + grad_alpha·alpha on every parameter of every Gaussian.
/// The render is piecewise smooth (depth-order swaps, a kernel that is only
/// C¹ at its cutoff), so the step is kept small enough that the stencil
/// rarely straddles a kink; round-off at this step is ~1e-9.
inline GradientCheckResult check_render_gradients(const GaussianCloud& cloud, const Camera& camera,
                                                  const ImageRGB& grad_rgb, const ImageGray& grad_alpha,
                                                  double h = 1e-5, double rel = 1e-3, double abs_floor = 1e-6) {
    const ParamGradients analytic = backward(render(cloud, camera), grad_rgb, grad_alpha);
    GradientCheckResult result;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            auto loss_at = [&](double v) {
                GaussianCloud c = cloud;
                auto p = c.gaussians[i].to_params();
                p[k] = v;
                c.gaussians[i] = Gaussian3D::from_params(p);
                const RenderOutput out = render(c, camera);
                return dot(grad_rgb, out.rgb) + dot(grad_alpha, out.alpha);
            };
            const double x0 = cloud.gaussians[i].to_params()[k];
            const double numeric = central_difference(loss_at, x0, h);
            const double a = analytic.grads[i][k];
            ++result.checked;
            if (!gradient_close(a, numeric, rel, abs_floor)) ++result.failed;
            if (std::max(std::abs(a), std::abs(numeric)) > abs_floor)
                result.worst_relative = std::max(
                    result.worst_relative, std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric)));
        }
    }
    return result;
}

}  // namespace splatforge::testing
