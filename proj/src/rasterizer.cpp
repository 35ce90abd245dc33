#include "splatforge/rasterizer.hpp"

#include "splatforge/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatforge {

namespace {

// K(q) = (exp(-q/2) - tangent of exp(-q/2) at the cutoff) / K_unnormalized(0):
// K(0) = 1 and both K and dK/dq vanish at the cutoff.
const double kCutoffExp = std::exp(-0.5 * kSplatCutoffSq);
const double kKernelNorm = 1.0 / (1.0 - kCutoffExp * (1.0 + 0.5 * kSplatCutoffSq));

inline double kernel_value(double e, double q) {
    return (e - kCutoffExp * (1.0 - 0.5 * (q - kSplatCutoffSq))) * kKernelNorm;
}

inline double kernel_slope(double e) { return -0.5 * (e - kCutoffExp) * kKernelNorm; }

// Quantities of one visible Gaussian kept for the backward pass.
struct Splat {
    std::uint32_t gaussian = 0;
    double depth = 0.0;
    Vec2 mean = Vec2::Zero();
    double conic[3] = {0, 0, 0};  // inverse 2D covariance: [a b; b c]
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();

    // backward intermediates
    Vec3 cam_mean = Vec3::Zero();
    Mat3 rot = Mat3::Identity();
    Vec3 scale = Vec3::Ones();
    Quat quat = Quat(1, 0, 0, 0);
    double quat_norm = 1.0;
    Mat3 cov3d_cam = Mat3::Zero();
    Eigen::Matrix<double, 2, 3> jac = Eigen::Matrix<double, 2, 3>::Zero();
    std::uint8_t color_active = 0;  // bit k set when channel k is not clamped
};

// Per-pixel kernel evaluation. Returns false when the splat does not touch
// the pixel; otherwise fills alpha and the unclamped kernel pieces.
struct Eval {
    double dx, dy, q, e, alpha;
    bool clamped;
};

inline bool evaluate(const Splat& s, double px, double py, Eval& ev) {
    ev.dx = px - s.mean.x();
    ev.dy = py - s.mean.y();
    ev.q = s.conic[0] * ev.dx * ev.dx + 2.0 * s.conic[1] * ev.dx * ev.dy + s.conic[2] * ev.dy * ev.dy;
    if (!(ev.q < kSplatCutoffSq)) return false;
    ev.e = std::exp(-0.5 * ev.q);
    const double a = s.opacity * kernel_value(ev.e, ev.q);
    ev.clamped = a > kMaxSplatAlpha;
    ev.alpha = ev.clamped ? kMaxSplatAlpha : a;
    return ev.alpha > 0.0;
}

}  // namespace

struct RenderTape {
    int width = 0;
    int height = 0;
    int tiles_x = 0;
    int tiles_y = 0;
    double focal = 0.0;
    Mat3 view = Mat3::Identity();
    std::size_t cloud_size = 0;
    std::vector<Splat> splats;
    std::vector<std::vector<std::uint32_t>> tile_lists;
    std::vector<std::uint32_t> last_entry;  // per pixel: processed list entries
    std::vector<double> final_t;            // per pixel transmittance
};

void ParamGradients::accumulate(const ParamGradients& other) {
    if (other.size() != size()) throw ContractViolation("ParamGradients::accumulate: size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        for (int k = 0; k < kParamsPerGaussian; ++k) grads[i][k] += other.grads[i][k];
        screen_grad_norm[i] += other.screen_grad_norm[i];
        visible[i] = visible[i] | other.visible[i];
    }
}

bool ParamGradients::all_finite() const {
    for (const auto& g : grads)
        for (double v : g)
            if (!std::isfinite(v)) return false;
    return true;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& camera) {
    auto tape = std::make_shared<RenderTape>();
    const int width = camera.width();
    const int height = camera.height();
    tape->width = width;
    tape->height = height;
    tape->tiles_x = (width + kTileSize - 1) / kTileSize;
    tape->tiles_y = (height + kTileSize - 1) / kTileSize;
    tape->focal = camera.focal();
    tape->view = camera.world_to_camera();
    tape->cloud_size = cloud.size();

    RenderOutput out;
    out.rgb = ImageRGB(width, height);
    out.alpha = ImageGray(width, height);

    // --- projection, parallel over Gaussians -------------------------------
    const std::size_t n = cloud.size();
    std::vector<Splat> projected(n);
    std::vector<std::uint8_t> status(n, 0);  // 0 visible, 1 near-culled, 2 degenerate, 3 off-screen
    const Mat3& w = camera.world_to_camera();
    const double f = camera.focal();
    parallel_for(n, [&](std::size_t i) {
        const Gaussian3D& g = cloud.gaussians[i];
        Splat& s = projected[i];
        s.gaussian = static_cast<std::uint32_t>(i);
        s.cam_mean = camera.to_camera(g.center);
        const double z = s.cam_mean.z();
        if (!(z > kNearPlane)) {
            status[i] = 1;
            return;
        }
        s.depth = z;
        s.scale = g.scale();
        s.quat_norm = g.rotation_raw.norm();
        s.quat = g.rotation();
        s.rot = quat_to_matrix(s.quat);
        const Mat3 m = s.rot * s.scale.asDiagonal();
        s.cov3d_cam = w * (m * m.transpose()) * w.transpose();
        const double x = s.cam_mean.x(), y = s.cam_mean.y();
        s.jac << f / z, 0.0, -f * x / (z * z), 0.0, -f / z, f * y / (z * z);
        Eigen::Matrix2d cov2d = s.jac * s.cov3d_cam * s.jac.transpose();
        cov2d(0, 0) += kCovarianceDilation;
        cov2d(1, 1) += kCovarianceDilation;
        const double a = cov2d(0, 0), b = 0.5 * (cov2d(0, 1) + cov2d(1, 0)), c = cov2d(1, 1);
        const double det = a * c - b * b;
        const double mid = 0.5 * (a + c);
        const double disc = std::sqrt(std::max(0.0, mid * mid - det));
        const double lmax = mid + disc, lmin = mid - disc;
        if (!(det > 0.0) || !std::isfinite(det) || !(lmin > 0.0) || lmax / lmin > kMaxConditionNumber) {
            status[i] = 2;
            return;
        }
        s.conic[0] = c / det;
        s.conic[1] = -b / det;
        s.conic[2] = a / det;
        s.mean = camera.project(s.cam_mean);
        const double radius = 3.0 * std::sqrt(lmax);
        if (s.mean.x() + radius < 0 || s.mean.x() - radius > width - 1 || s.mean.y() + radius < 0 ||
            s.mean.y() - radius > height - 1) {
            status[i] = 3;
            return;
        }
        s.opacity = g.opacity();
        const Vec3 raw = 0.5 + kShC0 * g.color_dc.array();
        for (int k = 0; k < 3; ++k) {
            s.color[k] = std::clamp(raw[k], 0.0, 1.0);
            if (raw[k] > 0.0 && raw[k] < 1.0) s.color_active |= static_cast<std::uint8_t>(1u << k);
        }
    });

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (status[i]) {
            case 0: order.push_back(static_cast<std::uint32_t>(i)); break;
            case 1: ++out.diagnostics.culled_near; break;
            case 2: ++out.diagnostics.skipped_degenerate; break;
            default: break;
        }
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t l, std::uint32_t r) { return projected[l].depth < projected[r].depth; });
    tape->splats.reserve(order.size());
    for (auto i : order) tape->splats.push_back(projected[i]);
    out.diagnostics.visible = tape->splats.size();

    // --- binning ----------------------------------------------------------
    tape->tile_lists.assign(static_cast<std::size_t>(tape->tiles_x) * tape->tiles_y, {});
    for (std::uint32_t si = 0; si < tape->splats.size(); ++si) {
        const Splat& s = tape->splats[si];
        // exact bounding box of the q < 9 ellipse: ±3·sqrt of the covariance diagonal
        const double det = s.conic[0] * s.conic[2] - s.conic[1] * s.conic[1];
        const double rx = 3.0 * std::sqrt(s.conic[2] / det), ry = 3.0 * std::sqrt(s.conic[0] / det);
        const int x0 = static_cast<int>(std::clamp(std::ceil(s.mean.x() - rx), 0.0, double(width)));
        const int x1 = static_cast<int>(std::clamp(std::floor(s.mean.x() + rx), -1.0, width - 1.0));
        const int y0 = static_cast<int>(std::clamp(std::ceil(s.mean.y() - ry), 0.0, double(height)));
        const int y1 = static_cast<int>(std::clamp(std::floor(s.mean.y() + ry), -1.0, height - 1.0));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
                tape->tile_lists[static_cast<std::size_t>(ty) * tape->tiles_x + tx].push_back(si);
    }

    // --- compositing, parallel over tiles ---------------------------------
    tape->last_entry.assign(static_cast<std::size_t>(width) * height, 0);
    tape->final_t.assign(static_cast<std::size_t>(width) * height, 1.0);
    parallel_for(tape->tile_lists.size(), [&](std::size_t tile) {
        const auto& list = tape->tile_lists[tile];
        const int tx = static_cast<int>(tile % tape->tiles_x);
        const int ty = static_cast<int>(tile / tape->tiles_x);
        for (int py = ty * kTileSize; py < std::min(height, (ty + 1) * kTileSize); ++py) {
            for (int px = tx * kTileSize; px < std::min(width, (tx + 1) * kTileSize); ++px) {
                double t = 1.0;
                double col[3] = {0, 0, 0};
                std::uint32_t last = 0;
                for (std::uint32_t e = 0; e < list.size(); ++e) {
                    const Splat& s = tape->splats[list[e]];
                    Eval ev;
                    if (!evaluate(s, px, py, ev)) continue;
                    const double wgt = ev.alpha * t;
                    for (int k = 0; k < 3; ++k) col[k] += wgt * s.color[k];
                    t *= 1.0 - ev.alpha;
                    last = e + 1;
                    if (t < kMinTransmittance) break;
                }
                const std::size_t p = static_cast<std::size_t>(py) * width + px;
                tape->last_entry[p] = last;
                tape->final_t[p] = t;
                for (int k = 0; k < 3; ++k) out.rgb.at(px, py, k) = col[k];
                out.alpha.at(px, py, 0) = 1.0 - t;
            }
        }
    });

    out.tape = std::move(tape);
    return out;
}

namespace {

// dL/d(mean2d x, y), dL/d(conic a, b, c), dL/d(opacity), dL/d(color rgb)
constexpr int kSplatGrad = 9;

}  // namespace

ParamGradients backward(const RenderOutput& output, const ImageRGB& grad_rgb, const ImageGray& grad_alpha) {
    if (!output.tape) throw ContractViolation("backward: render output carries no tape");
    const RenderTape& tape = *output.tape;
    if (!grad_rgb.same_size(tape.width, tape.height))
        throw ContractViolation("backward: grad_rgb resolution does not match the render");
    const bool has_alpha_grad = !grad_alpha.empty();
    if (has_alpha_grad && !grad_alpha.same_size(tape.width, tape.height))
        throw ContractViolation("backward: grad_alpha resolution does not match the render");

    const int width = tape.width;
    const int height = tape.height;

    // --- per-tile image-space gradients -----------------------------------
    std::vector<std::vector<double>> tile_grads(tape.tile_lists.size());
    parallel_for(tape.tile_lists.size(), [&](std::size_t tile) {
        const auto& list = tape.tile_lists[tile];
        auto& buf = tile_grads[tile];
        buf.assign(list.size() * kSplatGrad, 0.0);
        const int tx = static_cast<int>(tile % tape.tiles_x);
        const int ty = static_cast<int>(tile / tape.tiles_x);
        for (int py = ty * kTileSize; py < std::min(height, (ty + 1) * kTileSize); ++py) {
            for (int px = tx * kTileSize; px < std::min(width, (tx + 1) * kTileSize); ++px) {
                const std::size_t p = static_cast<std::size_t>(py) * width + px;
                const std::uint32_t last = tape.last_entry[p];
                if (last == 0) continue;
                const double g_rgb[3] = {grad_rgb.at(px, py, 0), grad_rgb.at(px, py, 1), grad_rgb.at(px, py, 2)};
                const double g_a = has_alpha_grad ? grad_alpha.at(px, py, 0) : 0.0;
                if (g_rgb[0] == 0.0 && g_rgb[1] == 0.0 && g_rgb[2] == 0.0 && g_a == 0.0) continue;
                const double t_final = tape.final_t[p];
                double t = t_final;
                double suffix[3] = {0, 0, 0};  // Σ_{j>i} c_j a_j T_j
                for (std::uint32_t e = last; e-- > 0;) {
                    const Splat& s = tape.splats[list[e]];
                    Eval ev;
                    if (!evaluate(s, px, py, ev)) continue;
                    const double one_minus = 1.0 - ev.alpha;
                    t /= one_minus;  // transmittance in front of this splat
                    double* g = buf.data() + static_cast<std::size_t>(e) * kSplatGrad;
                    const double wgt = ev.alpha * t;
                    double dl_dalpha = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        g[6 + k] += g_rgb[k] * wgt;
                        dl_dalpha += g_rgb[k] * (s.color[k] * t - suffix[k] / one_minus);
                        suffix[k] += s.color[k] * wgt;
                    }
                    dl_dalpha += g_a * t_final / one_minus;
                    if (ev.clamped) continue;
                    g[5] += dl_dalpha * kernel_value(ev.e, ev.q);
                    const double dl_dq = dl_dalpha * s.opacity * kernel_slope(ev.e);
                    g[0] += dl_dq * -2.0 * (s.conic[0] * ev.dx + s.conic[1] * ev.dy);
                    g[1] += dl_dq * -2.0 * (s.conic[1] * ev.dx + s.conic[2] * ev.dy);
                    g[2] += dl_dq * ev.dx * ev.dx;
                    g[3] += dl_dq * 2.0 * ev.dx * ev.dy;
                    g[4] += dl_dq * ev.dy * ev.dy;
                }
            }
        }
    });

    // --- fixed-order reduction over tiles ---------------------------------
    std::vector<double> splat_grads(tape.splats.size() * kSplatGrad, 0.0);
    for (std::size_t tile = 0; tile < tape.tile_lists.size(); ++tile) {
        const auto& list = tape.tile_lists[tile];
        const auto& buf = tile_grads[tile];
        for (std::size_t e = 0; e < list.size(); ++e)
            for (int k = 0; k < kSplatGrad; ++k)
                splat_grads[static_cast<std::size_t>(list[e]) * kSplatGrad + k] += buf[e * kSplatGrad + k];
    }

    // --- chain rule back to Gaussian parameters ---------------------------
    ParamGradients result(tape.cloud_size);
    const double f = tape.focal;
    const Mat3& view = tape.view;
    parallel_for(tape.splats.size(), [&](std::size_t si) {
        const Splat& s = tape.splats[si];
        const double* g = splat_grads.data() + si * kSplatGrad;
        auto& out = result.grads[s.gaussian];
        bool any = false;
        for (int k = 0; k < kSplatGrad; ++k) any = any || g[k] != 0.0;
        if (!any) return;
        result.visible[s.gaussian] = 1;
        result.screen_grad_norm[s.gaussian] =
            std::hypot(g[0] * 0.5 * width, g[1] * 0.5 * height);

        // color through the SH-DC decode and clamp
        for (int k = 0; k < 3; ++k)
            if (s.color_active & (1u << k)) out[param::kColor + k] = g[6 + k] * kShC0;
        // opacity through the sigmoid
        out[param::kOpacity] = g[5] * s.opacity * (1.0 - s.opacity);

        // conic -> 2D covariance: dL/dΣ' = -M G M with G symmetric
        Eigen::Matrix2d conic;
        conic << s.conic[0], s.conic[1], s.conic[1], s.conic[2];
        Eigen::Matrix2d gconic;
        gconic << g[2], 0.5 * g[3], 0.5 * g[3], g[4];
        const Eigen::Matrix2d gcov2d = -conic * gconic * conic;

        // Σ' = J Σc Jᵀ + dilation
        const Mat3 gcov_cam = s.jac.transpose() * gcov2d * s.jac;
        const Eigen::Matrix<double, 2, 3> gjac = 2.0 * gcov2d * s.jac * s.cov3d_cam;

        const double x = s.cam_mean.x(), y = s.cam_mean.y(), z = s.cam_mean.z();
        const double z2 = z * z, z3 = z2 * z;
        Vec3 gt;
        // projected mean u = cx + f x/z, v = cy - f y/z
        gt.x() = g[0] * f / z;
        gt.y() = -g[1] * f / z;
        gt.z() = -g[0] * f * x / z2 + g[1] * f * y / z2;
        // Jacobian entries depend on the camera-space mean
        gt.x() += gjac(0, 2) * (-f / z2);
        gt.y() += gjac(1, 2) * (f / z2);
        gt.z() += gjac(0, 0) * (-f / z2) + gjac(0, 2) * (2.0 * f * x / z3) + gjac(1, 1) * (f / z2) +
                  gjac(1, 2) * (-2.0 * f * y / z3);
        const Vec3 gmean = view.transpose() * gt;
        for (int k = 0; k < 3; ++k) out[param::kCenter + k] = gmean[k];

        // Σc = W Σ Wᵀ, Σ = M Mᵀ with M = R S
        const Mat3 gcov = view.transpose() * gcov_cam * view;
        const Mat3 m = s.rot * s.scale.asDiagonal();
        const Mat3 gm = 2.0 * gcov * m;
        for (int k = 0; k < 3; ++k) {
            const double ds = s.rot.col(k).dot(gm.col(k));
            out[param::kScale + k] = ds * s.scale[k];
        }
        const Mat3 grot = gm * s.scale.asDiagonal();
        const double qw = s.quat[0], qx = s.quat[1], qy = s.quat[2], qz = s.quat[3];
        Quat gq;
        gq[0] = 2.0 * (-qz * grot(0, 1) + qy * grot(0, 2) + qz * grot(1, 0) - qx * grot(1, 2) - qy * grot(2, 0) +
                       qx * grot(2, 1));
        gq[1] = 2.0 * (qy * grot(0, 1) + qz * grot(0, 2) + qy * grot(1, 0) - 2.0 * qx * grot(1, 1) -
                       qw * grot(1, 2) + qz * grot(2, 0) + qw * grot(2, 1) - 2.0 * qx * grot(2, 2));
        gq[2] = 2.0 * (-2.0 * qy * grot(0, 0) + qx * grot(0, 1) + qw * grot(0, 2) + qx * grot(1, 0) +
                       qz * grot(1, 2) - qw * grot(2, 0) + qz * grot(2, 1) - 2.0 * qy * grot(2, 2));
        gq[3] = 2.0 * (-2.0 * qz * grot(0, 0) - qw * grot(0, 1) + qx * grot(0, 2) + qw * grot(1, 0) -
                       2.0 * qz * grot(1, 1) + qy * grot(1, 2) + qx * grot(2, 0) + qy * grot(2, 1));
        // through q = r / |r|
        const Quat graw = (gq - s.quat * s.quat.dot(gq)) / s.quat_norm;
        for (int k = 0; k < 4; ++k) out[param::kRotation + k] = graw[k];
    });

    return result;
}

}  // namespace splatforge
