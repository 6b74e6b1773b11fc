#include "spwood/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/LU>

#include "spwood/errors.hpp"
#include "spwood/layout.hpp"

namespace spwood {

void validate(const FocalParams& params) {
    if (!(params.alpha_t > 0.0 && params.alpha_t < 1.0)) {
        throw InvalidInput("focal alpha_t must lie in (0,1)");
    }
    if (!(params.gamma >= 0.0) || !std::isfinite(params.gamma)) {
        throw InvalidInput("focal gamma must be finite and nonnegative");
    }
    if (!(params.omega > 0.0 && params.omega <= 1.0)) {
        throw InvalidInput("omega must lie in (0,1]");
    }
    if (!(params.thr > 0.0 && params.thr < 1.0)) {
        throw InvalidInput("thr must lie in (0,1)");
    }
}

LossValueGrad sparse_cls_loss(double p_t, SampleKind kind, const FocalParams& params) {
    validate(params);
    if (!(p_t > 0.0 && p_t < 1.0)) {
        throw InvalidInput("p_t must lie strictly inside (0,1), got " + std::to_string(p_t));
    }
    const double a = params.alpha_t;
    const double g = params.gamma;
    const double q = 1.0 - p_t;

    if (kind == SampleKind::Positive) {
        const double mod = std::pow(q, g);
        const double value = -a * mod * std::log(p_t);
        // d/dp [-(a) q^g ln p] = a g q^(g-1) ln p - a q^g / p
        const double dmod = g == 0.0 ? 0.0 : g * std::pow(q, g - 1.0);
        const double grad = a * dmod * std::log(p_t) - a * mod / p_t;
        return {value, {grad}};
    }

    const double scale = p_t > params.thr ? params.omega : 1.0;
    const double mod = std::pow(p_t, g);
    const double log_q = std::log(q);
    const double value = -(1.0 - a) * mod * log_q * scale;
    const double dmod = g == 0.0 ? 0.0 : g * std::pow(p_t, g - 1.0);
    const double grad = -(1.0 - a) * scale * (dmod * log_q - mod / q);
    return {value, {grad}};
}

double smooth_l1(double x, double beta) {
    const double ax = std::abs(x);
    if (beta <= 0.0) return ax;
    return ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
}

double smooth_l1_grad(double x, double beta) {
    if (beta > 0.0 && std::abs(x) < beta) return x / beta;
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

LossValueGrad angle_loss(double theta_aug, double theta_orig, const Augmentation& aug,
                         double beta) {
    if (!std::isfinite(theta_aug) || !std::isfinite(theta_orig)) {
        throw InvalidInput("angle_loss: non-finite angle");
    }
    if (const auto* rot = std::get_if<RotateAug>(&aug)) {
        const double residual = normalize_angle(theta_aug - theta_orig - rot->r);
        const double d = smooth_l1_grad(residual, beta);
        return {smooth_l1(residual, beta), {d, -d}};
    }
    const double residual = normalize_angle(theta_aug + theta_orig);
    const double d = smooth_l1_grad(residual, beta);
    return {smooth_l1(residual, beta), {d, d}};
}

LossValueGrad gaussian_overlap_loss(std::span<const OrientedBox> boxes) {
    if (boxes.empty()) throw InvalidInput("gaussian_overlap_loss: empty box list");
    const std::size_t n = boxes.size();

    std::vector<Gaussian2D> gauss;
    std::vector<Mat2> cov_inv;
    std::vector<std::array<Mat2, 3>> partials;
    gauss.reserve(n);
    for (const auto& box : boxes) {
        gauss.push_back(rbox_to_gaussian(box));
        cov_inv.push_back(gauss.back().cov.inverse());
        partials.push_back(rbox_covariance_partials(box));
    }

    LossValueGrad out;
    out.grad.assign(5 * n, 0.0);
    // B is symmetric, so each unordered pair counts twice.
    const double pair_weight = 2.0 / static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.value += pair_weight * bhattacharyya(gauss[i], gauss[j]);

            const Mat2 s_inv = (0.5 * (gauss[i].cov + gauss[j].cov)).inverse();
            const Vec2 d = gauss[i].mean - gauss[j].mean;
            const Vec2 g_mean = 0.25 * s_inv * d;
            const Mat2 shared = -s_inv * d * d.transpose() * s_inv / 16.0 + 0.25 * s_inv;
            const Mat2 g_cov_i = shared - 0.25 * cov_inv[i];
            const Mat2 g_cov_j = shared - 0.25 * cov_inv[j];

            auto accumulate = [&](std::size_t k, const Vec2& gm, const Mat2& gc) {
                double* g = out.grad.data() + 5 * k;
                g[0] += pair_weight * gm.x();
                g[1] += pair_weight * gm.y();
                for (int p = 0; p < 3; ++p) {
                    g[2 + p] += pair_weight * gc.cwiseProduct(partials[k][p]).sum();
                }
            };
            accumulate(i, g_mean, g_cov_i);
            accumulate(j, -g_mean, g_cov_j);
        }
    }
    return out;
}

namespace {

Gaussian2D axis_gaussian(double w, double h) {
    Gaussian2D g;
    g.cov = Vec2((w / 2.0) * (w / 2.0), (h / 2.0) * (h / 2.0)).asDiagonal();
    return g;
}

void check_targets(const OrientedBox& pred, double target_w, double target_h) {
    validate(pred);
    if (!(target_w > 0.0) || !(target_h > 0.0) || !std::isfinite(target_w) ||
        !std::isfinite(target_h)) {
        throw InvalidInput("watershed targets must be positive and finite");
    }
}

}  // namespace

LossValueGrad watershed_gwd_raw(const OrientedBox& pred, double target_w, double target_h) {
    check_targets(pred, target_w, target_h);
    const double value =
        gwd_squared(axis_gaussian(pred.w, pred.h), axis_gaussian(target_w, target_h));
    // Commuting diagonal covariances: W2^2 = (w/2 - tw/2)^2 + (h/2 - th/2)^2.
    return {value, {(pred.w - target_w) / 2.0, (pred.h - target_h) / 2.0}};
}

LossValueGrad watershed_loss(const OrientedBox& pred, double target_w, double target_h,
                             double tau) {
    auto raw = watershed_gwd_raw(pred, target_w, target_h);
    const double denom = tau + std::log1p(raw.value);
    if (!(denom > 0.0)) throw InvalidInput("watershed_loss: tau must be positive");
    const double outer = 1.0 / (denom * denom * (1.0 + raw.value));
    return {1.0 - 1.0 / denom, {outer * raw.grad[0], outer * raw.grad[1]}};
}

LossValueGrad watershed_loss_batch(std::span<const OrientedBox> preds,
                                   std::span<const ScaleTarget> targets, double tau) {
    if (preds.size() != targets.size()) {
        throw InvalidInput("watershed_loss_batch: prediction/target count mismatch");
    }
    LossValueGrad out;
    out.grad.assign(2 * preds.size(), 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!targets[i].valid) continue;
        const auto term = watershed_loss(preds[i], targets[i].w_t, targets[i].h_t, tau);
        out.value += term.value;
        out.grad[2 * i] = term.grad[0];
        out.grad[2 * i + 1] = term.grad[1];
        ++used;
    }
    if (used == 0) return out;
    const double inv = 1.0 / static_cast<double>(used);
    out.value *= inv;
    for (auto& g : out.grad) g *= inv;
    return out;
}

double total_supervised_loss(const SupervisedParts& parts, const SupervisedWeights& weights) {
    const std::array<double, 6> p{parts.cls, parts.cen, parts.box,
                                  parts.ang, parts.overlap, parts.watershed};
    const std::array<double, 6> w{weights.cls, weights.cen, weights.box,
                                  weights.ang, weights.overlap, weights.watershed};
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0) {
            throw InvalidInput("supervised loss parts must be finite and nonnegative");
        }
        if (!std::isfinite(w[i]) || w[i] < 0.0) {
            throw InvalidInput("supervised loss weights must be finite and nonnegative");
        }
        total += w[i] * p[i];
    }
    return total;
}

double bce(double target, double prob) {
    double value = 0.0;
    if (target > 0.0) value -= target * std::log(prob);
    if (target < 1.0) value -= (1.0 - target) * std::log1p(-prob);
    return value;
}

LossValueGrad unsupervised_loss(const PredictionTriple& teacher, const PredictionTriple& student,
                                double beta) {
    const std::size_t n = teacher.size();
    if (teacher.centerness.size() != n || teacher.box_margins.size() != n ||
        student.size() != n || student.centerness.size() != n ||
        student.box_margins.size() != n) {
        throw InvalidInput("unsupervised_loss: teacher/student shapes differ");
    }
    auto check_prob = [](double v, bool closed, const char* what) {
        const bool ok = closed ? (v >= 0.0 && v <= 1.0) : (v > 0.0 && v < 1.0);
        if (!ok) throw InvalidInput(std::string("unsupervised_loss: ") + what + " out of range");
    };

    LossValueGrad out;
    out.grad.assign(6 * n, 0.0);
    if (n == 0) return out;
    const double inv = 1.0 / static_cast<double>(n);

    double cls = 0.0;
    double cen = 0.0;
    double box = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        check_prob(teacher.conf[i], true, "teacher confidence");
        check_prob(teacher.centerness[i], true, "teacher centerness");
        check_prob(student.conf[i], false, "student confidence");
        check_prob(student.centerness[i], false, "student centerness");

        const double t_c = teacher.conf[i];
        const double s_c = student.conf[i];
        cls += bce(t_c, s_c);
        out.grad[i] = inv * (s_c - t_c) / (s_c * (1.0 - s_c));

        const double t_n = teacher.centerness[i];
        const double s_n = student.centerness[i];
        cen += bce(t_n, s_n);
        out.grad[n + i] = inv * (s_n - t_n) / (s_n * (1.0 - s_n));

        for (std::size_t k = 0; k < 4; ++k) {
            const double r = student.box_margins[i][k] - teacher.box_margins[i][k];
            if (!std::isfinite(r)) throw InvalidInput("unsupervised_loss: non-finite box margin");
            box += smooth_l1(r, beta);
            out.grad[2 * n + 4 * i + k] = inv * smooth_l1_grad(r, beta);
        }
    }
    out.value = inv * (cls + cen + box);
    return out;
}

double total_loss(double supervised, double unsupervised) {
    if (!std::isfinite(supervised) || !std::isfinite(unsupervised)) {
        throw InvalidInput("total_loss: non-finite input");
    }
    return supervised + unsupervised;
}

}  // namespace spwood
