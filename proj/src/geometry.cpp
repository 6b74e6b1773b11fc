#include "spwood/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "spwood/errors.hpp"

namespace spwood {

namespace {

using std::numbers::pi;

bool all_finite(const Mat2& m) { return m.allFinite(); }

// Symmetrizes, rejects clearly indefinite input and clamps the spectrum to
// the covariance floor.
Eigen::SelfAdjointEigenSolver<Mat2> floored_eigen(const Mat2& m, const char* what) {
    if (!all_finite(m)) throw NumericalError(std::string(what) + ": non-finite covariance");
    const Mat2 sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat2> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + ": eigendecomposition failed");
    }
    const double scale = std::max(1.0, solver.eigenvalues().cwiseAbs().maxCoeff());
    if (solver.eigenvalues().minCoeff() < -1e-9 * scale) {
        throw NumericalError(std::string(what) + ": covariance is not positive semidefinite");
    }
    return solver;
}

Vec2 floored_values(const Eigen::SelfAdjointEigenSolver<Mat2>& solver) {
    return solver.eigenvalues().cwiseMax(kCovarianceFloor);
}

}  // namespace

double normalize_angle(double theta) {
    double t = std::fmod(theta + pi / 2.0, pi);
    if (t < 0.0) t += pi;
    t -= pi / 2.0;
    // fmod can land exactly on the excluded upper end after the shift.
    if (t >= pi / 2.0) t -= pi;
    return t;
}

Mat2 rotation(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat2 r;
    r << c, -s, s, c;
    return r;
}

void validate(const OrientedBox& box) {
    if (!std::isfinite(box.cx) || !std::isfinite(box.cy) || !std::isfinite(box.theta) ||
        !std::isfinite(box.w) || !std::isfinite(box.h)) {
        throw InvalidInput("oriented box has non-finite fields");
    }
    if (box.w <= 0.0 || box.h <= 0.0) {
        throw InvalidInput("oriented box needs w > 0 and h > 0");
    }
}

std::array<Vec2, 4> corners(const OrientedBox& box) {
    const Mat2 r = rotation(box.theta);
    const Vec2 c(box.cx, box.cy);
    const double hw = box.w / 2.0;
    const double hh = box.h / 2.0;
    return {c + r * Vec2(-hw, -hh), c + r * Vec2(hw, -hh), c + r * Vec2(hw, hh),
            c + r * Vec2(-hw, hh)};
}

Gaussian2D rbox_to_gaussian(const OrientedBox& box) {
    validate(box);
    const Mat2 r = rotation(box.theta);
    const Vec2 half_sq((box.w / 2.0) * (box.w / 2.0), (box.h / 2.0) * (box.h / 2.0));
    Gaussian2D g;
    g.mean = Vec2(box.cx, box.cy);
    g.cov = r * half_sq.asDiagonal() * r.transpose();
    g.cov = 0.5 * (g.cov + g.cov.transpose());
    return g;
}

std::array<Mat2, 3> rbox_covariance_partials(const OrientedBox& box) {
    const Mat2 r = rotation(box.theta);
    Mat2 perp;  // d/dtheta R(theta) = R(theta) * perp
    perp << 0.0, -1.0, 1.0, 0.0;
    const Mat2 dr = r * perp;
    const Vec2 half_sq((box.w / 2.0) * (box.w / 2.0), (box.h / 2.0) * (box.h / 2.0));
    const Mat2 d = half_sq.asDiagonal();

    const Mat2 d_w = r * Vec2(box.w / 2.0, 0.0).asDiagonal() * r.transpose();
    const Mat2 d_h = r * Vec2(0.0, box.h / 2.0).asDiagonal() * r.transpose();
    const Mat2 d_theta = dr * d * r.transpose() + r * d * dr.transpose();
    return {d_w, d_h, d_theta};
}

double bhattacharyya(const Gaussian2D& a, const Gaussian2D& b) {
    const auto ea = floored_eigen(a.cov, "bhattacharyya");
    const auto eb = floored_eigen(b.cov, "bhattacharyya");
    const auto es = floored_eigen(0.5 * (a.cov + b.cov), "bhattacharyya");
    if (es.eigenvalues().maxCoeff() <= kCovarianceFloor) {
        throw NumericalError("bhattacharyya: averaged covariance is singular");
    }
    const Vec2 ls = floored_values(es);
    const Vec2 la = floored_values(ea);
    const Vec2 lb = floored_values(eb);

    const Vec2 diff = a.mean - b.mean;
    const Vec2 proj = es.eigenvectors().transpose() * diff;
    const double mahalanobis = proj.cwiseAbs2().cwiseQuotient(ls).sum();

    const double log_det_s = std::log(ls(0)) + std::log(ls(1));
    const double log_det_a = std::log(la(0)) + std::log(la(1));
    const double log_det_b = std::log(lb(0)) + std::log(lb(1));
    const double value = mahalanobis / 8.0 + 0.5 * (log_det_s - 0.5 * (log_det_a + log_det_b));
    return std::max(0.0, value);
}

Mat2 sqrtm_psd(const Mat2& m) {
    const auto solver = floored_eigen(m, "sqrtm");
    const Vec2 roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

double gwd_squared(const Gaussian2D& a, const Gaussian2D& b) {
    const Mat2 root_b = sqrtm_psd(b.cov);
    const Mat2 inner = sqrtm_psd(root_b * a.cov * root_b);
    const double trace = (a.cov + b.cov - 2.0 * inner).trace();
    const double value = (a.mean - b.mean).squaredNorm() + trace;
    if (!std::isfinite(value)) throw NumericalError("gwd: non-finite result");
    return std::max(0.0, value);
}

OrientedBox flip_box(const OrientedBox& box, double image_height) {
    OrientedBox out = box;
    out.cy = image_height - box.cy;
    out.theta = normalize_angle(-box.theta);
    return out;
}

OrientedBox rotate_box(const OrientedBox& box, double r, const Vec2& center) {
    const Vec2 moved = center + rotation(r) * (Vec2(box.cx, box.cy) - center);
    OrientedBox out = box;
    out.cx = moved.x();
    out.cy = moved.y();
    out.theta = normalize_angle(box.theta + r);
    return out;
}

HorizontalBox hbox_of(const OrientedBox& box) {
    const double c = std::abs(std::cos(box.theta));
    const double s = std::abs(std::sin(box.theta));
    const double ex = box.w / 2.0 * c + box.h / 2.0 * s;
    const double ey = box.w / 2.0 * s + box.h / 2.0 * c;
    return {box.cx - ex, box.cy - ey, box.cx + ex, box.cy + ey};
}

}  // namespace spwood
