#pragma once

#include <array>

#include <Eigen/Core>

namespace spwood {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Rotated box. Angles are radians in the long-edge convention, kept in
/// [-pi/2, pi/2) by the operations that produce boxes.
struct OrientedBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 1.0;
    double h = 1.0;
    double theta = 0.0;
};

struct HorizontalBox {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;
};

struct PointAnnotation {
    double x = 0.0;
    double y = 0.0;
    int category = 0;
};

struct Gaussian2D {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Identity();
};

/// Eigenvalue floor applied to covariances before inversion or logs.
inline constexpr double kCovarianceFloor = 1e-12;

/// Maps any angle into [-pi/2, pi/2).
double normalize_angle(double theta);

Mat2 rotation(double theta);

/// Throws InvalidInput unless w, h > 0 and every field is finite.
void validate(const OrientedBox& box);

/// Corners in order (-w/2,-h/2), (w/2,-h/2), (w/2,h/2), (-w/2,h/2) of the
/// box frame, mapped to image coordinates.
std::array<Vec2, 4> corners(const OrientedBox& box);

/// mean = center, cov = R(theta) diag((w/2)^2, (h/2)^2) R(theta)^T.
Gaussian2D rbox_to_gaussian(const OrientedBox& box);

/// Partials of the covariance of rbox_to_gaussian with respect to w, h
/// and theta, in that order.
std::array<Mat2, 3> rbox_covariance_partials(const OrientedBox& box);

/// B = 1/8 dmu^T S^-1 dmu + 1/2 ln(det S / sqrt(det Sa det Sb)), S = (Sa+Sb)/2.
double bhattacharyya(const Gaussian2D& a, const Gaussian2D& b);

/// Squared 2-Wasserstein distance between two Gaussians.
double gwd_squared(const Gaussian2D& a, const Gaussian2D& b);

/// Principal square root of a symmetric PSD matrix.
Mat2 sqrtm_psd(const Mat2& m);

/// Vertical flip about the image's horizontal midline.
OrientedBox flip_box(const OrientedBox& box, double image_height);

/// Rotates the box by r radians about `center`.
OrientedBox rotate_box(const OrientedBox& box, double r, const Vec2& center);

HorizontalBox hbox_of(const OrientedBox& box);

}  // namespace spwood
