#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "spwood/errors.hpp"
#include "spwood/geometry.hpp"
#include "spwood/rng.hpp"

using namespace spwood;
using doctest::Approx;
using std::numbers::pi;

namespace {

OrientedBox random_box(Rng& rng) {
    return {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0.5, 40), rng.uniform(0.5, 40),
            rng.uniform(-pi / 2, pi / 2)};
}

Gaussian2D gaussian(double mx, double my, double a, double b, double c) {
    Gaussian2D g;
    g.mean = Vec2(mx, my);
    g.cov << a, b, b, c;
    return g;
}

}  // namespace

TEST_CASE("normalize_angle maps into [-pi/2, pi/2)") {
    CHECK(normalize_angle(0.0) == 0.0);
    CHECK(normalize_angle(pi / 2) == Approx(-pi / 2));
    CHECK(normalize_angle(-pi / 2) == Approx(-pi / 2));
    CHECK(normalize_angle(pi) == Approx(0.0));
    CHECK(normalize_angle(0.3 + 5 * pi) == Approx(0.3));
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double t = normalize_angle(rng.uniform(-100, 100));
        CHECK(t >= -pi / 2);
        CHECK(t < pi / 2);
    }
}

TEST_CASE("rbox_to_gaussian examples") {
    const auto square = rbox_to_gaussian({0, 0, 2, 2, 0});
    CHECK(square.mean.isZero());
    CHECK(square.cov.isApprox(Mat2::Identity()));

    const auto wide = rbox_to_gaussian({0, 0, 4, 2, 0});
    CHECK(wide.cov(0, 0) == Approx(4.0));
    CHECK(wide.cov(1, 1) == Approx(1.0));
    CHECK(wide.cov(0, 1) == Approx(0.0));

    // Quarter turn swaps the axes.
    const auto turned = rbox_to_gaussian({0, 0, 4, 2, pi / 2});
    CHECK(turned.cov(0, 0) == Approx(1.0));
    CHECK(turned.cov(1, 1) == Approx(4.0));
    CHECK(std::abs(turned.cov(0, 1)) < 1e-12);
}

TEST_CASE("rbox_to_gaussian rejects degenerate boxes") {
    CHECK_THROWS_AS(rbox_to_gaussian({0, 0, 0, 2, 0}), InvalidInput);
    CHECK_THROWS_AS(rbox_to_gaussian({0, 0, 2, -1, 0}), InvalidInput);
    CHECK_THROWS_AS(rbox_to_gaussian({0, 0, NAN, 1, 0}), InvalidInput);
}

TEST_CASE("rbox_to_gaussian yields symmetric positive definite covariances") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        const auto g = rbox_to_gaussian(random_box(rng));
        CHECK((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat2> solver(g.cov);
        CHECK(solver.eigenvalues().minCoeff() > 1e-9);
    }
}

TEST_CASE("bhattacharyya examples") {
    const auto unit = gaussian(0, 0, 1, 0, 1);
    CHECK(bhattacharyya(unit, unit) == 0.0);
    CHECK(bhattacharyya(unit, gaussian(2, 0, 1, 0, 1)) == Approx(0.5).epsilon(1e-12));

    // Both axes contribute (1/2) ln(2.5/2), so the 2-D value is ln(1.25).
    const double expected = 0.5 * std::log(6.25 / 4.0);
    const auto wide = gaussian(0, 0, 4, 0, 4);
    CHECK(bhattacharyya(unit, wide) == Approx(expected).epsilon(1e-12));
    CHECK(expected == Approx(0.22314).epsilon(1e-4));
    CHECK(expected == Approx(2.0 * 0.5 * std::log(2.5 / 2.0)).epsilon(1e-12));
    // Independent route: -ln of the integrated coefficient.
    CHECK(oracle::bhattacharyya_by_quadrature(unit, wide, 20.0, 1600) ==
          Approx(expected).epsilon(1e-6));
}

TEST_CASE("bhattacharyya matches quadrature on correlated Gaussians") {
    const auto a = rbox_to_gaussian({0.5, -0.3, 3, 1.5, 0.4});
    const auto b = rbox_to_gaussian({-0.2, 0.6, 2, 2.5, -0.9});
    CHECK(bhattacharyya(a, b) ==
          Approx(oracle::bhattacharyya_by_quadrature(a, b, 8.0, 1200)).epsilon(1e-6));
}

TEST_CASE("bhattacharyya symmetry and identity") {
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const auto a = rbox_to_gaussian(random_box(rng));
        const auto b = rbox_to_gaussian(random_box(rng));
        CHECK(std::abs(bhattacharyya(a, b) - bhattacharyya(b, a)) < 1e-12);
        CHECK(bhattacharyya(a, a) < 1e-12);
        CHECK(bhattacharyya(a, b) >= 0.0);
    }
}

TEST_CASE("bhattacharyya rejects broken covariances") {
    Gaussian2D zero;
    zero.cov = Mat2::Zero();
    CHECK_THROWS_AS(bhattacharyya(zero, zero), NumericalError);
    const auto indefinite = gaussian(0, 0, 1, 3, 1);
    CHECK_THROWS_AS(bhattacharyya(indefinite, gaussian(0, 0, 1, 0, 1)), NumericalError);
}

TEST_CASE("gwd_squared examples") {
    const auto unit = gaussian(0, 0, 1, 0, 1);
    CHECK(gwd_squared(unit, unit) == Approx(0.0));
    CHECK(gwd_squared(unit, gaussian(0, 0, 4, 0, 1)) == Approx(1.0).epsilon(1e-12));
    CHECK(gwd_squared(unit, gaussian(3, 4, 1, 0, 1)) == Approx(25.0).epsilon(1e-12));
}

TEST_CASE("gwd_squared agrees with the closed-form trace root") {
    Rng rng(8);
    for (int i = 0; i < 300; ++i) {
        const auto a = rbox_to_gaussian(random_box(rng));
        const auto b = rbox_to_gaussian(random_box(rng));
        const double expected = oracle::gwd_closed_form(a, b);
        CHECK(std::abs(gwd_squared(a, b) - expected) <= 1e-9 * std::max(1.0, expected));
        CHECK(std::abs(gwd_squared(a, b) - gwd_squared(b, a)) <= 1e-9 * std::max(1.0, expected));
        CHECK(gwd_squared(a, a) < 1e-9);
    }
    CHECK_THROWS_AS(gwd_squared(gaussian(0, 0, 1, 3, 1), gaussian(0, 0, 1, 0, 1)), NumericalError);
}

TEST_CASE("flip_box examples and involution") {
    CHECK(flip_box({5, 10, 4, 2, 0}, 100).theta == 0.0);
    CHECK(flip_box({5, 10, 4, 2, 0.3}, 100).theta == Approx(-0.3));
    CHECK(flip_box({5, 10, 4, 2, 0.3}, 100).cy == Approx(90));

    Rng rng(2);
    for (int i = 0; i < 300; ++i) {
        const auto b = random_box(rng);
        const auto twice = flip_box(flip_box(b, 256), 256);
        CHECK(twice.cx == Approx(b.cx));
        CHECK(twice.cy == Approx(b.cy));
        CHECK(twice.theta == Approx(normalize_angle(b.theta)));
    }
}

TEST_CASE("rotate_box examples") {
    const OrientedBox b{3, 4, 6, 2, 0.2};
    const auto same = rotate_box(b, 0.0, Vec2(10, 10));
    CHECK(same.cx == Approx(3));
    CHECK(same.cy == Approx(4));
    CHECK(same.theta == Approx(0.2));

    CHECK(rotate_box({0, 0, 4, 2, 0}, pi / 4, Vec2::Zero()).theta == Approx(pi / 4));

    const auto quarter = rotate_box({1, 0, 4, 2, 0}, pi / 2, Vec2::Zero());
    CHECK(std::abs(quarter.cx) < 1e-12);
    CHECK(quarter.cy == Approx(1.0));
}

TEST_CASE("rotate_box inverse and covariance equivariance") {
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        const auto b = random_box(rng);
        const double r = rng.uniform(-2 * pi, 2 * pi);
        const Vec2 c(rng.uniform(-20, 20), rng.uniform(-20, 20));
        const auto back = rotate_box(rotate_box(b, r, c), -r, c);
        CHECK(std::abs(back.cx - b.cx) < 1e-9);
        CHECK(std::abs(back.cy - b.cy) < 1e-9);
        CHECK(std::abs(normalize_angle(back.theta - b.theta)) < 1e-9);

        const Mat2 rotated = rbox_to_gaussian(rotate_box(b, r, c)).cov;
        const Mat2 expected = rotation(r) * rbox_to_gaussian(b).cov * rotation(r).transpose();
        CHECK((rotated - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("hbox_of examples") {
    const auto a = hbox_of({0, 0, 2, 2, 0});
    CHECK(a.xmin == Approx(-1));
    CHECK(a.ymax == Approx(1));

    const auto b = hbox_of({0, 0, 2, 2, pi / 4});
    CHECK(b.xmin == Approx(-std::sqrt(2.0)));
    CHECK(b.ymin == Approx(-std::sqrt(2.0)));
    CHECK(b.xmax == Approx(std::sqrt(2.0)));
    CHECK(b.ymax == Approx(std::sqrt(2.0)));

    const auto c = hbox_of({5, 5, 4, 2, 0});
    CHECK(c.xmin == Approx(3));
    CHECK(c.ymin == Approx(4));
    CHECK(c.xmax == Approx(7));
    CHECK(c.ymax == Approx(6));
}

TEST_CASE("hbox_of bounds every corner tightly") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const auto b = random_box(rng);
        const auto hb = hbox_of(b);
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& p : corners(b)) {
            xmin = std::min(xmin, p.x());
            xmax = std::max(xmax, p.x());
            ymin = std::min(ymin, p.y());
            ymax = std::max(ymax, p.y());
        }
        CHECK(hb.xmin == Approx(xmin));
        CHECK(hb.xmax == Approx(xmax));
        CHECK(hb.ymin == Approx(ymin));
        CHECK(hb.ymax == Approx(ymax));
    }
}
