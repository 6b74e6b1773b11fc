#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "spwood/errors.hpp"
#include "spwood/layout.hpp"
#include "spwood/losses.hpp"
#include "spwood/rng.hpp"

using namespace spwood;
using doctest::Approx;
using std::numbers::pi;

namespace {

// Checks every gradient entry of `f` at `x` against central differences.
void check_gradient(const std::function<LossValueGrad(const std::vector<double>&)>& f,
                    const std::vector<double>& x, double tol = 1e-5) {
    const auto analytic = f(x);
    REQUIRE(analytic.grad.size() == x.size());
    auto value = [&](const std::vector<double>& p) { return f(p).value; };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double numeric = oracle::central_difference(value, x, i);
        CHECK(oracle::gradient_error(analytic.grad[i], numeric) < tol);
    }
}

// Standard focal loss negative branch, written out independently.
double focal_negative(double p, double alpha, double gamma) {
    return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

}  // namespace

TEST_CASE("sparse_cls_loss examples") {
    const FocalParams params;  // 0.25, 2, 0.2, 0.5
    CHECK(sparse_cls_loss(1.0 - 1e-9, SampleKind::Positive, params).value < 1e-15);
    CHECK(sparse_cls_loss(0.5, SampleKind::Positive, params).value ==
          Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
    CHECK(sparse_cls_loss(0.5, SampleKind::Positive, params).value == Approx(0.043322).epsilon(1e-5));
    const double hard = 0.75 * 0.81 * -std::log(0.1) * 0.2;
    CHECK(sparse_cls_loss(0.9, SampleKind::Negative, params).value == Approx(hard).epsilon(1e-14));
    CHECK(hard == Approx(0.27976).epsilon(1e-5));
}

TEST_CASE("sparse_cls_loss domain errors") {
    CHECK_THROWS_AS(sparse_cls_loss(0.0, SampleKind::Positive), InvalidInput);
    CHECK_THROWS_AS(sparse_cls_loss(1.0, SampleKind::Negative), InvalidInput);
    CHECK_THROWS_AS(sparse_cls_loss(NAN, SampleKind::Negative), InvalidInput);
    CHECK_THROWS_AS(sparse_cls_loss(0.5, SampleKind::Negative, {0.25, 2, 0.0, 0.5}), InvalidInput);
    CHECK_THROWS_AS(sparse_cls_loss(0.5, SampleKind::Negative, {1.0, 2, 0.2, 0.5}), InvalidInput);
}

TEST_CASE("omega = 1 reduces the negative branch to plain focal loss") {
    const FocalParams params{0.25, 2.0, 1.0, 0.5};
    for (int i = 1; i < 1000; ++i) {
        const double p = i / 1000.0;
        CHECK(std::abs(sparse_cls_loss(p, SampleKind::Negative, params).value -
                       focal_negative(p, 0.25, 2.0)) <= 1e-12);
    }
}

TEST_CASE("negative branch jumps at thr by (1 - omega) times the unscaled value") {
    const FocalParams params{0.25, 2.0, 0.2, 0.5};
    const double at = sparse_cls_loss(0.5, SampleKind::Negative, params).value;
    const double above = sparse_cls_loss(std::nextafter(0.5, 1.0), SampleKind::Negative, params).value;
    CHECK(at == Approx(focal_negative(0.5, 0.25, 2.0)));
    CHECK(at - above == Approx((1.0 - 0.2) * focal_negative(0.5, 0.25, 2.0)).epsilon(1e-9));
    // Continuous away from thr.
    const double a = sparse_cls_loss(0.7, SampleKind::Negative, params).value;
    const double b = sparse_cls_loss(0.7 + 1e-9, SampleKind::Negative, params).value;
    CHECK(std::abs(a - b) < 1e-7);
}

TEST_CASE("sparse_cls_loss gradients match finite differences") {
    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
        const FocalParams params{rng.uniform(0.05, 0.95), rng.uniform(0, 4), rng.uniform(0.05, 1), 0.5};
        double p = rng.uniform(0.01, 0.99);
        while (std::abs(p - 0.5) < 1e-3) p = rng.uniform(0.01, 0.99);
        for (auto kind : {SampleKind::Positive, SampleKind::Negative}) {
            check_gradient([&](const auto& x) { return sparse_cls_loss(x[0], kind, params); }, {p});
        }
    }
}

TEST_CASE("smooth_l1 branches") {
    CHECK(smooth_l1(0.5) == Approx(0.125));
    CHECK(smooth_l1(-2.0) == Approx(1.5));
    CHECK(smooth_l1(0.3, 0.0) == Approx(0.3));
}

TEST_CASE("angle_loss examples") {
    CHECK(angle_loss(-0.4, 0.4, FlipAug{}).value == 0.0);
    CHECK(angle_loss(0.4 + 0.3, 0.4, RotateAug{0.3}).value == Approx(0.0));
    CHECK(angle_loss(0.5, 0.0, FlipAug{}).value == Approx(0.125));
    CHECK(angle_loss(0.5, 0.0, RotateAug{0.0}).value == Approx(0.125));
    // Near-equivalent angles across the wrap edge agree.
    CHECK(angle_loss(-pi / 2 + 0.005, pi / 2 - 0.005, RotateAug{0.01}).value < 1e-12);
}

TEST_CASE("angle_loss is periodic in each predicted angle") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(-3, 3);
        const double b = rng.uniform(-3, 3);
        const double r = rng.uniform(-1, 1);
        for (const Augmentation& aug : {Augmentation{FlipAug{}}, Augmentation{RotateAug{r}}}) {
            const double base = angle_loss(a, b, aug).value;
            CHECK(angle_loss(a + pi, b, aug).value == Approx(base).epsilon(1e-9));
            CHECK(angle_loss(a, b - pi, aug).value == Approx(base).epsilon(1e-9));
            CHECK(angle_loss(a + 2 * pi, b, aug).value == Approx(base).epsilon(1e-9));
        }
    }
}

TEST_CASE("angle_loss gradients match finite differences") {
    Rng rng(22);
    for (int i = 0; i < 100; ++i) {
        const double theta = rng.uniform(-1.2, 1.2);
        double res = rng.uniform(-1.5, 1.5);
        while (std::abs(std::abs(res) - 1.0) < 1e-3) res = rng.uniform(-1.5, 1.5);
        const double r = rng.uniform(-0.3, 0.3);
        check_gradient([](const auto& x) { return angle_loss(x[0], x[1], FlipAug{}); },
                       {res - theta, theta});
        check_gradient([r](const auto& x) { return angle_loss(x[0], x[1], RotateAug{r}); },
                       {theta + r + res, theta});
    }
}

TEST_CASE("gaussian_overlap_loss examples") {
    const std::vector<OrientedBox> one{{0, 0, 2, 2, 0}};
    CHECK(gaussian_overlap_loss(one).value == 0.0);
    const std::vector<OrientedBox> twins{{1, 1, 3, 2, 0.2}, {1, 1, 3, 2, 0.2}};
    CHECK(gaussian_overlap_loss(twins).value == Approx(0.0));
    const std::vector<OrientedBox> apart{{0, 0, 2, 2, 0}, {2, 0, 2, 2, 0}};
    CHECK(gaussian_overlap_loss(apart).value == Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(gaussian_overlap_loss(std::vector<OrientedBox>{}), InvalidInput);
}

TEST_CASE("gaussian_overlap_loss is permutation invariant") {
    Rng rng(12);
    std::vector<OrientedBox> boxes;
    for (int i = 0; i < 6; ++i) {
        boxes.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(2, 15),
                         rng.uniform(2, 15), rng.uniform(-1.5, 1.5)});
    }
    const double base = gaussian_overlap_loss(boxes).value;
    for (int i = 0; i < 20; ++i) {
        rng.shuffle(std::span<OrientedBox>(boxes));
        CHECK(gaussian_overlap_loss(boxes).value == Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("gaussian_overlap_loss gradients match finite differences") {
    Rng rng(23);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + rng.below(4);
        std::vector<double> x;
        for (std::size_t b = 0; b < n; ++b) {
            for (double v : {rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(2, 20),
                             rng.uniform(2, 20), rng.uniform(-1.5, 1.5)}) {
                x.push_back(v);
            }
        }
        check_gradient(
            [](const std::vector<double>& p) {
                std::vector<OrientedBox> boxes;
                for (std::size_t k = 0; k < p.size(); k += 5) {
                    boxes.push_back({p[k], p[k + 1], p[k + 2], p[k + 3], p[k + 4]});
                }
                return gaussian_overlap_loss(boxes);
            },
            x);
    }
}

TEST_CASE("watershed_loss examples") {
    CHECK(watershed_loss({0, 0, 6, 3, 0.4}, 6, 3).value == Approx(0.0));
    // w/2 = 1 against w_t/2 = 2: W2^2 = 1.
    CHECK(watershed_gwd_raw({0, 0, 2, 3, 0}, 4, 3).value == Approx(1.0));
    CHECK(watershed_loss({0, 0, 2, 3, 0}, 4, 3).value ==
          Approx(1.0 - 1.0 / (1.0 + std::log(2.0))).epsilon(1e-12));
    CHECK(watershed_loss({0, 0, 2, 3, 0}, 4, 3).value == Approx(0.40938).epsilon(1e-4));
    CHECK_THROWS_AS(watershed_loss({0, 0, 2, 3, 0}, 0, 3), InvalidInput);
    CHECK_THROWS_AS(watershed_loss({0, 0, 2, 3, 0}, 4, -1), InvalidInput);
}

TEST_CASE("watershed_loss grows with the width error") {
    const double target = 20.0;
    double prev_lo = -1.0;
    double prev_hi = -1.0;
    for (int k = 0; k <= 100; ++k) {
        const double gap = 0.15 * k;
        const double lo = watershed_loss({0, 0, target - gap * 0.1, 8, 0}, target, 8).value;
        const double hi = watershed_loss({0, 0, target + gap, 8, 0}, target, 8).value;
        if (k > 0) {
            CHECK(lo > prev_lo);
            CHECK(hi > prev_hi);
        }
        prev_lo = lo;
        prev_hi = hi;
    }
}

TEST_CASE("watershed_loss gradients match finite differences") {
    Rng rng(24);
    for (int i = 0; i < 100; ++i) {
        const OrientedBox base{rng.uniform(-5, 5), rng.uniform(-5, 5), 1, 1, rng.uniform(-1, 1)};
        const double tw = rng.uniform(2, 30);
        const double th = rng.uniform(2, 30);
        const std::vector<double> x{rng.uniform(2, 30), rng.uniform(2, 30)};
        auto with = [base](const std::vector<double>& p) {
            OrientedBox b = base;
            b.w = p[0];
            b.h = p[1];
            return b;
        };
        check_gradient([&](const auto& p) { return watershed_loss(with(p), tw, th); }, x);
        check_gradient([&](const auto& p) { return watershed_gwd_raw(with(p), tw, th); }, x);
    }
}

TEST_CASE("watershed_loss_batch skips invalid targets") {
    const std::vector<OrientedBox> preds{{0, 0, 2, 3, 0}, {0, 0, 5, 5, 0}};
    const std::vector<ScaleTarget> targets{{4, 3, true}, {0, 0, false}};
    const auto batch = watershed_loss_batch(preds, targets);
    CHECK(batch.value == Approx(watershed_loss(preds[0], 4, 3).value));
    CHECK(batch.grad[2] == 0.0);
    CHECK(batch.grad[3] == 0.0);
    const std::vector<ScaleTarget> none{{0, 0, false}, {0, 0, false}};
    CHECK(watershed_loss_batch(preds, none).value == 0.0);
}

TEST_CASE("total_supervised_loss weighting") {
    CHECK(total_supervised_loss({}) == 0.0);
    CHECK(total_supervised_loss({1, 1, 1, 1, 1, 1}) == 18.2);
    CHECK(total_supervised_loss({0, 0, 0, 2, 0, 0}) == Approx(0.4));
    CHECK_THROWS_AS(total_supervised_loss({-1, 0, 0, 0, 0, 0}), InvalidInput);
}

TEST_CASE("total_supervised_loss is linear in each part") {
    Rng rng(13);
    const SupervisedWeights w;
    const std::array<double, 6> weights{w.cls, w.cen, w.box, w.ang, w.overlap, w.watershed};
    for (int i = 0; i < 100; ++i) {
        std::array<double, 6> p{};
        for (auto& v : p) v = rng.uniform(0, 5);
        const std::size_t k = rng.below(6);
        const double bump = rng.uniform(0, 3);
        auto q = p;
        q[k] += bump;
        const double before = total_supervised_loss({p[0], p[1], p[2], p[3], p[4], p[5]});
        const double after = total_supervised_loss({q[0], q[1], q[2], q[3], q[4], q[5]});
        CHECK(after - before == Approx(weights[k] * bump).epsilon(1e-9));
    }
}

TEST_CASE("unsupervised_loss examples") {
    PredictionTriple t{{0.5, 0.5}, {0.5, 0.5}, {{{1, 2, 3, 4}}, {{5, 6, 7, 8}}}};
    const auto same = unsupervised_loss(t, t);
    CHECK(same.value == Approx(2.0 * std::log(2.0)).epsilon(1e-12));

    PredictionTriple sure{{1.0 - 1e-12}, {0.5}, {{{1, 1, 1, 1}}}};
    PredictionTriple student{{1.0 - 1e-12}, {0.5}, {{{1, 1, 1, 1}}}};
    // Only the centerness entropy remains.
    CHECK(unsupervised_loss(sure, student).value == Approx(std::log(2.0)).epsilon(1e-9));

    PredictionTriple bad = t;
    bad.conf.pop_back();
    CHECK_THROWS_AS(unsupervised_loss(bad, t), InvalidInput);
    CHECK_THROWS_AS(unsupervised_loss(t, bad), InvalidInput);
}

TEST_CASE("unsupervised_loss gradients match finite differences") {
    Rng rng(25);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + rng.below(4);
        PredictionTriple teacher;
        std::vector<double> x(6 * n);
        for (std::size_t k = 0; k < n; ++k) {
            teacher.conf.push_back(rng.uniform(0.02, 0.98));
            teacher.centerness.push_back(rng.uniform(0.02, 0.98));
            std::array<double, 4> m{};
            for (auto& v : m) v = rng.uniform(0, 30);
            teacher.box_margins.push_back(m);
            x[k] = rng.uniform(0.02, 0.98);
            x[n + k] = rng.uniform(0.02, 0.98);
            for (std::size_t j = 0; j < 4; ++j) {
                double r = rng.uniform(-1.5, 1.5);
                while (std::abs(std::abs(r) - 1.0) < 1e-3) r = rng.uniform(-1.5, 1.5);
                x[2 * n + 4 * k + j] = m[j] + r;
            }
        }
        check_gradient(
            [&](const std::vector<double>& p) {
                PredictionTriple s;
                s.conf.assign(p.begin(), p.begin() + n);
                s.centerness.assign(p.begin() + n, p.begin() + 2 * n);
                for (std::size_t k = 0; k < n; ++k) {
                    s.box_margins.push_back({p[2 * n + 4 * k], p[2 * n + 4 * k + 1],
                                             p[2 * n + 4 * k + 2], p[2 * n + 4 * k + 3]});
                }
                return unsupervised_loss(teacher, s);
            },
            x);
    }
}

TEST_CASE("total_loss adds the branches") {
    CHECK(total_loss(0, 0) == 0.0);
    CHECK(total_loss(18.2, 1.5) == Approx(19.7));
    CHECK(total_loss(3.25, 0) == 3.25);
    CHECK_THROWS_AS(total_loss(INFINITY, 0), InvalidInput);
}
