#pragma once

#include <array>
#include <span>
#include <variant>
#include <vector>

#include "spwood/geometry.hpp"

namespace spwood {

struct ScaleTarget;

/// Loss value together with its gradient with respect to the prediction
/// inputs, in the argument order documented on each function.
struct LossValueGrad {
    double value = 0.0;
    std::vector<double> grad;
};

/// Parameters of the sparse-aware focal classification loss.
/// `omega` down-weights negatives whose confidence exceeds `thr`; those are
/// likely unannotated objects rather than background.
struct FocalParams {
    double alpha_t = 0.25;
    double gamma = 2.0;
    double omega = 0.2;
    double thr = 0.5;
};

void validate(const FocalParams& params);

enum class SampleKind { Positive, Negative };

/// grad = {d/dp_t}. Throws InvalidInput unless 0 < p_t < 1.
///
/// The negative branch jumps at p_t = thr by (1 - omega) times the
/// unscaled value there; it is continuous everywhere else.
LossValueGrad sparse_cls_loss(double p_t, SampleKind kind, const FocalParams& params = {});

double smooth_l1(double x, double beta = 1.0);
double smooth_l1_grad(double x, double beta = 1.0);

struct FlipAug {};
struct RotateAug {
    double r = 0.0;
};
using Augmentation = std::variant<FlipAug, RotateAug>;

/// Angle consistency between a prediction on the augmented view and one
/// on the original view. The residual (theta_aug + theta_orig for a flip,
/// theta_aug - theta_orig - r for a rotation) is wrapped into
/// [-pi/2, pi/2) before the Smooth-L1, so boxes a half-turn apart agree.
///
/// grad = {d/dtheta_aug, d/dtheta_orig}.
LossValueGrad angle_loss(double theta_aug, double theta_orig, const Augmentation& aug,
                         double beta = 1.0);

/// (1/N) sum over ordered pairs i != j of the Bhattacharyya distance between
/// the boxes' Gaussians. grad has 5N entries: (cx, cy, w, h, theta) per box.
LossValueGrad gaussian_overlap_loss(std::span<const OrientedBox> boxes);

/// Raw squared Wasserstein distance between the axis-aligned width/height
/// Gaussians of the prediction and the target. grad = {d/dw, d/dh}.
LossValueGrad watershed_gwd_raw(const OrientedBox& pred, double target_w, double target_h);

/// 1 - 1/(tau + ln(1 + W2^2)) on the same Gaussians. grad = {d/dw, d/dh}.
LossValueGrad watershed_loss(const OrientedBox& pred, double target_w, double target_h,
                             double tau = 1.0);

/// Mean of watershed_loss over the valid targets; invalid ones are skipped
/// and get a zero gradient. grad has 2 entries per prediction.
LossValueGrad watershed_loss_batch(std::span<const OrientedBox> preds,
                                   std::span<const ScaleTarget> targets, double tau = 1.0);

struct SupervisedWeights {
    double cls = 1.0;
    double cen = 1.0;
    double box = 1.0;
    double ang = 0.2;
    double overlap = 10.0;
    double watershed = 5.0;
};

struct SupervisedParts {
    double cls = 0.0;
    double cen = 0.0;
    double box = 0.0;
    double ang = 0.0;
    double overlap = 0.0;
    double watershed = 0.0;
};

double total_supervised_loss(const SupervisedParts& parts, const SupervisedWeights& weights = {});

/// Dense teacher or student outputs at matched locations.
struct PredictionTriple {
    std::vector<double> conf;
    std::vector<double> centerness;
    std::vector<std::array<double, 4>> box_margins;

    std::size_t size() const { return conf.size(); }
};

/// Binary cross-entropy of the student's probability against a soft target.
double bce(double target, double prob);

/// BCE(conf) + BCE(centerness) + SmoothL1(box margins), each averaged over
/// matched locations. Teacher outputs are constant soft targets.
///
/// grad is with respect to the student only, laid out as n confidences,
/// then n centerness values, then 4n margins (location-major).
LossValueGrad unsupervised_loss(const PredictionTriple& teacher, const PredictionTriple& student,
                                double beta = 1.0);

double total_loss(double supervised, double unsupervised);

}  // namespace spwood
