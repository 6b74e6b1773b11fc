#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spwood/errors.hpp"

namespace spwood {

enum class PyramidLevel { P3 = 3, P4 = 4, P5 = 5, P6 = 6, P7 = 7 };

std::string to_string(PyramidLevel level);

/// Accepts "P3".."P7" (case-insensitive) or the bare numbers 3..7.
PyramidLevel parse_level(const std::string& text);

struct LevelScores {
    PyramidLevel level = PyramidLevel::P3;
    std::vector<double> scores;
};

struct EmConfig {
    double tolerance = 1e-6;  ///< stop once |delta log-likelihood| falls below
    int max_iterations = 300;
    double variance_floor = 1e-6;
};

/// Two-component univariate mixture; the "positive" component always has
/// the larger mean.
struct GmmFit {
    double w_p = 0.5;
    double w_n = 0.5;
    double mu_p = 0.0;
    double mu_n = 0.0;
    double var_p = 1.0;
    double var_n = 1.0;
    int iterations = 0;
    bool converged = false;
    /// Total log-likelihood after initialization and after every EM step.
    std::vector<double> log_likelihood;

    /// Posterior probability that `score` came from the positive component.
    double positive_posterior(double score) const;
};

/// EM fit initialized with mu_p = max, mu_n = min, unit variances and equal
/// weights. Throws DegenerateInput on fewer than two distinct values and
/// InvalidInput on scores outside (0,1).
GmmFit fit_gmm(std::span<const double> scores, const EmConfig& config = {});

enum class ThresholdRule {
    /// Posterior = 0.5 crossing just below the smallest observed score
    /// whose positive posterior is >= 0.5. Selecting score >= tau keeps
    /// exactly the observed scores at or above that first accepted one.
    PosteriorBoundary,
    /// Observed score where the positive component's density peaks.
    PositiveMode,
};

struct ThresholdResult {
    double tau = 0.0;
    /// No observed score reached posterior 0.5; tau fell back to max(scores).
    bool fallback = false;
};

ThresholdResult threshold_from_fit(const GmmFit& fit, std::span<const double> scores,
                                   ThresholdRule rule = ThresholdRule::PosteriorBoundary);

struct FilterConfig {
    EmConfig em;
    ThresholdRule rule = ThresholdRule::PosteriorBoundary;
    /// Levels with fewer scores (or fewer than two distinct values) borrow
    /// the pooled threshold.
    std::size_t min_level_scores = 20;
};

enum class ThresholdSource { Level, Pooled };

struct LevelThreshold {
    PyramidLevel level = PyramidLevel::P3;
    double tau = 0.0;
    ThresholdSource source = ThresholdSource::Level;
    bool fallback = false;
    GmmFit fit;
};

struct PooledThreshold {
    double tau = 0.0;
    bool fallback = false;
    GmmFit fit;
};

/// Class-agnostic baseline: one mixture over every level's scores.
PooledThreshold cpf_filter(std::span<const LevelScores> per_level, const FilterConfig& config = {});

/// One mixture and threshold per level, in input order. Sparse levels use
/// the pooled threshold; throws DegenerateInput only when pooling fails too.
std::vector<LevelThreshold> mpf_filter(std::span<const LevelScores> per_level,
                                       const FilterConfig& config = {});

/// Same thresholds for every level, taken from cpf_filter; convenient for
/// running both strategies through one selection path.
std::vector<LevelThreshold> cpf_thresholds(std::span<const LevelScores> per_level,
                                           const FilterConfig& config = {});

template <typename Payload>
struct Candidate {
    PyramidLevel level = PyramidLevel::P3;
    double score = 0.0;
    Payload payload{};
};

/// Keeps candidates with score >= tau of their level, preserving order.
template <typename Payload>
std::vector<Candidate<Payload>> select_pseudo_labels(std::span<const Candidate<Payload>> candidates,
                                                     std::span<const LevelThreshold> thresholds) {
    std::vector<Candidate<Payload>> out;
    for (const auto& c : candidates) {
        const LevelThreshold* match = nullptr;
        for (const auto& t : thresholds) {
            if (t.level == c.level) {
                match = &t;
                break;
            }
        }
        if (match == nullptr) {
            throw InvalidInput("no threshold for level " + to_string(c.level));
        }
        if (c.score >= match->tau) out.push_back(c);
    }
    return out;
}

}  // namespace spwood
