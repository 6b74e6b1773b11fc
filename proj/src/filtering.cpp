#include "spwood/filtering.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

namespace spwood {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln(sqrt(2 pi))

double log_normal(double x, double mu, double var) {
    const double d = x - mu;
    return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double safe_log(double w) {
    return w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
}

void check_scores(std::span<const double> scores) {
    for (double s : scores) {
        if (!(s > 0.0 && s < 1.0)) {
            throw InvalidInput("scores must lie strictly inside (0,1), got " + std::to_string(s));
        }
    }
}

bool has_two_distinct(std::span<const double> scores) {
    if (scores.empty()) return false;
    const double first = scores.front();
    return std::any_of(scores.begin(), scores.end(), [&](double s) { return s != first; });
}

// Total log-likelihood and, optionally, positive responsibilities.
double e_step(const GmmFit& fit, std::span<const double> scores, std::vector<double>* resp) {
    const double lw_p = safe_log(fit.w_p);
    const double lw_n = safe_log(fit.w_n);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double lp = lw_p + log_normal(scores[i], fit.mu_p, fit.var_p);
        const double ln = lw_n + log_normal(scores[i], fit.mu_n, fit.var_n);
        const double lse = log_sum_exp(lp, ln);
        total += lse;
        if (resp != nullptr) (*resp)[i] = std::exp(lp - lse);
    }
    return total;
}

}  // namespace

std::string to_string(PyramidLevel level) {
    return "P" + std::to_string(static_cast<int>(level));
}

PyramidLevel parse_level(const std::string& text) {
    std::string t = text;
    if (!t.empty() && (t[0] == 'P' || t[0] == 'p')) t.erase(0, 1);
    if (t.size() == 1 && t[0] >= '3' && t[0] <= '7') {
        return static_cast<PyramidLevel>(t[0] - '0');
    }
    throw InvalidInput("unknown pyramid level '" + text + "'");
}

double GmmFit::positive_posterior(double score) const {
    const double lp = safe_log(w_p) + log_normal(score, mu_p, var_p);
    const double ln = safe_log(w_n) + log_normal(score, mu_n, var_n);
    return std::exp(lp - log_sum_exp(lp, ln));
}

GmmFit fit_gmm(std::span<const double> scores, const EmConfig& config) {
    check_scores(scores);
    if (!has_two_distinct(scores)) {
        throw DegenerateInput("fit_gmm needs at least two distinct scores");
    }
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());

    GmmFit fit;
    fit.mu_p = *hi;
    fit.mu_n = *lo;
    fit.var_p = 1.0;
    fit.var_n = 1.0;
    fit.w_p = 0.5;
    fit.w_n = 0.5;

    const double n = static_cast<double>(scores.size());
    std::vector<double> resp(scores.size());
    double ll = e_step(fit, scores, &resp);
    fit.log_likelihood.push_back(ll);

    for (int it = 0; it < config.max_iterations; ++it) {
        double sum_p = 0.0;
        double mean_p = 0.0;
        double mean_n = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            sum_p += resp[i];
            mean_p += resp[i] * scores[i];
            mean_n += (1.0 - resp[i]) * scores[i];
        }
        const double sum_n = n - sum_p;
        // An emptied component keeps its mean; its weight is already ~0.
        if (sum_p > 0.0) fit.mu_p = mean_p / sum_p;
        if (sum_n > 0.0) fit.mu_n = mean_n / sum_n;

        double var_p = 0.0;
        double var_n = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double dp = scores[i] - fit.mu_p;
            const double dn = scores[i] - fit.mu_n;
            var_p += resp[i] * dp * dp;
            var_n += (1.0 - resp[i]) * dn * dn;
        }
        fit.var_p = std::max(config.variance_floor, sum_p > 0.0 ? var_p / sum_p : 0.0);
        fit.var_n = std::max(config.variance_floor, sum_n > 0.0 ? var_n / sum_n : 0.0);
        fit.w_p = sum_p / n;
        fit.w_n = 1.0 - fit.w_p;

        const double next = e_step(fit, scores, &resp);
        fit.log_likelihood.push_back(next);
        fit.iterations = it + 1;
        const double delta = next - ll;
        ll = next;
        if (std::abs(delta) < config.tolerance) {
            fit.converged = true;
            break;
        }
    }

    if (fit.mu_p < fit.mu_n) {
        std::swap(fit.mu_p, fit.mu_n);
        std::swap(fit.var_p, fit.var_n);
        std::swap(fit.w_p, fit.w_n);
    }
    return fit;
}

ThresholdResult threshold_from_fit(const GmmFit& fit, std::span<const double> scores,
                                   ThresholdRule rule) {
    if (scores.empty()) throw InvalidInput("threshold_from_fit needs scores");

    if (rule == ThresholdRule::PositiveMode) {
        double best = scores.front();
        for (double s : scores) {
            const double d = std::abs(s - fit.mu_p);
            const double bd = std::abs(best - fit.mu_p);
            if (d < bd || (d == bd && s < best)) best = s;
        }
        return {best, false};
    }

    double first = std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (s < first && fit.positive_posterior(s) >= 0.5) first = s;
    }
    if (std::isinf(first)) {
        return {*std::max_element(scores.begin(), scores.end()), true};
    }
    // Largest observed score below the first accepted one. Nothing lies
    // strictly between the two, so any tau in (below, first] selects the
    // same observed scores; report where the posterior actually crosses.
    double below = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (s < first && s > below) below = s;
    }
    if (std::isinf(below)) return {first, false};
    double lo = below;
    double hi = first;
    for (int i = 0; i < 200 && std::nextafter(lo, hi) < hi; ++i) {
        const double mid = lo + 0.5 * (hi - lo);
        if (fit.positive_posterior(mid) >= 0.5) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return {hi, false};
}

PooledThreshold cpf_filter(std::span<const LevelScores> per_level, const FilterConfig& config) {
    std::vector<double> pooled;
    for (const auto& level : per_level) {
        pooled.insert(pooled.end(), level.scores.begin(), level.scores.end());
    }
    PooledThreshold out;
    out.fit = fit_gmm(pooled, config.em);
    const auto t = threshold_from_fit(out.fit, pooled, config.rule);
    out.tau = t.tau;
    out.fallback = t.fallback;
    return out;
}

std::vector<LevelThreshold> mpf_filter(std::span<const LevelScores> per_level,
                                       const FilterConfig& config) {
    auto degenerate = [&](const LevelScores& level) {
        return level.scores.size() < config.min_level_scores || !has_two_distinct(level.scores);
    };
    for (const auto& level : per_level) check_scores(level.scores);

    std::optional<PooledThreshold> pooled;
    auto pooled_threshold = [&]() -> const PooledThreshold& {
        if (!pooled) pooled = cpf_filter(per_level, config);
        return *pooled;
    };

    // Per-level fits are independent of one another.
    std::vector<LevelThreshold> out;
    out.reserve(per_level.size());
    for (const auto& level : per_level) {
        LevelThreshold t;
        t.level = level.level;
        if (degenerate(level)) {
            const auto& p = pooled_threshold();
            t.tau = p.tau;
            t.fallback = p.fallback;
            t.fit = p.fit;
            t.source = ThresholdSource::Pooled;
        } else {
            t.fit = fit_gmm(level.scores, config.em);
            const auto r = threshold_from_fit(t.fit, level.scores, config.rule);
            t.tau = r.tau;
            t.fallback = r.fallback;
            t.source = ThresholdSource::Level;
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<LevelThreshold> cpf_thresholds(std::span<const LevelScores> per_level,
                                           const FilterConfig& config) {
    const auto pooled = cpf_filter(per_level, config);
    std::vector<LevelThreshold> out;
    for (const auto& level : per_level) {
        out.push_back({level.level, pooled.tau, ThresholdSource::Pooled, pooled.fallback, pooled.fit});
    }
    return out;
}

}  // namespace spwood
