#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spwood/filtering.hpp"

namespace spwood {

struct ParamVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

inline constexpr double kDefaultEmaMomentum = 0.999;

/// out = momentum * teacher + (1 - momentum) * student, componentwise.
ParamVector ema_update(const ParamVector& teacher, const ParamVector& student,
                       double momentum = kDefaultEmaMomentum);

enum class Stage { BurnIn, SelfTraining };

inline constexpr long long kDefaultBurnInIterations = 12800;

struct StageState {
    Stage stage = Stage::BurnIn;
    long long iteration = 0;
    long long burn_in_iters = kDefaultBurnInIterations;

    static StageState initial(long long burn_in_iters = kDefaultBurnInIterations);
};

/// Increments the iteration; the stage is SelfTraining from burn_in_iters on.
StageState advance_stage(const StageState& state);

/// Planted score model for one pyramid level.
struct LevelScenario {
    PyramidLevel level = PyramidLevel::P3;
    int n_pos = 0;
    int n_neg = 0;
    double mu_p = 0.8;
    double mu_n = 0.2;
    double sigma = 0.05;
    /// Per round, mu_p rises and mu_n falls by this amount.
    double drift = 0.0;
};

struct SimScenario {
    std::vector<LevelScenario> levels;
    int rounds = 1;
    std::uint64_t seed = 0;
};

void validate(const SimScenario& scenario);

/// Flat `key = value` text; see docs/formats.md.
SimScenario parse_scenario(const std::string& text);
SimScenario load_scenario(const std::filesystem::path& path);

enum class FilterMode { MPF, CPF };

std::string to_string(FilterMode mode);

struct SelectionQuality {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int n_selected = 0;
};

struct SimRow {
    int round = 0;
    PyramidLevel level = PyramidLevel::P3;
    double tau = 0.0;
    SelectionQuality quality;
};

struct SimReport {
    FilterMode mode = FilterMode::MPF;
    std::vector<SimRow> rows;
    /// Selection quality over all levels pooled, one entry per round.
    std::vector<SelectionQuality> round_totals;

    double mean_f1() const;
};

/// Scores drawn for one round; identical across filter modes for a seed.
struct RoundScores {
    std::vector<LevelScores> levels;
    std::vector<std::vector<bool>> planted_positive;
};

/// Scores of every round, in order, from the scenario's seed.
std::vector<RoundScores> draw_rounds(const SimScenario& scenario);

SimReport run_simulation(const SimScenario& scenario, FilterMode mode,
                         const FilterConfig& config = {});

SelectionQuality selection_quality(std::span<const double> scores,
                                   const std::vector<bool>& planted_positive, double tau);

/// Head-to-head of the two filters on identical draws, one scenario copy
/// per seed in [first_seed, first_seed + n_seeds).
struct PairedComparison {
    std::vector<std::uint64_t> seeds;
    std::vector<double> mpf_f1;  ///< mean over rounds, per seed
    std::vector<double> cpf_f1;
    int mpf_wins = 0;
    int cpf_wins = 0;
    int ties = 0;
    /// One-sided exact sign test of "MPF beats CPF"; ties are dropped.
    double sign_test_p = 1.0;

    double mean_mpf_f1() const;
    double mean_cpf_f1() const;
};

PairedComparison compare_filters(const SimScenario& scenario, std::uint64_t first_seed,
                                 int n_seeds, const FilterConfig& config = {});

/// Wins, ties and sign test from per-seed mean F1 values already computed.
PairedComparison tally_pairs(std::vector<std::uint64_t> seeds, std::vector<double> mpf_f1,
                             std::vector<double> cpf_f1);

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p_value(int wins, int losses);

/// CSV with header round,level,tau,precision,recall,f1,n_selected.
std::string report_csv(const SimReport& report);

}  // namespace spwood
