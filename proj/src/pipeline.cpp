#include "spwood/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "spwood/errors.hpp"
#include "spwood/rng.hpp"
#include "spwood/text.hpp"

namespace spwood {

ParamVector ema_update(const ParamVector& teacher, const ParamVector& student, double momentum) {
    if (teacher.dim() != student.dim()) {
        throw InvalidInput("ema_update: teacher and student dimensions differ");
    }
    if (!(momentum >= 0.0 && momentum <= 1.0)) {
        throw InvalidInput("ema_update: momentum must lie in [0,1]");
    }
    ParamVector out;
    out.values.resize(teacher.dim());
    for (std::size_t i = 0; i < teacher.dim(); ++i) {
        out.values[i] = momentum * teacher.values[i] + (1.0 - momentum) * student.values[i];
    }
    return out;
}

StageState StageState::initial(long long burn_in_iters) {
    if (burn_in_iters < 0) throw InvalidInput("burn-in iterations must be nonnegative");
    return {burn_in_iters > 0 ? Stage::BurnIn : Stage::SelfTraining, 0, burn_in_iters};
}

StageState advance_stage(const StageState& state) {
    StageState next = state;
    ++next.iteration;
    next.stage = next.iteration < next.burn_in_iters ? Stage::BurnIn : Stage::SelfTraining;
    return next;
}

void validate(const SimScenario& scenario) {
    if (scenario.rounds < 1) throw InvalidInput("scenario needs rounds >= 1");
    if (scenario.levels.empty()) throw InvalidInput("scenario declares no levels");
    long long positives = 0;
    for (const auto& l : scenario.levels) {
        const auto name = to_string(l.level);
        if (l.n_pos < 0 || l.n_neg < 0) throw InvalidInput(name + ": negative sample count");
        if (!(l.sigma > 0.0) || !std::isfinite(l.sigma)) {
            throw InvalidInput(name + ": sigma must be positive");
        }
        if (!(l.mu_p >= 0.0 && l.mu_p <= 1.0) || !(l.mu_n >= 0.0 && l.mu_n <= 1.0)) {
            throw InvalidInput(name + ": means must lie in [0,1]");
        }
        if (!std::isfinite(l.drift)) throw InvalidInput(name + ": drift must be finite");
        positives += l.n_pos;
    }
    if (positives == 0) throw InvalidInput("scenario plants no positives");
}

SimScenario parse_scenario(const std::string& body) {
    SimScenario scenario;
    std::map<PyramidLevel, LevelScenario> levels;
    std::size_t line_no = 0;
    for (auto raw : text::lines(body)) {
        ++line_no;
        const auto hash = raw.find('#');
        const auto line = text::trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "expected key = value");
        const std::string key(text::trim(line.substr(0, eq)));
        const auto value = text::trim(line.substr(eq + 1));

        double number = 0.0;
        if (!text::parse_double(value, number)) {
            throw ParseError(line_no, "value of '" + key + "' is not a number");
        }
        auto as_count = [&]() {
            long long v = 0;
            if (!text::parse_int(value, v) || v < 0 || v > 100000000) {
                throw ParseError(line_no, "'" + key + "' needs a nonnegative integer");
            }
            return v;
        };

        if (key == "rounds") {
            scenario.rounds = static_cast<int>(as_count());
            continue;
        }
        if (key == "seed") {
            scenario.seed = static_cast<std::uint64_t>(as_count());
            continue;
        }
        const auto dot = key.find('.');
        if (dot == std::string::npos) throw ParseError(line_no, "unknown key '" + key + "'");
        PyramidLevel level{};
        try {
            level = parse_level(key.substr(0, dot));
        } catch (const InvalidInput& e) {
            throw ParseError(line_no, e.what());
        }
        auto& spec = levels[level];
        spec.level = level;
        const std::string field = key.substr(dot + 1);
        if (field == "n_pos") {
            spec.n_pos = static_cast<int>(as_count());
        } else if (field == "n_neg") {
            spec.n_neg = static_cast<int>(as_count());
        } else if (field == "mu_p") {
            spec.mu_p = number;
        } else if (field == "mu_n") {
            spec.mu_n = number;
        } else if (field == "sigma") {
            spec.sigma = number;
        } else if (field == "drift") {
            spec.drift = number;
        } else {
            throw ParseError(line_no, "unknown level field '" + field + "'");
        }
    }
    for (auto& [level, spec] : levels) scenario.levels.push_back(spec);
    validate(scenario);
    return scenario;
}

SimScenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open scenario " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::string to_string(FilterMode mode) { return mode == FilterMode::MPF ? "mpf" : "cpf"; }

double SimReport::mean_f1() const {
    if (round_totals.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& q : round_totals) sum += q.f1;
    return sum / static_cast<double>(round_totals.size());
}

std::vector<RoundScores> draw_rounds(const SimScenario& scenario) {
    validate(scenario);
    constexpr double kEdge = 1e-6;
    Rng rng(scenario.seed);
    std::vector<RoundScores> rounds;
    rounds.reserve(static_cast<std::size_t>(scenario.rounds));
    for (int r = 0; r < scenario.rounds; ++r) {
        RoundScores round;
        for (const auto& spec : scenario.levels) {
            const double mu_p = std::clamp(spec.mu_p + r * spec.drift, 0.0, 1.0);
            const double mu_n = std::clamp(spec.mu_n - r * spec.drift, 0.0, 1.0);
            LevelScores level{spec.level, {}};
            std::vector<bool> planted;
            level.scores.reserve(static_cast<std::size_t>(spec.n_pos + spec.n_neg));
            for (int i = 0; i < spec.n_pos; ++i) {
                level.scores.push_back(std::clamp(rng.normal(mu_p, spec.sigma), kEdge, 1.0 - kEdge));
                planted.push_back(true);
            }
            for (int i = 0; i < spec.n_neg; ++i) {
                level.scores.push_back(std::clamp(rng.normal(mu_n, spec.sigma), kEdge, 1.0 - kEdge));
                planted.push_back(false);
            }
            round.levels.push_back(std::move(level));
            round.planted_positive.push_back(std::move(planted));
        }
        rounds.push_back(std::move(round));
    }
    return rounds;
}

namespace {

struct SelectionCounts {
    int tp = 0;
    int selected = 0;
    int positives = 0;

    void add(std::span<const double> scores, const std::vector<bool>& planted, double tau) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool keep = scores[i] >= tau;
            selected += keep;
            positives += planted[i];
            tp += keep && planted[i];
        }
    }

    SelectionQuality quality() const {
        SelectionQuality q;
        q.n_selected = selected;
        q.precision = selected > 0 ? static_cast<double>(tp) / selected : 0.0;
        q.recall = positives > 0 ? static_cast<double>(tp) / positives : 0.0;
        q.f1 = q.precision + q.recall > 0.0
                   ? 2.0 * q.precision * q.recall / (q.precision + q.recall)
                   : 0.0;
        return q;
    }
};

}  // namespace

SelectionQuality selection_quality(std::span<const double> scores,
                                   const std::vector<bool>& planted_positive, double tau) {
    if (scores.size() != planted_positive.size()) {
        throw InvalidInput("selection_quality: label count mismatch");
    }
    SelectionCounts counts;
    counts.add(scores, planted_positive, tau);
    return counts.quality();
}

SimReport run_simulation(const SimScenario& scenario, FilterMode mode,
                         const FilterConfig& config) {
    SimReport report;
    report.mode = mode;
    const auto rounds = draw_rounds(scenario);
    for (std::size_t r = 0; r < rounds.size(); ++r) {
        const auto& round = rounds[r];
        const auto thresholds = mode == FilterMode::MPF ? mpf_filter(round.levels, config)
                                                        : cpf_thresholds(round.levels, config);
        SelectionCounts pooled;
        for (std::size_t l = 0; l < round.levels.size(); ++l) {
            const auto& scores = round.levels[l].scores;
            const auto& planted = round.planted_positive[l];
            SimRow row;
            row.round = static_cast<int>(r);
            row.level = round.levels[l].level;
            row.tau = thresholds[l].tau;
            row.quality = selection_quality(scores, planted, row.tau);
            report.rows.push_back(row);
            pooled.add(scores, planted, row.tau);
        }
        report.round_totals.push_back(pooled.quality());
    }
    return report;
}

double PairedComparison::mean_mpf_f1() const {
    return mpf_f1.empty() ? 0.0
                          : std::accumulate(mpf_f1.begin(), mpf_f1.end(), 0.0) / mpf_f1.size();
}

double PairedComparison::mean_cpf_f1() const {
    return cpf_f1.empty() ? 0.0
                          : std::accumulate(cpf_f1.begin(), cpf_f1.end(), 0.0) / cpf_f1.size();
}

PairedComparison tally_pairs(std::vector<std::uint64_t> seeds, std::vector<double> mpf_f1,
                             std::vector<double> cpf_f1) {
    if (seeds.size() != mpf_f1.size() || seeds.size() != cpf_f1.size()) {
        throw InvalidInput("tally_pairs: mismatched lengths");
    }
    PairedComparison out;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (mpf_f1[i] > cpf_f1[i]) {
            ++out.mpf_wins;
        } else if (cpf_f1[i] > mpf_f1[i]) {
            ++out.cpf_wins;
        } else {
            ++out.ties;
        }
    }
    out.seeds = std::move(seeds);
    out.mpf_f1 = std::move(mpf_f1);
    out.cpf_f1 = std::move(cpf_f1);
    out.sign_test_p = sign_test_p_value(out.mpf_wins, out.cpf_wins);
    return out;
}

PairedComparison compare_filters(const SimScenario& scenario, std::uint64_t first_seed,
                                 int n_seeds, const FilterConfig& config) {
    if (n_seeds < 1) throw InvalidInput("compare_filters needs at least one seed");
    std::vector<std::uint64_t> seeds;
    std::vector<double> mpf;
    std::vector<double> cpf;
    for (int i = 0; i < n_seeds; ++i) {
        SimScenario run = scenario;
        run.seed = first_seed + static_cast<std::uint64_t>(i);
        seeds.push_back(run.seed);
        mpf.push_back(run_simulation(run, FilterMode::MPF, config).mean_f1());
        cpf.push_back(run_simulation(run, FilterMode::CPF, config).mean_f1());
    }
    return tally_pairs(std::move(seeds), std::move(mpf), std::move(cpf));
}

double sign_test_p_value(int wins, int losses) {
    const int n = wins + losses;
    if (n == 0) return 1.0;
    // Sum binomial terms in log space to stay exact enough for large n.
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(n - k + 1.0) - n * std::log(2.0);
        p += std::exp(log_term);
    }
    return std::min(1.0, p);
}

std::string report_csv(const SimReport& report) {
    std::string out = "round,level,tau,precision,recall,f1,n_selected\n";
    for (const auto& row : report.rows) {
        out += std::to_string(row.round) + "," + to_string(row.level) + "," +
               text::format_double(row.tau) + "," + text::format_double(row.quality.precision) +
               "," + text::format_double(row.quality.recall) + "," +
               text::format_double(row.quality.f1) + "," + std::to_string(row.quality.n_selected) +
               "\n";
    }
    return out;
}

}  // namespace spwood
