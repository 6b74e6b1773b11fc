#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "loss_entries.hpp"
#include "spwood/dataset.hpp"
#include "spwood/errors.hpp"
#include "spwood/filtering.hpp"
#include "spwood/pipeline.hpp"
#include "spwood/text.hpp"

namespace spwood::cli {

namespace {

namespace fs = std::filesystem;
using text::format_double;

constexpr const char* kVersion = "0.1.0";
constexpr std::uint64_t kDefaultSeed = 0;

struct Invocation {
    std::vector<std::string> args;
    std::ostream& out;
    std::ostream& err;

    std::string command_line() const {
        std::string s;
        for (const auto& a : args) {
            if (!s.empty()) s += ' ';
            s += a;
        }
        return s;
    }

    std::string header(std::uint64_t seed) const {
        return "# spwood " + std::string(kVersion) + " | " + command_line() +
               " | seed=" + std::to_string(seed) + "\n";
    }
};

/// --seed wins, then SPWOOD_SEED, then the command's own default.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("SPWOOD_SEED")) {
        long long v = 0;
        if (!text::parse_int(env, v) || v < 0) {
            throw InvalidInput("SPWOOD_SEED must be a nonnegative integer");
        }
        return static_cast<std::uint64_t>(v);
    }
    return fallback;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << body;
}

void emit(const Invocation& inv, const std::string& out_path, const std::string& body) {
    if (out_path.empty() || out_path == "-") {
        inv.out << body;
    } else {
        write_file(out_path, body);
    }
}

// ---- sparsify -------------------------------------------------------------

struct SparsifyOptions {
    std::string input;
    std::string out;
    std::string method = "single";
    double partial = 1.0;
    double sparse = 0.1;
    std::string weak;
    std::optional<std::uint64_t> seed;
};

int cmd_sparsify(const Invocation& inv, const SparsifyOptions& opt) {
    SparsifyConfig config;
    config.method = parse_sparse_method(opt.method);
    config.partial_ratio = opt.partial;
    config.sparse_ratio = opt.sparse;
    config.seed = resolve_seed(opt.seed, kDefaultSeed);
    std::optional<WeakKind> weak;
    if (!opt.weak.empty()) weak = parse_weak_kind(opt.weak);

    const auto set = load_dota_dir(opt.input);
    const auto result = sparsify(set, config);
    const auto labeled = subset_images(set, result.split.labeled);

    const fs::path root(opt.out);
    fs::remove_all(root / "labeled");
    fs::remove_all(root / "weak");
    write_dota_dir(result.sparse, root / "labeled");

    std::string unlabeled;
    for (const auto& id : result.split.unlabeled) unlabeled += id + "\n";
    write_file(root / "unlabeled.txt", unlabeled);

    const std::string stats = retention_csv(labeled, result.sparse);
    write_file(root / "stats.csv", inv.header(config.seed) + stats);

    if (weak) {
        fs::create_directories(root / "weak");
        for (const auto& [id, image] : result.sparse.images) {
            std::string body;
            for (const auto& record : image.records) body += format_weak(weaken(record, *weak)) + "\n";
            write_file(root / "weak" / (id + ".txt"), body);
        }
    }

    inv.out << "method=" << opt.method << " images=" << set.images.size()
            << " labeled=" << result.split.labeled.size()
            << " records_in=" << labeled.record_count()
            << " records_kept=" << result.sparse.record_count() << " seed=" << config.seed
            << "\n"
            << stats;
    return kOk;
}

// ---- fit-gmm --------------------------------------------------------------

struct FitOptions {
    std::string input;
    std::string out;
    std::string mode = "mpf";
    std::string rule = "posterior";
    std::size_t min_level_scores = 20;
    std::optional<std::uint64_t> seed;
};

std::vector<LevelScores> read_level_csv(const std::string& body) {
    std::map<PyramidLevel, std::vector<double>> grouped;
    std::size_t line_no = 0;
    bool seen_data = false;
    for (auto raw : text::lines(body)) {
        ++line_no;
        const auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = text::split(line, ',');
        double score = 0.0;
        std::optional<PyramidLevel> level;
        if (fields.size() == 2) {
            try {
                level = parse_level(std::string(fields[0]));
            } catch (const InvalidInput&) {
            }
        }
        const bool numeric = fields.size() == 2 && text::parse_double(fields[1], score);
        if (!level || !numeric) {
            if (!seen_data && fields.size() == 2 && !numeric) {
                seen_data = true;  // column header
                continue;
            }
            throw ParseError(line_no, "expected 'level,score', got '" + std::string(line) + "'");
        }
        seen_data = true;
        grouped[*level].push_back(score);
    }
    std::vector<LevelScores> out;
    for (auto& [level, scores] : grouped) out.push_back({level, std::move(scores)});
    return out;
}

std::string fit_row(PyramidLevel level, const GmmFit& fit, double tau) {
    return to_string(level) + "," + format_double(fit.w_p) + "," + format_double(fit.mu_p) + "," +
           format_double(fit.var_p) + "," + format_double(fit.w_n) + "," +
           format_double(fit.mu_n) + "," + format_double(fit.var_n) + "," + format_double(tau) +
           "," + (fit.converged ? "true" : "false") + "\n";
}

int cmd_fit_gmm(const Invocation& inv, const FitOptions& opt) {
    const auto seed = resolve_seed(opt.seed, kDefaultSeed);
    FilterConfig config;
    config.min_level_scores = opt.min_level_scores;
    if (opt.rule == "posterior") {
        config.rule = ThresholdRule::PosteriorBoundary;
    } else if (opt.rule == "mode") {
        config.rule = ThresholdRule::PositiveMode;
    } else {
        throw InvalidInput("unknown threshold rule '" + opt.rule + "'");
    }
    const auto levels = read_level_csv(read_file(opt.input));
    if (levels.empty()) throw DegenerateInput("no scores in " + opt.input);

    std::string body = inv.header(seed) + "level,w_p,mu_p,var_p,w_n,mu_n,var_n,tau,converged\n";
    if (opt.mode == "mpf") {
        for (const auto& t : mpf_filter(levels, config)) body += fit_row(t.level, t.fit, t.tau);
    } else if (opt.mode == "cpf") {
        const auto pooled = cpf_filter(levels, config);
        for (const auto& l : levels) body += fit_row(l.level, pooled.fit, pooled.tau);
    } else {
        throw InvalidInput("unknown mode '" + opt.mode + "'");
    }
    emit(inv, opt.out, body);
    return kOk;
}

// ---- eval-loss ------------------------------------------------------------

struct EvalOptions {
    std::string input;
    bool check_grad = false;
    std::size_t random = 0;
    double tolerance = 1e-5;
    std::optional<std::uint64_t> seed;
};

std::string join_grad(const std::vector<double>& grad) {
    std::string s = "[";
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (i) s += ',';
        s += format_double(grad[i]);
    }
    return s + "]";
}

int cmd_eval_loss(const Invocation& inv, const EvalOptions& opt) {
    const auto seed = resolve_seed(opt.seed, kDefaultSeed);
    std::vector<std::string> lines;
    const std::string body = opt.input.empty() ? std::string() : read_file(opt.input);
    if (!opt.input.empty()) {
        for (auto raw : text::lines(body)) {
            const auto hash = raw.find('#');
            lines.emplace_back(text::trim(hash == std::string_view::npos ? raw : raw.substr(0, hash)));
        }
    }
    if (opt.random > 0) {
        for (auto& l : random_loss_lines(opt.random, seed)) lines.push_back(std::move(l));
    }
    if (lines.empty()) throw InvalidInput("eval-loss: no entries (give --input or --random)");

    inv.out << inv.header(seed);
    std::size_t entries = 0;
    std::size_t errors = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        ++entries;
        const std::size_t id = i + 1;
        try {
            const auto entry = parse_loss_entry(lines[i]);
            const auto result = entry.evaluate(entry.inputs);
            inv.out << id << " " << entry.kind << " value=" << format_double(result.value)
                    << " grad=" << join_grad(result.grad);
            if (opt.check_grad) {
                const double e = max_gradient_error(entry);
                worst = std::max(worst, e);
                inv.out << " max_rel_err=" << format_double(e);
                if (!(e < opt.tolerance)) {
                    ++errors;
                    inv.out << " error: gradient check failed";
                }
            }
            inv.out << "\n";
        } catch (const std::exception& e) {
            ++errors;
            inv.out << id << " error: " << e.what() << "\n";
        }
    }
    inv.out << "# entries=" << entries << " errors=" << errors;
    if (opt.check_grad) inv.out << " max_rel_err=" << format_double(worst);
    inv.out << "\n";
    return errors == 0 ? kOk : kInvalidInput;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
    std::string scenario;
    std::string out;
    std::string mode = "mpf";
    int seeds = 1;
    std::optional<std::uint64_t> seed;
};

std::string rows_csv(const SimReport& report, std::uint64_t seed, bool tagged) {
    std::string body;
    for (const auto& row : report.rows) {
        if (tagged) body += std::to_string(seed) + "," + to_string(report.mode) + ",";
        body += std::to_string(row.round) + "," + to_string(row.level) + "," +
                format_double(row.tau) + "," + format_double(row.quality.precision) + "," +
                format_double(row.quality.recall) + "," + format_double(row.quality.f1) + "," +
                std::to_string(row.quality.n_selected) + "\n";
    }
    return body;
}

int cmd_simulate(const Invocation& inv, const SimulateOptions& opt) {
    auto scenario = load_scenario(opt.scenario);
    scenario.seed = resolve_seed(opt.seed, scenario.seed);
    if (opt.seeds < 1) throw InvalidInput("--seeds must be at least 1");
    std::vector<FilterMode> modes;
    if (opt.mode == "mpf") {
        modes = {FilterMode::MPF};
    } else if (opt.mode == "cpf") {
        modes = {FilterMode::CPF};
    } else if (opt.mode == "paired") {
        modes = {FilterMode::MPF, FilterMode::CPF};
    } else {
        throw InvalidInput("unknown mode '" + opt.mode + "'");
    }
    const bool tagged = modes.size() > 1 || opt.seeds > 1;

    std::string body = inv.header(scenario.seed);
    body += tagged ? "seed,mode," : "";
    body += "round,level,tau,precision,recall,f1,n_selected\n";
    std::vector<std::uint64_t> seeds;
    std::map<FilterMode, std::vector<double>> f1;
    for (int s = 0; s < opt.seeds; ++s) {
        SimScenario run = scenario;
        run.seed = scenario.seed + static_cast<std::uint64_t>(s);
        seeds.push_back(run.seed);
        for (auto mode : modes) {
            const auto report = run_simulation(run, mode);
            body += rows_csv(report, run.seed, tagged);
            f1[mode].push_back(report.mean_f1());
        }
    }
    for (auto mode : modes) {
        const auto& v = f1[mode];
        body += "# summary mode=" + to_string(mode) +
                " mean_f1=" + format_double(std::accumulate(v.begin(), v.end(), 0.0) / opt.seeds) +
                "\n";
    }
    if (modes.size() > 1) {
        const auto cmp = tally_pairs(seeds, f1[FilterMode::MPF], f1[FilterMode::CPF]);
        body += "# paired seeds=" + std::to_string(opt.seeds) +
                " mpf_mean_f1=" + format_double(cmp.mean_mpf_f1()) +
                " cpf_mean_f1=" + format_double(cmp.mean_cpf_f1()) +
                " mpf_wins=" + std::to_string(cmp.mpf_wins) +
                " cpf_wins=" + std::to_string(cmp.cpf_wins) + " ties=" + std::to_string(cmp.ties) +
                " sign_test_p=" + format_double(cmp.sign_test_p) + "\n";
    }
    emit(inv, opt.out, body);
    return kOk;
}

// ---- report ---------------------------------------------------------------

struct ReportOptions {
    std::string single;
    std::string overall;
    std::string input;
    std::string out;
    double partial = 1.0;
    double sparse = 0.1;
    std::optional<std::uint64_t> seed;
};

int cmd_report(const Invocation& inv, const ReportOptions& opt) {
    const auto seed = resolve_seed(opt.seed, kDefaultSeed);
    CategoryStats stats;
    if (!opt.input.empty()) {
        if (!opt.single.empty() || !opt.overall.empty()) {
            throw InvalidInput("report: use either --input or --single/--overall");
        }
        // One partial split shared by both methods, so only the sparsifier differs.
        const auto set = load_dota_dir(opt.input);
        const auto split = select_partial(set, opt.partial, seed);
        const auto labeled = subset_images(set, split.labeled);
        stats = compare_stats(sparsify_single(labeled, opt.sparse, seed),
                              sparsify_overall(labeled, opt.sparse, seed));
    } else {
        if (opt.single.empty() || opt.overall.empty()) {
            throw InvalidInput("report: --single and --overall are both required");
        }
        stats = compare_stats(load_dota_dir(opt.single), load_dota_dir(opt.overall));
    }
    emit(inv, opt.out, inv.header(seed) + stats_csv(stats));
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sparse partial weakly-supervised oriented detection toolkit", "spwood"};
    app.option_defaults()->always_capture_default();
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.footer(
        "Seeds: --seed beats the SPWOOD_SEED environment variable, which beats the default (0; "
        "simulate falls back to the scenario's seed).\n"
        "Exit status: 0 ok, 1 usage, 2 invalid input, 3 degenerate input.");

    Invocation inv{args, out, err};

    SparsifyOptions sp;
    auto* sparsify_cmd = app.add_subcommand("sparsify", "Build a sparse partial labeled split");
    sparsify_cmd->add_option("--input", sp.input, "Directory of DOTA label files")->required();
    sparsify_cmd->add_option("--out", sp.out, "Output directory")->required();
    sparsify_cmd->add_option("--method", sp.method, "Sparse method")
        ->check(CLI::IsMember({"single", "overall"}));
    sparsify_cmd->add_option("--partial", sp.partial, "Fraction of images labeled");
    sparsify_cmd->add_option("--sparse", sp.sparse, "Fraction of instances kept");
    sparsify_cmd->add_option("--weak", sp.weak, "Also write weak labels")
        ->check(CLI::IsMember({"rbox", "hbox", "point"}));
    sparsify_cmd->add_option("--seed", sp.seed, "Random seed");

    FitOptions fo;
    auto* fit_cmd = app.add_subcommand("fit-gmm", "Fit per-level score mixtures and thresholds");
    fit_cmd->add_option("--input", fo.input, "CSV of level,score rows")->required();
    fit_cmd->add_option("--out", fo.out, "Output CSV (stdout when omitted)");
    fit_cmd->add_option("--mode", fo.mode, "mpf: per level; cpf: pooled")
        ->check(CLI::IsMember({"mpf", "cpf"}));
    fit_cmd->add_option("--rule", fo.rule, "Threshold rule")
        ->check(CLI::IsMember({"posterior", "mode"}));
    fit_cmd->add_option("--min-level-scores", fo.min_level_scores,
                        "Smaller levels use the pooled threshold");
    fit_cmd->add_option("--seed", fo.seed, "Random seed (recorded only)");

    EvalOptions eo;
    auto* eval_cmd = app.add_subcommand("eval-loss", "Evaluate losses and their gradients");
    eval_cmd->add_option("--input", eo.input, "Loss entry file");
    eval_cmd->add_flag("--check-grad", eo.check_grad, "Compare against central differences");
    eval_cmd->add_option("--random", eo.random, "Append N random entries of every loss kind");
    eval_cmd->add_option("--tolerance", eo.tolerance, "Largest accepted gradient error");
    eval_cmd->add_option("--seed", eo.seed, "Random seed");

    SimulateOptions so;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the planted pseudo-label simulation");
    sim_cmd->add_option("--scenario", so.scenario, "Scenario file")->required();
    sim_cmd->add_option("--out", so.out, "Output CSV (stdout when omitted)");
    sim_cmd->add_option("--mode", so.mode, "Filter mode")
        ->check(CLI::IsMember({"mpf", "cpf", "paired"}));
    sim_cmd->add_option("--seeds", so.seeds, "Consecutive seeds to run");
    sim_cmd->add_option("--seed", so.seed, "First seed (overrides the scenario)");

    ReportOptions ro;
    auto* report_cmd = app.add_subcommand("report", "Per-category single vs overall statistics");
    report_cmd->add_option("--single", ro.single, "Directory sparsified with the single method");
    report_cmd->add_option("--overall", ro.overall, "Directory sparsified with the overall method");
    report_cmd->add_option("--input", ro.input, "Full label directory; runs both methods");
    report_cmd->add_option("--partial", ro.partial, "Fraction of images labeled (with --input)");
    report_cmd->add_option("--sparse", ro.sparse, "Fraction of instances kept (with --input)");
    report_cmd->add_option("--out", ro.out, "Output CSV (stdout when omitted)");
    report_cmd->add_option("--seed", ro.seed, "Random seed");

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sparsify_cmd) return cmd_sparsify(inv, sp);
        if (*fit_cmd) return cmd_fit_gmm(inv, fo);
        if (*eval_cmd) return cmd_eval_loss(inv, eo);
        if (*sim_cmd) return cmd_simulate(inv, so);
        if (*report_cmd) return cmd_report(inv, ro);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const DegenerateInput& e) {
        err << "error: degenerate input: " << e.what() << "\n";
        return kDegenerate;
    } catch (const NumericalError& e) {
        err << "error: numerical failure: " << e.what() << "\n";
        return kDegenerate;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    }
    return kUsage;
}

}  // namespace spwood::cli
