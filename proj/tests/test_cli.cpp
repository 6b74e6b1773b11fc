#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "corpus.hpp"
#include "spwood/dataset.hpp"
#include "spwood/rng.hpp"

using namespace spwood;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "spwood");
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spwood_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void put(const fs::path& path, const std::string& body) {
    std::ofstream(path, std::ios::binary) << body;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string tree(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += fs::relative(f, root).string() + "\n" + slurp(f);
    return all;
}

// Last CSV field of the row for `level`.
double column(const std::string& csv, const std::string& level, int index) {
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(level + ",", 0) != 0) continue;
        std::istringstream row(line);
        std::string cell;
        for (int i = 0; i <= index; ++i) std::getline(row, cell, ',');
        return std::stod(cell);
    }
    return -1.0;
}

}  // namespace

TEST_CASE("help lists flags with defaults") {
    const auto top = run({"--help"});
    CHECK(top.code == 0);
    CHECK(top.out.find("SPWOOD_SEED") != std::string::npos);
    const auto sp = run({"sparsify", "--help"});
    CHECK(sp.out.find("--partial") != std::string::npos);
    CHECK(sp.out.find("[1]") != std::string::npos);
    CHECK(sp.out.find("[0.1]") != std::string::npos);
    const auto ev = run({"eval-loss", "--help"});
    CHECK(ev.out.find("--check-grad") != std::string::npos);
    CHECK(ev.out.find("1e-05") != std::string::npos);
}

TEST_CASE("usage errors") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"sparsify", "--input", "x"}).code == cli::kUsage);
    CHECK(run({"sparsify", "--input", "x", "--out", "y", "--method", "some"}).code == cli::kUsage);
}

TEST_CASE("eval-loss prints the supervised total") {
    const auto dir = scratch("eval");
    put(dir / "in.txt",
        "# parts then weights\nsupervised 1 1 1 1 1 1\nfocal 0.5 pos\nfocal 1.0 pos\n");
    const auto r = run({"eval-loss", "--input", (dir / "in.txt").string()});
    CHECK(r.code == cli::kInvalidInput);
    CHECK(r.out.find("2 supervised value=18.2 ") != std::string::npos);
    CHECK(r.out.find("4 error:") != std::string::npos);
    CHECK(r.out.find("# entries=3 errors=1") != std::string::npos);

    put(dir / "ok.txt", "supervised 1 1 1 1 1 1\n");
    CHECK(run({"eval-loss", "--input", (dir / "ok.txt").string()}).code == 0);
}

TEST_CASE("eval-loss gradient check on random points") {
    const auto r = run({"eval-loss", "--random", "10", "--check-grad", "--seed", "4"});
    CHECK(r.code == 0);
    const auto at = r.out.rfind("max_rel_err=");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(r.out.substr(at + 12)) < 1e-5);
    CHECK(r.out == run({"eval-loss", "--random", "10", "--check-grad", "--seed", "4"}).out);
}

TEST_CASE("fit-gmm on planted levels") {
    const auto dir = scratch("fit");
    Rng rng(81);
    std::string csv = "level,score\n";
    for (int k = 0; k < 3; ++k) {
        const double mu_n = 0.1 + 0.2 * k;
        for (int i = 0; i < 300; ++i) {
            const bool pos = i < 100;
            const double s = std::clamp(rng.normal(pos ? mu_n + 0.3 : mu_n, 0.03), 1e-6, 1 - 1e-6);
            csv += "P" + std::to_string(3 + k) + "," + std::to_string(s) + "\n";
        }
    }
    put(dir / "scores.csv", csv);
    const auto r = run({"fit-gmm", "--input", (dir / "scores.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("level,w_p,mu_p,var_p,w_n,mu_n,var_n,tau,converged\n") != std::string::npos);
    CHECK(std::abs(column(r.out, "P3", 7) - 0.25) <= 0.05);
    CHECK(std::abs(column(r.out, "P4", 7) - 0.45) <= 0.05);
    CHECK(std::abs(column(r.out, "P5", 7) - 0.65) <= 0.05);

    const auto cpf = run({"fit-gmm", "--input", (dir / "scores.csv").string(), "--mode", "cpf"});
    CHECK(column(cpf.out, "P3", 7) == column(cpf.out, "P5", 7));

    put(dir / "one.csv", csv.substr(0, csv.find("P4,")));
    const auto m = run({"fit-gmm", "--input", (dir / "one.csv").string(), "--mode", "mpf"});
    const auto c = run({"fit-gmm", "--input", (dir / "one.csv").string(), "--mode", "cpf"});
    CHECK(m.out.substr(m.out.find('\n')) == c.out.substr(c.out.find('\n')));
}

TEST_CASE("fit-gmm errors") {
    const auto dir = scratch("fit_err");
    std::string flat;
    for (int i = 0; i < 40; ++i) flat += "P3,0.5\n";
    put(dir / "flat.csv", flat);
    CHECK(run({"fit-gmm", "--input", (dir / "flat.csv").string()}).code == cli::kDegenerate);
    put(dir / "bad.csv", "P3,0.5\nP3;0.6\n");
    const auto bad = run({"fit-gmm", "--input", (dir / "bad.csv").string()});
    CHECK(bad.code == cli::kInvalidInput);
    CHECK(bad.err.find("line 2") != std::string::npos);
    CHECK(run({"fit-gmm", "--input", (dir / "missing.csv").string()}).code == cli::kInvalidInput);
}

TEST_CASE("sparsify writes a deterministic tree") {
    const auto dir = scratch("sparsify");
    write_dota_dir(testing::synthetic_corpus(82, 1200), dir / "in");
    const std::vector<std::string> args{"sparsify", "--input", (dir / "in").string(), "--out",
                                        (dir / "out").string(), "--method", "overall", "--sparse",
                                        "0.1", "--seed", "5", "--weak", "point"};
    const auto first = run(args);
    REQUIRE(first.code == 0);
    const auto snapshot = tree(dir / "out");
    CHECK(run(args).code == 0);
    CHECK(tree(dir / "out") == snapshot);
    CHECK(fs::exists(dir / "out" / "stats.csv"));
    CHECK(fs::exists(dir / "out" / "unlabeled.txt"));
    CHECK(!fs::is_empty(dir / "out" / "weak"));

    const auto kept = load_dota_dir(dir / "out" / "labeled").category_counts();
    for (const auto& [cat, n] : load_dota_dir(dir / "in").category_counts()) {
        const auto it = kept.find(cat);
        CHECK((it == kept.end() ? 0 : it->second) == round_half_up(0.1 * static_cast<double>(n)));
    }
    CHECK(slurp(dir / "out" / "stats.csv").rfind("# spwood 0.1.0 | spwood sparsify", 0) == 0);
}

TEST_CASE("sparsify single keeps singleton categories") {
    const auto dir = scratch("single");
    AnnotationSet set;
    for (int i = 0; i < 30; ++i) {
        const std::string id = "im" + std::to_string(i);
        auto& img = set.images[id];
        img.image_id = id;
        AnnotationRecord r;
        r.image_id = id;
        r.corners = {Vec2(0, 0), Vec2(4, 0), Vec2(4, 2), Vec2(0, 2)};
        r.category = "helicopter";
        img.records.push_back(r);
    }
    write_dota_dir(set, dir / "in");
    const auto r = run({"sparsify", "--input", (dir / "in").string(), "--out", (dir / "out").string(),
                        "--method", "single", "--sparse", "0.1"});
    REQUIRE(r.code == 0);
    CHECK(load_dota_dir(dir / "out" / "labeled").record_count() == 30);
}

TEST_CASE("sparsify errors") {
    const auto dir = scratch("sparsify_err");
    write_dota_dir(testing::synthetic_corpus(83, 50), dir / "in");
    CHECK(run({"sparsify", "--input", (dir / "in").string(), "--out", (dir / "o").string(), "--sparse", "0"})
              .code == cli::kInvalidInput);
    CHECK(run({"sparsify", "--input", (dir / "nope").string(), "--out", (dir / "o").string()}).code ==
          cli::kInvalidInput);
    put(dir / "in" / "broken.txt", "1 2 3 plane 0\n");
    const auto r = run({"sparsify", "--input", (dir / "in").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kInvalidInput);
    CHECK(r.err.find("broken.txt") != std::string::npos);
}

TEST_CASE("seed precedence") {
    const auto base = run({"eval-loss", "--random", "1"});
    CHECK(base.out.find("seed=0\n") != std::string::npos);
    ::setenv("SPWOOD_SEED", "17", 1);
    CHECK(run({"eval-loss", "--random", "1"}).out.find("seed=17\n") != std::string::npos);
    CHECK(run({"eval-loss", "--random", "1", "--seed", "3"}).out.find("seed=3\n") != std::string::npos);
    ::setenv("SPWOOD_SEED", "banana", 1);
    CHECK(run({"eval-loss", "--random", "1"}).code == cli::kInvalidInput);
    ::unsetenv("SPWOOD_SEED");
}

TEST_CASE("simulate") {
    const auto dir = scratch("simulate");
    const std::string scenario = std::string(SPWOOD_DATA_DIR) + "/scenarios/shifted_levels.txt";
    const auto paired = run({"simulate", "--scenario", scenario, "--mode", "paired", "--seeds", "50"});
    REQUIRE(paired.code == 0);
    const auto at = paired.out.find("# paired ");
    REQUIRE(at != std::string::npos);
    std::istringstream footer(paired.out.substr(at + 9));
    std::string tok;
    double mpf = -1;
    double cpf = -1;
    while (footer >> tok) {
        if (tok.rfind("mpf_mean_f1=", 0) == 0) mpf = std::stod(tok.substr(12));
        if (tok.rfind("cpf_mean_f1=", 0) == 0) cpf = std::stod(tok.substr(12));
    }
    CHECK(mpf > cpf);
    CHECK(paired.out.find("seed,mode,round,level,") != std::string::npos);

    const auto out = (dir / "a.csv").string();
    REQUIRE(run({"simulate", "--scenario", scenario, "--seed", "9", "--out", out}).code == 0);
    const auto first = slurp(out);
    REQUIRE(run({"simulate", "--scenario", scenario, "--seed", "9", "--out", out}).code == 0);
    CHECK(slurp(out) == first);

    put(dir / "zero.txt", "rounds = 0\nP3.n_pos = 10\nP3.n_neg = 10\n");
    CHECK(run({"simulate", "--scenario", (dir / "zero.txt").string()}).code == cli::kInvalidInput);
    put(dir / "garbled.txt", "rounds = 2\nP3.n_pos: 10\n");
    const auto g = run({"simulate", "--scenario", (dir / "garbled.txt").string()});
    CHECK(g.code == cli::kInvalidInput);
    CHECK(g.err.find("line 2") != std::string::npos);
}

TEST_CASE("report from two trees and from a corpus") {
    const auto dir = scratch("report");
    const auto corpus = testing::synthetic_corpus(84, 2000);
    write_dota_dir(corpus, dir / "in");
    write_dota_dir(sparsify_single(corpus, 0.1, 1), dir / "single");
    write_dota_dir(sparsify_overall(corpus, 0.1, 1), dir / "overall");
    const auto a = run({"report", "--single", (dir / "single").string(), "--overall", (dir / "overall").string()});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("category,count_single,count_overall,relative_difference_percent\nplane,") !=
          std::string::npos);
    const auto b = run({"report", "--input", (dir / "in").string(), "--sparse", "0.1", "--seed", "1"});
    CHECK(b.code == 0);
    CHECK(b.out.substr(b.out.find('\n')) == a.out.substr(a.out.find('\n')));
    CHECK(run({"report", "--single", (dir / "single").string()}).code == cli::kInvalidInput);
}
