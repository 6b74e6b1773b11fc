#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spwood/dataset.hpp"
#include "spwood/errors.hpp"
#include "spwood/filtering.hpp"
#include "spwood/geometry.hpp"
#include "spwood/layout.hpp"
#include "spwood/losses.hpp"
#include "spwood/pipeline.hpp"

namespace py = pybind11;
using namespace spwood;

namespace {

py::tuple value_grad(const LossValueGrad& r) { return py::make_tuple(r.value, r.grad); }

Augmentation parse_aug(const std::string& kind, double r) {
    if (kind == "flip") return FlipAug{};
    if (kind == "rotate") return RotateAug{r};
    throw InvalidInput("augmentation must be 'flip' or 'rotate'");
}

std::vector<PointAnnotation> to_seeds(const std::vector<std::pair<double, double>>& xy) {
    std::vector<PointAnnotation> seeds;
    for (const auto& [x, y] : xy) seeds.push_back({x, y, 0});
    return seeds;
}

RasterImage to_image(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2) throw InvalidInput("image must be a 2-D array");
    RasterImage img{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), {}};
    img.intensity.assign(a.data(), a.data() + a.size());
    return img;
}

py::array_t<bool> mask_array(const BinaryMask& m) {
    py::array_t<bool> out({m.height, m.width});
    auto v = out.mutable_unchecked<2>();
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) v(y, x) = m.at(x, y);
    }
    return out;
}

BinaryMask to_mask(py::array_t<bool, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2) throw InvalidInput("mask must be a 2-D array");
    BinaryMask m{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), {}};
    for (py::ssize_t i = 0; i < a.size(); ++i) m.data.push_back(a.data()[i] ? 1 : 0);
    return m;
}

std::vector<LevelScores> to_levels(const std::map<std::string, std::vector<double>>& by_level) {
    std::vector<LevelScores> out;
    for (const auto& [name, scores] : by_level) out.push_back({parse_level(name), scores});
    return out;
}

}  // namespace

PYBIND11_MODULE(_spwood, m) {
    m.doc() = "Sparse partial weakly-supervised oriented detection toolkit";

    py::register_exception<DegenerateInput>(m, "DegenerateInputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

    // geometry
    py::class_<OrientedBox>(m, "OrientedBox")
        .def(py::init<double, double, double, double, double>(), py::arg("cx"), py::arg("cy"),
             py::arg("w"), py::arg("h"), py::arg("theta") = 0.0)
        .def_readwrite("cx", &OrientedBox::cx)
        .def_readwrite("cy", &OrientedBox::cy)
        .def_readwrite("w", &OrientedBox::w)
        .def_readwrite("h", &OrientedBox::h)
        .def_readwrite("theta", &OrientedBox::theta)
        .def("__repr__", [](const OrientedBox& b) {
            return "OrientedBox(" + std::to_string(b.cx) + ", " + std::to_string(b.cy) + ", " +
                   std::to_string(b.w) + ", " + std::to_string(b.h) + ", " +
                   std::to_string(b.theta) + ")";
        });

    py::class_<Gaussian2D>(m, "Gaussian2D")
        .def(py::init([](const Vec2& mean, const Mat2& cov) { return Gaussian2D{mean, cov}; }),
             py::arg("mean"), py::arg("cov"))
        .def_readwrite("mean", &Gaussian2D::mean)
        .def_readwrite("cov", &Gaussian2D::cov);

    m.def("normalize_angle", &normalize_angle);
    m.def("rbox_to_gaussian", &rbox_to_gaussian);
    m.def("bhattacharyya", &bhattacharyya);
    m.def("gwd_squared", &gwd_squared);
    m.def("corners", [](const OrientedBox& b) {
        std::vector<Vec2> out;
        for (const auto& c : corners(b)) out.push_back(c);
        return out;
    });

    // losses
    m.def(
        "sparse_cls_loss",
        [](double p, bool positive, double alpha_t, double gamma, double omega, double thr) {
            return value_grad(sparse_cls_loss(p, positive ? SampleKind::Positive : SampleKind::Negative,
                                              {alpha_t, gamma, omega, thr}));
        },
        py::arg("p_t"), py::arg("positive"), py::arg("alpha_t") = 0.25, py::arg("gamma") = 2.0,
        py::arg("omega") = 0.2, py::arg("thr") = 0.5, "Returns (value, [d/dp_t]).");
    m.def(
        "angle_loss",
        [](double theta_aug, double theta_orig, const std::string& aug, double r, double beta) {
            return value_grad(angle_loss(theta_aug, theta_orig, parse_aug(aug, r), beta));
        },
        py::arg("theta_aug"), py::arg("theta_orig"), py::arg("aug") = "flip", py::arg("r") = 0.0,
        py::arg("beta") = 1.0);
    m.def(
        "gaussian_overlap_loss",
        [](const std::vector<OrientedBox>& boxes) { return value_grad(gaussian_overlap_loss(boxes)); },
        py::arg("boxes"));
    m.def(
        "watershed_loss",
        [](const OrientedBox& pred, double tw, double th, double tau) {
            return value_grad(watershed_loss(pred, tw, th, tau));
        },
        py::arg("pred"), py::arg("target_w"), py::arg("target_h"), py::arg("tau") = 1.0);
    m.def(
        "watershed_gwd_raw",
        [](const OrientedBox& pred, double tw, double th) {
            return value_grad(watershed_gwd_raw(pred, tw, th));
        },
        py::arg("pred"), py::arg("target_w"), py::arg("target_h"));
    m.def(
        "total_supervised_loss",
        [](double cls, double cen, double box, double ang, double overlap, double watershed) {
            return total_supervised_loss({cls, cen, box, ang, overlap, watershed});
        },
        py::arg("cls") = 0.0, py::arg("cen") = 0.0, py::arg("box") = 0.0, py::arg("ang") = 0.0,
        py::arg("overlap") = 0.0, py::arg("watershed") = 0.0);
    m.def(
        "unsupervised_loss",
        [](std::vector<double> t_conf, std::vector<double> t_cen,
           std::vector<std::array<double, 4>> t_box, std::vector<double> s_conf,
           std::vector<double> s_cen, std::vector<std::array<double, 4>> s_box) {
            return value_grad(unsupervised_loss({t_conf, t_cen, t_box}, {s_conf, s_cen, s_box}));
        },
        py::arg("teacher_conf"), py::arg("teacher_centerness"), py::arg("teacher_margins"),
        py::arg("student_conf"), py::arg("student_centerness"), py::arg("student_margins"));
    m.def("total_loss", &total_loss, py::arg("supervised"), py::arg("unsupervised"));

    // layout
    m.def(
        "voronoi_partition",
        [](const std::vector<std::pair<double, double>>& seeds, int width, int height) {
            const auto map = voronoi_partition(to_seeds(seeds), width, height);
            py::array_t<int> out({height, width});
            std::copy(map.cell_id.begin(), map.cell_id.end(), out.mutable_data());
            return out;
        },
        py::arg("seeds"), py::arg("width"), py::arg("height"),
        "Cell index per pixel as a (height, width) array.");
    m.def(
        "watershed_segment",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> image,
           const std::vector<std::pair<double, double>>& seeds) {
            const auto img = to_image(image);
            const auto cells = voronoi_partition(to_seeds(seeds), img.width, img.height);
            std::vector<py::array_t<bool>> out;
            for (const auto& mask : watershed_segment(img, cells)) out.push_back(mask_array(mask));
            return out;
        },
        py::arg("image"), py::arg("seeds"), "One boolean mask per seed.");
    m.def(
        "scale_target_from_mask",
        [](py::array_t<bool, py::array::c_style | py::array::forcecast> mask, double theta)
            -> std::optional<std::pair<double, double>> {
            const auto t = scale_target_from_mask(to_mask(mask), theta);
            if (!t.valid) return std::nullopt;
            return std::make_pair(t.w_t, t.h_t);
        },
        py::arg("mask"), py::arg("theta"), "(w_t, h_t), or None for an empty mask.");

    // filtering
    py::class_<GmmFit>(m, "GmmFit")
        .def_readonly("w_p", &GmmFit::w_p)
        .def_readonly("w_n", &GmmFit::w_n)
        .def_readonly("mu_p", &GmmFit::mu_p)
        .def_readonly("mu_n", &GmmFit::mu_n)
        .def_readonly("var_p", &GmmFit::var_p)
        .def_readonly("var_n", &GmmFit::var_n)
        .def_readonly("iterations", &GmmFit::iterations)
        .def_readonly("converged", &GmmFit::converged)
        .def_readonly("log_likelihood", &GmmFit::log_likelihood)
        .def("positive_posterior", &GmmFit::positive_posterior);
    m.def(
        "fit_gmm", [](const std::vector<double>& scores) { return fit_gmm(scores); },
        py::arg("scores"));
    m.def(
        "threshold_from_fit",
        [](const GmmFit& fit, const std::vector<double>& scores, const std::string& rule) {
            if (rule != "posterior" && rule != "mode") throw InvalidInput("rule must be 'posterior' or 'mode'");
            const auto t = threshold_from_fit(
                fit, scores, rule == "mode" ? ThresholdRule::PositiveMode : ThresholdRule::PosteriorBoundary);
            return py::make_tuple(t.tau, t.fallback);
        },
        py::arg("fit"), py::arg("scores"), py::arg("rule") = "posterior", "Returns (tau, fallback).");
    m.def(
        "mpf_filter",
        [](const std::map<std::string, std::vector<double>>& by_level) {
            std::map<std::string, double> out;
            for (const auto& t : mpf_filter(to_levels(by_level))) out[to_string(t.level)] = t.tau;
            return out;
        },
        py::arg("scores_by_level"), "Threshold per level, e.g. {'P3': 0.41, ...}.");
    m.def(
        "cpf_filter",
        [](const std::map<std::string, std::vector<double>>& by_level) {
            return cpf_filter(to_levels(by_level)).tau;
        },
        py::arg("scores_by_level"));

    // pipeline
    m.def(
        "ema_update",
        [](const std::vector<double>& teacher, const std::vector<double>& student, double momentum) {
            return ema_update({teacher}, {student}, momentum).values;
        },
        py::arg("teacher"), py::arg("student"), py::arg("momentum") = kDefaultEmaMomentum);
    m.def(
        "stage_at",
        [](long long iteration, long long burn_in_iters) {
            return iteration < burn_in_iters ? "burn-in" : "self-training";
        },
        py::arg("iteration"), py::arg("burn_in_iters") = kDefaultBurnInIterations);
    m.def(
        "simulate",
        [](const std::string& scenario_text, const std::string& mode, std::optional<std::uint64_t> seed) {
            auto scenario = parse_scenario(scenario_text);
            if (seed) scenario.seed = *seed;
            if (mode != "mpf" && mode != "cpf") throw InvalidInput("mode must be 'mpf' or 'cpf'");
            return report_csv(run_simulation(scenario, mode == "mpf" ? FilterMode::MPF : FilterMode::CPF));
        },
        py::arg("scenario_text"), py::arg("mode") = "mpf", py::arg("seed") = py::none(),
        "Round-by-round CSV report.");
    m.def(
        "compare_filters",
        [](const std::string& scenario_text, std::uint64_t first_seed, int n_seeds) {
            const auto c = compare_filters(parse_scenario(scenario_text), first_seed, n_seeds);
            py::dict d;
            d["mpf_mean_f1"] = c.mean_mpf_f1();
            d["cpf_mean_f1"] = c.mean_cpf_f1();
            d["mpf_wins"] = c.mpf_wins;
            d["cpf_wins"] = c.cpf_wins;
            d["ties"] = c.ties;
            d["sign_test_p"] = c.sign_test_p;
            return d;
        },
        py::arg("scenario_text"), py::arg("first_seed") = 0, py::arg("n_seeds") = 50);

    // dataset
    m.def("round_half_up", &round_half_up);
    m.def("relative_difference_percent", &relative_difference_percent, py::arg("count_single"),
          py::arg("count_overall"));
    m.def(
        "category_counts",
        [](const std::filesystem::path& dir) { return load_dota_dir(dir).category_counts(); },
        py::arg("label_dir"));
    m.def(
        "sparsify_dir",
        [](const std::filesystem::path& input, const std::filesystem::path& output,
           const std::string& method, double partial, double sparse, std::uint64_t seed) {
            const auto result =
                sparsify(load_dota_dir(input), {parse_sparse_method(method), partial, sparse, seed});
            write_dota_dir(result.sparse, output);
            return result.split.labeled;
        },
        py::arg("input"), py::arg("output"), py::arg("method") = "single", py::arg("partial") = 1.0,
        py::arg("sparse") = 0.1, py::arg("seed") = 0, "Writes the sparse labels; returns labeled image ids.");
    m.def(
        "compare_stats",
        [](const std::filesystem::path& single, const std::filesystem::path& overall) {
            return stats_csv(compare_stats(load_dota_dir(single), load_dota_dir(overall)));
        },
        py::arg("single_dir"), py::arg("overall_dir"), "Per-category CSV report.");
}
