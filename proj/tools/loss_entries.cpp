#include "loss_entries.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spwood/errors.hpp"
#include "spwood/rng.hpp"
#include "spwood/text.hpp"

namespace spwood::cli {

namespace {

using text::format_double;

std::vector<double> numbers(const std::vector<std::string_view>& tokens, std::size_t from) {
    std::vector<double> out;
    for (std::size_t i = from; i < tokens.size(); ++i) {
        double v = 0.0;
        if (!text::parse_double(tokens[i], v)) {
            throw InvalidInput("not a number: '" + std::string(tokens[i]) + "'");
        }
        out.push_back(v);
    }
    return out;
}

OrientedBox box_at(const std::vector<double>& x, std::size_t i) {
    return {x[i], x[i + 1], x[i + 2], x[i + 3], x[i + 4]};
}

std::string join(const std::vector<double>& values) {
    std::string out;
    for (double v : values) {
        if (!out.empty()) out += ' ';
        out += format_double(v);
    }
    return out;
}

LossEntry parse_focal(const std::vector<double>& v, const std::string& kind_token) {
    if (v.size() != 1 && v.size() != 5) {
        throw InvalidInput("focal expects p_t [alpha_t gamma omega thr]");
    }
    SampleKind kind{};
    if (kind_token == "pos") {
        kind = SampleKind::Positive;
    } else if (kind_token == "neg") {
        kind = SampleKind::Negative;
    } else {
        throw InvalidInput("focal sample kind must be pos or neg");
    }
    FocalParams params;
    if (v.size() == 5) params = {v[1], v[2], v[3], v[4]};
    validate(params);
    if (!(v[0] > 0.0 && v[0] < 1.0)) throw InvalidInput("p_t must lie strictly inside (0,1)");
    return {"focal", {v[0]}, [kind, params](const std::vector<double>& x) {
                return sparse_cls_loss(x[0], kind, params);
            }};
}

}  // namespace

LossEntry parse_loss_entry(const std::string& line) {
    const auto tokens = text::split_whitespace(line);
    if (tokens.empty()) throw InvalidInput("empty entry");
    const std::string kind(tokens[0]);

    if (kind == "focal") {
        if (tokens.size() < 3) throw InvalidInput("focal expects p_t and pos|neg");
        auto v = numbers({tokens[1]}, 0);
        const auto rest = numbers(tokens, 3);
        v.insert(v.end(), rest.begin(), rest.end());
        return parse_focal(v, std::string(tokens[2]));
    }
    if (kind == "angle") {
        if (tokens.size() < 2) throw InvalidInput("angle expects flip|rotate");
        const std::string aug(tokens[1]);
        auto v = numbers(tokens, 2);
        if (aug == "flip") {
            if (v.size() != 2 && v.size() != 3) {
                throw InvalidInput("angle flip expects theta_aug theta_orig [beta]");
            }
            const double beta = v.size() == 3 ? v[2] : 1.0;
            return {"angle", {v[0], v[1]}, [beta](const std::vector<double>& x) {
                        return angle_loss(x[0], x[1], FlipAug{}, beta);
                    }};
        }
        if (aug == "rotate") {
            if (v.size() != 3 && v.size() != 4) {
                throw InvalidInput("angle rotate expects r theta_aug theta_orig [beta]");
            }
            const double r = v[0];
            const double beta = v.size() == 4 ? v[3] : 1.0;
            return {"angle", {v[1], v[2]}, [r, beta](const std::vector<double>& x) {
                        return angle_loss(x[0], x[1], RotateAug{r}, beta);
                    }};
        }
        throw InvalidInput("angle augmentation must be flip or rotate");
    }
    if (kind == "overlap") {
        auto v = numbers(tokens, 1);
        if (v.empty() || v.size() % 5 != 0) {
            throw InvalidInput("overlap expects groups of cx cy w h theta");
        }
        return {"overlap", v, [](const std::vector<double>& x) {
                    std::vector<OrientedBox> boxes;
                    for (std::size_t i = 0; i < x.size(); i += 5) boxes.push_back(box_at(x, i));
                    return gaussian_overlap_loss(boxes);
                }};
    }
    if (kind == "watershed" || kind == "gwd_raw") {
        auto v = numbers(tokens, 1);
        const bool raw = kind == "gwd_raw";
        if (v.size() != 7 && !(v.size() == 8 && !raw)) {
            throw InvalidInput(kind + " expects cx cy w h theta target_w target_h" +
                               (raw ? "" : " [tau]"));
        }
        const OrientedBox base = box_at(v, 0);
        validate(base);
        const double tw = v[5];
        const double th = v[6];
        const double tau = v.size() == 8 ? v[7] : 1.0;
        return {kind, {base.w, base.h}, [base, tw, th, tau, raw](const std::vector<double>& x) {
                    OrientedBox pred = base;
                    pred.w = x[0];
                    pred.h = x[1];
                    return raw ? watershed_gwd_raw(pred, tw, th) : watershed_loss(pred, tw, th, tau);
                }};
    }
    if (kind == "unsup") {
        auto v = numbers(tokens, 1);
        if (v.empty()) throw InvalidInput("unsup expects n followed by 12n values");
        const double nd = v[0];
        if (nd < 0 || nd != std::floor(nd)) throw InvalidInput("unsup count must be an integer");
        const auto n = static_cast<std::size_t>(nd);
        if (v.size() != 1 + 12 * n) throw InvalidInput("unsup expects n followed by 12n values");
        // Per location: conf cen l t r b; teacher block first, then student.
        auto triple_from = [n](const std::vector<double>& values, std::size_t offset) {
            PredictionTriple t;
            for (std::size_t i = 0; i < n; ++i) {
                const double* p = values.data() + offset + 6 * i;
                t.conf.push_back(p[0]);
                t.centerness.push_back(p[1]);
                t.box_margins.push_back({p[2], p[3], p[4], p[5]});
            }
            return t;
        };
        const PredictionTriple teacher = triple_from(v, 1);
        const PredictionTriple student = triple_from(v, 1 + 6 * n);
        std::vector<double> inputs;
        inputs.insert(inputs.end(), student.conf.begin(), student.conf.end());
        inputs.insert(inputs.end(), student.centerness.begin(), student.centerness.end());
        for (const auto& m : student.box_margins) inputs.insert(inputs.end(), m.begin(), m.end());
        return {"unsup", inputs, [teacher, n](const std::vector<double>& x) {
                    PredictionTriple s;
                    s.conf.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
                    s.centerness.assign(x.begin() + static_cast<std::ptrdiff_t>(n),
                                        x.begin() + static_cast<std::ptrdiff_t>(2 * n));
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* p = x.data() + 2 * n + 4 * i;
                        s.box_margins.push_back({p[0], p[1], p[2], p[3]});
                    }
                    return unsupervised_loss(teacher, s);
                }};
    }
    if (kind == "supervised") {
        auto v = numbers(tokens, 1);
        if (v.size() != 6 && v.size() != 12) {
            throw InvalidInput("supervised expects 6 parts [6 weights]");
        }
        SupervisedWeights w;
        if (v.size() == 12) w = {v[6], v[7], v[8], v[9], v[10], v[11]};
        v.resize(6);
        return {"supervised", v, [w](const std::vector<double>& x) {
                    const double value =
                        total_supervised_loss({x[0], x[1], x[2], x[3], x[4], x[5]}, w);
                    return LossValueGrad{value, {w.cls, w.cen, w.box, w.ang, w.overlap, w.watershed}};
                }};
    }
    if (kind == "total") {
        auto v = numbers(tokens, 1);
        if (v.size() != 2) throw InvalidInput("total expects sup unsup");
        return {"total", v, [](const std::vector<double>& x) {
                    return LossValueGrad{total_loss(x[0], x[1]), {1.0, 1.0}};
                }};
    }
    throw InvalidInput("unknown loss kind '" + kind + "'");
}

std::vector<std::string> random_loss_lines(std::size_t per_kind, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> lines;
    auto interior_prob = [&](double avoid) {
        double p = rng.uniform(0.02, 0.98);
        while (std::abs(p - avoid) < 1e-3) p = rng.uniform(0.02, 0.98);
        return p;
    };
    // Residuals stay clear of the Smooth-L1 knee at |x| = 1 and the wrap edge.
    auto residual = [&]() {
        double r = rng.uniform(-1.5, 1.5);
        while (std::abs(std::abs(r) - 1.0) < 1e-3) r = rng.uniform(-1.5, 1.5);
        return r;
    };
    auto box = [&]() {
        return std::vector<double>{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(2, 20),
                                   rng.uniform(2, 20), rng.uniform(-1.5, 1.5)};
    };

    for (std::size_t i = 0; i < per_kind; ++i) {
        const bool pos = rng.uniform() < 0.5;
        const double omega = rng.uniform(0.05, 1.0);
        const double gamma = rng.uniform(0.0, 3.0);
        lines.push_back("focal " + format_double(interior_prob(0.5)) + (pos ? " pos " : " neg ") +
                        "0.25 " + format_double(gamma) + " " + format_double(omega) + " 0.5");

        const double theta = rng.uniform(-1.2, 1.2);
        if (rng.uniform() < 0.5) {
            lines.push_back("angle flip " + format_double(residual() - theta) + " " +
                            format_double(theta));
        } else {
            const double r = rng.uniform(-0.3, 0.3);
            lines.push_back("angle rotate " + format_double(r) + " " +
                            format_double(theta + r + residual()) + " " + format_double(theta));
        }

        const std::size_t n_boxes = 1 + rng.below(4);
        std::vector<double> boxes;
        for (std::size_t b = 0; b < n_boxes; ++b) {
            const auto bx = box();
            boxes.insert(boxes.end(), bx.begin(), bx.end());
        }
        lines.push_back("overlap " + join(boxes));

        auto pred = box();
        pred.push_back(rng.uniform(2, 20));
        pred.push_back(rng.uniform(2, 20));
        lines.push_back("watershed " + join(pred));
        lines.push_back("gwd_raw " + join(pred));

        const std::size_t n = 1 + rng.below(4);
        std::vector<double> values{static_cast<double>(n)};
        std::vector<double> teacher_margins;
        for (std::size_t k = 0; k < n; ++k) {
            values.push_back(interior_prob(-1.0));
            values.push_back(interior_prob(-1.0));
            for (int m = 0; m < 4; ++m) {
                teacher_margins.push_back(rng.uniform(0, 30));
                values.push_back(teacher_margins.back());
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            values.push_back(interior_prob(-1.0));
            values.push_back(interior_prob(-1.0));
            for (int m = 0; m < 4; ++m) values.push_back(teacher_margins[4 * k + m] + residual());
        }
        lines.push_back("unsup " + join(values));

        std::vector<double> parts;
        for (int k = 0; k < 6; ++k) parts.push_back(rng.uniform(0, 5));
        lines.push_back("supervised " + join(parts));
        lines.push_back("total " + format_double(rng.uniform(0, 20)) + " " +
                        format_double(rng.uniform(0, 5)));
    }
    return lines;
}

double max_gradient_error(const LossEntry& entry, double step) {
    const auto analytic = entry.evaluate(entry.inputs);
    double worst = 0.0;
    for (std::size_t i = 0; i < entry.inputs.size(); ++i) {
        auto plus = entry.inputs;
        auto minus = entry.inputs;
        plus[i] += step;
        minus[i] -= step;
        const double numeric =
            (entry.evaluate(plus).value - entry.evaluate(minus).value) / (2.0 * step);
        const double a = analytic.grad[i];
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace spwood::cli
