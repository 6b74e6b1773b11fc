#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spwood/losses.hpp"

namespace spwood::cli {

/// One line of an eval-loss input file, bound to the loss it names.
/// `inputs` are the prediction inputs the gradient refers to; everything
/// else is captured in `evaluate`.
struct LossEntry {
    std::string kind;
    std::vector<double> inputs;
    std::function<LossValueGrad(const std::vector<double>&)> evaluate;
};

/// Parses one non-comment line. Throws InvalidInput on malformed text.
LossEntry parse_loss_entry(const std::string& line);

/// Random entries of every kind at interior points (away from kinks and
/// domain edges), drawn from one generator.
std::vector<std::string> random_loss_lines(std::size_t per_kind, std::uint64_t seed);

/// Largest |analytic - central difference| / max(1, |analytic|, |numeric|)
/// over the entry's inputs.
double max_gradient_error(const LossEntry& entry, double step = 1e-5);

}  // namespace spwood::cli
