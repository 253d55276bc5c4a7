#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "parlab/model.hpp"
#include "parlab/rng.hpp"

namespace parlab {

struct GradCheckReport {
    double max_rel_err = 0.0;
    size_t coords_checked = 0;
};

// Central-difference check of an analytic gradient. `loss_fn` evaluates the
// scalar loss for a given parameter set (64-bit); `analytic` is aligned with
// params.tensors. Samples `n_samples` coordinates uniformly over all
// parameters.
template <typename LossFn>
GradCheckReport grad_check(Parameters<double> params, const std::vector<Tensor<double>>& analytic,
                           LossFn&& loss_fn, size_t n_samples, double eps, Rng& rng) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) throw std::invalid_argument("grad_check: eps outside [1e-7,1e-4]");
    if (analytic.size() != params.tensors.size())
        throw std::invalid_argument("grad_check: gradient/parameter count mismatch");
    size_t total = 0;
    for (const auto& t : params.tensors) total += t.size();
    GradCheckReport rep;
    for (size_t s = 0; s < n_samples; ++s) {
        size_t flat = rng.uniform_int(total);
        size_t pi = 0;
        while (flat >= params.tensors[pi].size()) flat -= params.tensors[pi++].size();
        double orig = params.tensors[pi][flat];
        params.tensors[pi][flat] = orig + eps;
        double f_plus = loss_fn(params);
        params.tensors[pi][flat] = orig - eps;
        double f_minus = loss_fn(params);
        params.tensors[pi][flat] = orig;
        double numeric = (f_plus - f_minus) / (2.0 * eps);
        double a = analytic[pi][flat];
        double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - numeric) / denom);
        ++rep.coords_checked;
    }
    return rep;
}

} // namespace parlab
