#pragma once

// Central finite-difference gradient checker. The function under test is
// evaluated with analytic gradients once, then each parameter coordinate
// is perturbed by +/-h and the results compared.

#include <functional>
#include <vector>

#include "osrk/tensor.hpp"

namespace osrk {

// `eval(with_grad)` must return the scalar value and, when with_grad is
// true, leave fresh analytic gradients in each tensor's .g (not
// accumulated across calls). Returns the max relative error
// |a-n| / max(1e-8, |a|+|n|) over all coordinates.
inline double grad_check(const std::function<double(bool)>& eval, std::vector<Tensor*> params,
                         double step = 1e-4) {
    if (step <= 0) throw ArgumentError("grad_check: step must be positive");
    double base = eval(true);
    if (!std::isfinite(base)) throw NumericalError("grad_check: non-finite function value");
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor* t : params) analytic.push_back(t->g);

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor* t = params[pi];
        for (size_t i = 0; i < t->v.size(); ++i) {
            const double saved = t->v[i];
            t->v[i] = saved + step;
            double fp = eval(false);
            t->v[i] = saved - step;
            double fm = eval(false);
            t->v[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericalError("grad_check: non-finite function value under perturbation");
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace osrk
