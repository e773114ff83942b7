#pragma once

#include <cstddef>
#include <functional>

namespace mvlab {

struct ScalarOptimum {
    double location = 0.0;
    double value = 0.0;
};

/// Golden-section minimization of a unimodal f on [a, b].
ScalarOptimum golden_section_minimize(const std::function<double(double)>& f, double a, double b,
                                      double x_tol = 1e-13, int max_iter = 400);

/// Two-stage search: a coarse grid on [lo, hi] (logarithmic when log_scale,
/// which requires lo > 0), then golden-section refinement on the bracket
/// around the best grid point. Refinement runs in log-space for log grids.
ScalarOptimum two_stage_minimize(const std::function<double(double)>& f, double lo, double hi,
                                 bool log_scale, std::size_t n_grid = 4000);

ScalarOptimum two_stage_maximize(const std::function<double(double)>& f, double lo, double hi,
                                 bool log_scale, std::size_t n_grid = 4000);

/// Bisection root of a function changing sign on [a, b].
double bisect_root(const std::function<double(double)>& f, double a, double b, double x_tol = 1e-15,
                   int max_iter = 300);

}  // namespace mvlab
