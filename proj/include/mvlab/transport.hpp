#pragma once

// Optimal transport between empirical measures on the segment space.

#include "mvlab/core.hpp"

#include <cstddef>
#include <vector>

namespace mvlab {

/// Ground distance between two atoms.
///   sup_norm:        max over the grid of |xi(theta) - eta(theta)|
///   euclidean:       |xi(0) - eta(0)|, the distance of the current values
///   weighted_alpha:  alpha ||xi1 - eta1||_inf + ||xi2 - eta2||_inf, where the
///                    first `split` coordinates form block 1 (split = 0 means dim/2)
struct GroundMetric {
    enum class Kind { sup_norm, euclidean, weighted_alpha };
    Kind kind = Kind::sup_norm;
    double alpha = 1.0;
    std::size_t split = 0;

    static GroundMetric sup() { return {}; }
    static GroundMetric euclid() { return {Kind::euclidean, 1.0, 0}; }
    static GroundMetric weighted(double alpha, std::size_t split = 0) { return {Kind::weighted_alpha, alpha, split}; }
};

[[nodiscard]] double ground_distance(const Segment& a, const Segment& b, const GroundMetric& metric);

/// Dense n x m pairwise cost d(xi_i, eta_j)^p, optionally truncated as min(d, 1)^p.
class CostMatrix {
public:
    CostMatrix() = default;
    CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries, double exponent = 1.0);
    static CostMatrix from_measures(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                    const GroundMetric& metric, bool truncate_at_one = false);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] double exponent() const noexcept { return p_; }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return c_[i * cols_ + j]; }
    [[nodiscard]] const std::vector<double>& entries() const noexcept { return c_; }
    [[nodiscard]] double max_entry() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double p_ = 1.0;
    std::vector<double> c_;
};

struct PlanEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    double mass = 0.0;
};

/// A coupling stored sparsely. For uniform equal-size inputs the plan is a
/// permutation (row i -> permutation[i]) with mass 1/n per pair.
struct TransportPlan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<PlanEntry> entries;
    std::vector<std::size_t> permutation;
    double objective = 0.0;

    [[nodiscard]] std::vector<double> row_marginals() const;
    [[nodiscard]] std::vector<double> col_marginals() const;
};

/// Largest square size accepted by the assignment solver.
inline constexpr std::size_t kMaxAssignmentSize = 4096;

/// Min-cost perfect matching (shortest augmenting paths with potentials).
/// Objective is the mean matched cost.
[[nodiscard]] TransportPlan solve_assignment(const CostMatrix& cost);

/// Transportation simplex for arbitrary marginals a (rows) and b (columns).
[[nodiscard]] TransportPlan solve_transport(const CostMatrix& cost, const std::vector<double>& a,
                                            const std::vector<double>& b);

/// Exact optimal plan, dispatching on the shape of the inputs.
[[nodiscard]] TransportPlan optimal_plan(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                         const CostMatrix& cost);

/// W_p for p >= 1; for p in (0, 1) the p-th power cost (the W_p^{p wedge 1} convention).
[[nodiscard]] double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                   const GroundMetric& metric = GroundMetric::sup());

/// Optimal coupling under the truncated sup-norm cost min(||xi - eta||_inf, 1).
[[nodiscard]] double rho_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

struct SinkhornResult {
    /// Transport cost (the p-th power, no root) of the best rounded plan found.
    double value = 0.0;
    /// value minus the best certified dual lower bound; exact cost is in [value - error_bound, value].
    double error_bound = 0.0;
    int iterations = 0;
    std::vector<double> gap_history;
};

/// Log-domain Sinkhorn with epsilon scaling down to epsilon_reg (relative to
/// the largest cost entry). Throws std::runtime_error when the gap has not
/// fallen below `tolerance` (relative to value) within max_iter iterations.
[[nodiscard]] SinkhornResult sinkhorn_wp(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                         double epsilon_reg, int max_iter,
                                         const GroundMetric& metric = GroundMetric::sup(), double tolerance = 1e-3);

}  // namespace mvlab
