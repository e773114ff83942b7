#pragma once

// Numeric evaluation of the explicit parameter conditions and the
// experiment-level estimators built on the simulation modules.

#include "mvlab/core.hpp"
#include "mvlab/integrator.hpp"
#include "mvlab/meanfield.hpp"
#include "mvlab/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvlab {

/// One evaluated condition. `verdict` is the strict inequality of the
/// condition applied to lhs and rhs as computed here.
struct ConditionReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool verdict = false;
    std::optional<double> optimizer;
    std::map<std::string, double> details;
    std::vector<std::string> warnings;
};

struct RateFit {
    double rate = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::size_t points = 0;
};

// ------------------------------------------------------------- checkers

/// kappa1 > kappa2 >= 0 on the stored constants, plus a randomized probe of
/// the monotonicity inequality on two-atom measures (details: probes,
/// max_violation, certified).
[[nodiscard]] ConditionReport check_H1_constants(const ModelSpec& model, std::size_t n_probes = 10000,
                                                 std::uint64_t seed = 0);

/// 4 lambda > inf_s hamiltonian_objective(s); the infimum is searched on a log
/// grid over [1e-8, 1e8] and refined by golden section.
[[nodiscard]] ConditionReport check_condition_2_4(double lambda, double a1, double a2, double a3);

/// kappa_p with its maximizer; verdict kappa_p > 0.
[[nodiscard]] ConditionReport check_kappa_p(double p, double a1_plus_a2, double r0, double lambda1);

/// Minimum of s exp(-s r0) over the dense grid s_k = lambda1 k / n_grid,
/// k = 1..n_grid, with its location.
struct GridMinimum {
    double value = 0.0;
    double location = 0.0;
    bool at_left_end = false;
};
[[nodiscard]] GridMinimum delay_profile_grid_min(double lambda1, double r0, std::size_t n_grid = 100000);

/// inf over (0, lambda1] of s exp(-s r0) > K2 + alpha' |B| + K3, evaluated on
/// the dense grid. Warns when the minimum sits at the left end of the grid and
/// reports the sup-type value in details["sup_variant"].
[[nodiscard]] ConditionReport check_K2(double lambda1, double r0, double K2, double K3, double alpha_prime,
                                       double normB);

/// Positive root of |B| a^2 - (delta - K2) a - K1 = 0. Throws when normB == 0.
[[nodiscard]] double alpha_prime(double delta, double K1, double K2, double normB);

/// The paired-model condition: the same grid minimum against
/// a2 + |a1| alpha + a3 / min(1, alpha). Throws when a1 == 0.
[[nodiscard]] ConditionReport check_ASS(double lambda1, double r0, double a1, double a2, double a3);

/// Power-law spectrum lambda_i = c i^q: converges iff q (1 - gamma) > 1
/// (lhs = q (1 - gamma), rhs = 1).
[[nodiscard]] ConditionReport check_spectral_summability(double c, double q, double gamma);
/// Explicit spectrum: partial sum plus an integral-test tail bound from a
/// power law fitted to the upper half of the spectrum (lhs = bound, rhs = inf).
[[nodiscard]] ConditionReport check_spectral_summability(const std::vector<double>& spectrum, double gamma);

/// Every check that applies to the model's hypothesis family and constants.
[[nodiscard]] std::vector<ConditionReport> check_model(const ModelSpec& model);

// --------------------------------------------------------------- reports

/// JSON document {"reports": [...], "rate_fits": [...]}; non-finite numbers become null.
void write_reports_json(std::ostream& os, const std::vector<ConditionReport>& reports,
                        const std::vector<RateFit>& fits = {});
/// Header "name,lhs,rhs,verdict,optimizer".
void write_reports_csv(std::ostream& os, const std::vector<ConditionReport>& reports);
/// Fixed-width table for terminals.
void write_reports_table(std::ostream& os, const std::vector<ConditionReport>& reports);
/// Header "rate,intercept,r_squared,t_lo,t_hi,points".
void write_rate_fit_csv(std::ostream& os, const RateFit& fit);

// ------------------------------------------------------------- estimators

/// Least squares of ln w against t over t_lo <= t <= t_hi; rate = -slope.
/// Throws when a value in the window is not positive or fewer than two points remain.
[[nodiscard]] RateFit fit_contraction_rate(const std::vector<double>& t, const std::vector<double>& w, double t_lo,
                                           double t_hi);

struct ContractionConfig {
    std::size_t N = 1000;
    double T = 4.0;
    StepScheme scheme;
    std::uint64_t seed = 0;
    /// The second ensemble starts from N(offset * 1, I); the first from a point mass at 0.
    double offset = 5.0;
    double t_lo = 0.5;
    double t_hi = 4.0;
    std::size_t checkpoint_stride = 10;
    double p = 2.0;
};

struct ContractionResult {
    std::vector<double> t;
    /// W_p between the two ensemble laws at each checkpoint.
    std::vector<double> distance;
    RateFit fit;
    std::vector<std::string> warnings;
};

/// Two ensembles on common noise streams, their law distance over time and
/// the fitted exponential rate.
[[nodiscard]] ContractionResult run_contraction_experiment(const ModelSpec& model, const ContractionConfig& cfg);

struct ComparisonConfig {
    std::size_t N = 1000;
    double T = 100.0;
    StepScheme scheme;
    std::uint64_t seed = 0;
    /// Every particle starts at the constant segment offset * 1.
    double offset = 5.0;
    /// Particles whose occupation measures are compared.
    std::size_t n_tracked = 4;
    /// Steps between occupation snapshots.
    std::size_t snapshot_stride = 10;
    /// Time between reported checkpoints.
    double report_interval = 10.0;
    /// Pair particles on sign-flipped noise so the ensemble mean carries no sampling noise
    /// for models symmetric about their mean.
    bool antithetic = true;
    InvariantConfig invariant;
};

struct ComparisonResult {
    std::vector<double> t;
    /// Mean over tracked particles of rho(L_t, Lbar_t).
    std::vector<double> rho;
    /// Mean over tracked particles of the left Riemann sum of min(||X_s - Xbar_s||_inf, 1)
    /// on the snapshot grid over [0, t).
    std::vector<double> integral;
    /// Largest rho - integral / t over particles and checkpoints (<= 0 when the coupling bound holds).
    double worst_bound_gap = 0.0;
    EmpiricalMeasure mu_bar;
    std::vector<std::string> warnings;
};

/// Estimates the invariant law, freezes the reference equation there and runs
/// it synchronously coupled to the particle system from the offset start.
[[nodiscard]] ComparisonResult run_comparison_experiment(const ModelSpec& model, const ComparisonConfig& cfg);

/// Level-2 rate of nu = N(m, v) for the reference OU dX = -lambda X dt + sigma dW
/// with invariant law N(0, sigma^2 / (2 lambda)).
[[nodiscard]] double dv_rate_gaussian_ou(double lambda_ref, double sigma_ref, double m, double v);

struct HittingConfig {
    double K_radius = 1.0;
    double lambda_exp = 0.1;
    std::size_t n_samples = 1000;
    double T_cap = 50.0;
    StepScheme scheme;
    std::uint64_t seed = 0;
    /// Sample i starts from starts[i mod size] (constant history).
    std::vector<StateVector> starts;
};

struct HittingEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    double censored_fraction = 0.0;
    double mean_tau = 0.0;
};

/// Monte-Carlo mean of exp(lambda_exp min(tau, T_cap)) where tau is the first
/// grid time with |X(t)| <= K_radius.
[[nodiscard]] HittingEstimate hitting_moment(const ReferenceModel& ref, const HittingConfig& cfg);

}  // namespace mvlab
