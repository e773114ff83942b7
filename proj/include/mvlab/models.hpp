#pragma once

#include "mvlab/core.hpp"
#include "mvlab/linalg.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mvlab {

enum class Hypothesis { H1, H2, H3, H4 };

[[nodiscard]] const char* to_string(Hypothesis h);

/// Summary of a measure that a model's coefficients read (for every model in
/// this library: the mean of the current values). Computed once per time step
/// and shared by all particles.
using LawFeatures = std::vector<double>;

/// dX = {-diag(linear_rates) X + b(X_t, L)} dt + sigma(L) dW.
///
/// `drift` houses b (writing dim values), `diffusion` houses sigma as a
/// dim x noise_dim matrix. Both see the law only through `features`.
struct ModelSpec {
    std::string name;
    Hypothesis hypothesis = Hypothesis::H1;
    std::size_t dim = 0;
    std::size_t noise_dim = 0;
    double r0 = 0.0;
    /// Per-coordinate decay rates of the linear operator; empty means A = 0.
    std::vector<double> linear_rates;
    /// Eigenvalues (nondecreasing, positive) of the named self-adjoint operator.
    std::vector<double> spectrum;
    bool law_dependent = false;

    std::function<LawFeatures(const EmpiricalMeasure&)> features;
    std::function<void(const Segment&, const LawFeatures&, std::span<double>)> drift;
    std::function<Matrix(const LawFeatures&)> diffusion;

    std::map<std::string, double> params;

    [[nodiscard]] bool has_linear_operator() const { return !linear_rates.empty(); }
    [[nodiscard]] LawFeatures law_features(const EmpiricalMeasure& mu) const;
    [[nodiscard]] StateVector drift_at(const Segment& seg, const EmpiricalMeasure& mu) const;
    [[nodiscard]] Matrix diffusion_at(const EmpiricalMeasure& mu) const;

    [[nodiscard]] bool has_param(const std::string& key) const { return params.count(key) != 0; }
    /// Throws std::out_of_range naming the key when absent.
    [[nodiscard]] double param(const std::string& key) const;
    [[nodiscard]] std::optional<double> find_param(const std::string& key) const;
};

/// Frozen-measure (Markov) reference equation: coefficients always read the
/// frozen law, whatever measure they are handed.
struct ReferenceModel {
    ModelSpec base;
    EmpiricalMeasure frozen_measure;
    LawFeatures frozen_features;
    /// Measure-independent ModelSpec evaluating base at the frozen law.
    ModelSpec model;
};

[[nodiscard]] ReferenceModel freeze_reference(const ModelSpec& model, const EmpiricalMeasure& mu_bar);

// ------------------------------------------------------------ constructors

enum class DriftVariant { linear, superlinear };

/// Distribution-dependent OU perturbation on R^d:
///   sigma(nu) = I + eps * diag(arctan(mean(nu))),
///   b(x, nu) = -x/2 (linear) or -x - c |x|^theta x (superlinear).
[[nodiscard]] ModelSpec make_example_2_1(std::size_t d, double eps, DriftVariant variant, double c = 0.0,
                                         double theta = 0.0);

/// Stochastic Hamiltonian system on R^m x R^m with
///   Z(x, nu) = -a1 x1 - a2 x2 + a3 clamp(mean(nu)_1, -1, 1)
/// and noise sigma dW on the second block only.
[[nodiscard]] ModelSpec make_example_2_2(std::size_t m, double lambda, double a1, double a2, double a3,
                                         const Matrix& sigma);

struct DelayAtom {
    double offset = 0.0;  ///< in [-r0, 0]
    double weight = 0.0;  ///< signed; |weights| sum to one
};

/// Mode-truncated fractional heat equation with a delay drift
///   b(xi, mu) = a2 arctan(mean(mu)) + a1 sum_j Theta_j xi(r_j),  sigma = I,
/// eigenvalues lambda_i = (d pi^2 i^(2/d))^alpha / diameter^(2 alpha).
[[nodiscard]] ModelSpec make_example_2_3(std::size_t modes, double alpha, std::size_t d, double diameter,
                                         double a1, double a2, double r0, const std::vector<DelayAtom>& theta);

/// Paired degenerate system on H0 x H0 (2 * modes coordinates):
///   dX1 = {a1 X2 - lambda_1 X1} dt,
///   dX2 = {Z(X_t, L) - A X2} dt + dW,  Z = -a2 xi_1(-r0) + a3 clamp(mean(L)_1, -1, 1).
[[nodiscard]] ModelSpec make_example_2_4(std::size_t modes, double a1, double a2, double a3,
                                         const std::vector<double>& spectrum, double r0 = 0.0);

/// dX = -theta X dt + sigma dW on R^d (no law dependence).
[[nodiscard]] ModelSpec make_ou(std::size_t d, double theta, double sigma);

/// dX = A X dt + dW with A = -diag(spectrum): independent OU modes.
[[nodiscard]] ModelSpec make_linear_spectral(const std::vector<double>& spectrum);

/// lambda_i = c * i^q for i = 1..modes.
[[nodiscard]] std::vector<double> power_law_spectrum(std::size_t modes, double c, double q);

}  // namespace mvlab
