#pragma once

// Closed-form kernels of the parameter conditions. Shared by the model
// constructors (to derive their advertised constants) and by the analysis
// checkers; they do no searching and hold no state.

namespace mvlab::conditions {

/// Objective whose infimum over s > 0 is the right side of the stochastic
/// Hamiltonian contraction condition:
///   2 a3 s + a3/s + 2 a2 + sqrt(4 (1 + a1)^2 + (2 a2 + a3/s)^2).
[[nodiscard]] double hamiltonian_objective(double s, double a1, double a2, double a3);

/// Splitting parameter delta(s) equalizing the two quadratic-form
/// coefficients of the Hamiltonian bound chain.
[[nodiscard]] double hamiltonian_delta(double s, double a1, double a2, double a3);

struct KappaP {
    double kappa = 0.0;
    double theta = 0.0;
};

/// sup over r in [0, lambda1] of r - a * exp(p r r0), with its maximizer.
[[nodiscard]] KappaP kappa_p(double p, double a, double r0, double lambda1);

/// (delta - K2 + sqrt((delta - K2)^2 + 4 K1 normB)) / (2 normB).
[[nodiscard]] double alpha_prime(double delta, double K1, double K2, double normB);

/// Block weight of the paired degenerate model:
///   (sqrt(a2^2 + 4 a1 a2) - a2) / (2 a1), with a1 entering through |a1|.
[[nodiscard]] double paired_block_weight(double a1, double a2);

/// s * exp(-s r0)
[[nodiscard]] double delay_rate_profile(double s, double r0);

/// sup over s in (0, lambda1] of s exp(-s r0), attained at min(1/r0, lambda1).
[[nodiscard]] double delay_rate_profile_sup(double lambda1, double r0, double* argmax = nullptr);

}  // namespace mvlab::conditions
