#include "mvlab/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvlab::conditions {

double hamiltonian_objective(double s, double a1, double a2, double a3) {
    const double g = 2.0 * a2 + a3 / s;
    return 2.0 * a3 * s + a3 / s + 2.0 * a2 + std::sqrt(4.0 * (1.0 + a1) * (1.0 + a1) + g * g);
}

double hamiltonian_delta(double s, double a1, double a2, double a3) {
    const double g = 2.0 * a2 + a3 / s;
    return (g + std::sqrt(4.0 * (1.0 + a1) * (1.0 + a1) + g * g)) / (2.0 * (1.0 + a1));
}

KappaP kappa_p(double p, double a, double r0, double lambda1) {
    if (!(p >= 1.0)) throw std::invalid_argument("kappa_p: p must be >= 1");
    if (a < 0.0 || r0 < 0.0) throw std::invalid_argument("kappa_p: inputs must be nonnegative");
    if (!(lambda1 > 0.0)) throw std::invalid_argument("kappa_p: lambda1 must be positive");
    // The objective is concave in r; clamp the stationary point to [0, lambda1].
    double theta = lambda1;
    const double c = p * r0 * a;
    if (c > 0.0) theta = std::clamp(std::log(1.0 / c) / (p * r0), 0.0, lambda1);
    return {theta - a * std::exp(p * theta * r0), theta};
}

double alpha_prime(double delta, double K1, double K2, double normB) {
    if (!(normB > 0.0)) throw std::invalid_argument("alpha_prime: operator norm must be positive");
    const double d = delta - K2;
    return (d + std::sqrt(d * d + 4.0 * K1 * normB)) / (2.0 * normB);
}

double paired_block_weight(double a1, double a2) {
    if (a1 == 0.0) throw std::invalid_argument("paired block weight: a1 must be nonzero");
    const double b = std::abs(a1);
    return (std::sqrt(a2 * a2 + 4.0 * b * a2) - a2) / (2.0 * b);
}

double delay_rate_profile(double s, double r0) { return s * std::exp(-s * r0); }

double delay_rate_profile_sup(double lambda1, double r0, double* argmax) {
    double s = lambda1;
    if (r0 > 0.0) s = std::min(lambda1, 1.0 / r0);
    if (argmax) *argmax = s;
    return delay_rate_profile(s, r0);
}

}  // namespace mvlab::conditions
