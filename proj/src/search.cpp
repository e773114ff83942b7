#include "mvlab/search.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mvlab {

ScalarOptimum golden_section_minimize(const std::function<double(double)>& f, double a, double b, double x_tol,
                                      int max_iter) {
    if (b < a) std::swap(a, b);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > x_tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Endpoints are candidates too: the optimum of a monotone f sits on the boundary.
    ScalarOptimum best{c, fc};
    if (fd < best.value) best = {d, fd};
    const double fa = f(a);
    if (fa < best.value) best = {a, fa};
    const double fb = f(b);
    if (fb < best.value) best = {b, fb};
    return best;
}

ScalarOptimum two_stage_minimize(const std::function<double(double)>& f, double lo, double hi, bool log_scale,
                                 std::size_t n_grid) {
    if (!(hi > lo)) throw std::invalid_argument("two_stage_minimize: empty interval");
    if (log_scale && !(lo > 0.0)) throw std::invalid_argument("two_stage_minimize: log grid needs lo > 0");
    if (n_grid < 3) n_grid = 3;
    const double u_lo = log_scale ? std::log(lo) : lo;
    const double u_hi = log_scale ? std::log(hi) : hi;
    auto to_x = [&](double u) { return log_scale ? std::exp(u) : u; };
    const double h = (u_hi - u_lo) / static_cast<double>(n_grid - 1);

    std::size_t best_k = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_grid; ++k) {
        const double u = (k + 1 == n_grid) ? u_hi : u_lo + h * static_cast<double>(k);
        const double v = f(to_x(u));
        if (v < best_v) {
            best_v = v;
            best_k = k;
        }
    }
    const double a = u_lo + h * static_cast<double>(best_k == 0 ? 0 : best_k - 1);
    const double b = best_k + 1 >= n_grid ? u_hi : u_lo + h * static_cast<double>(best_k + 1);
    auto g = [&](double u) { return f(to_x(u)); };
    ScalarOptimum refined = golden_section_minimize(g, a, b);
    if (best_v < refined.value) refined = {u_lo + h * static_cast<double>(best_k), best_v};
    return {to_x(refined.location), refined.value};
}

ScalarOptimum two_stage_maximize(const std::function<double(double)>& f, double lo, double hi, bool log_scale,
                                 std::size_t n_grid) {
    auto r = two_stage_minimize([&](double x) { return -f(x); }, lo, hi, log_scale, n_grid);
    return {r.location, -r.value};
}

double bisect_root(const std::function<double(double)>& f, double a, double b, double x_tol, int max_iter) {
    double fa = f(a);
    const double fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa < 0.0) == (fb < 0.0)) throw std::invalid_argument("bisect_root: no sign change on bracket");
    for (int it = 0; it < max_iter && (b - a) > x_tol * (1.0 + std::abs(a)); ++it) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if (fm == 0.0) return m;
        if ((fm < 0.0) == (fa < 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

}  // namespace mvlab
