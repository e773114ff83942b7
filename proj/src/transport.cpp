#include "mvlab/transport.hpp"

#include "mvlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mvlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double block_sup(const Segment& a, const Segment& b, std::size_t lo, std::size_t hi) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.grid_size(); ++k) {
        auto x = a.value(k);
        auto y = b.value(k);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = x[i] - y[i];
            s += d * d;
        }
        m = std::max(m, s);
    }
    return std::sqrt(m);
}

void check_compatible(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.empty() || nu.empty()) throw std::invalid_argument("transport: empty measure");
    if (mu.dim() != nu.dim()) {
        throw std::invalid_argument("transport: dimension mismatch (" + std::to_string(mu.dim()) + " vs " +
                                    std::to_string(nu.dim()) + ")");
    }
    if (mu.grid_size() != nu.grid_size()) throw std::invalid_argument("transport: segment grids differ");
}

double log_sum_exp(const double* v, std::size_t n) {
    double m = -kInf;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

}  // namespace

double ground_distance(const Segment& a, const Segment& b, const GroundMetric& metric) {
    if (a.dim() != b.dim()) throw std::invalid_argument("ground_distance: dimension mismatch");
    switch (metric.kind) {
        case GroundMetric::Kind::sup_norm:
            return sup_distance(a, b);
        case GroundMetric::Kind::euclidean:
            return euclidean_distance(a.current(), b.current());
        case GroundMetric::Kind::weighted_alpha: {
            if (a.grid_size() != b.grid_size()) throw std::invalid_argument("ground_distance: segment grids differ");
            const std::size_t split = metric.split == 0 ? a.dim() / 2 : metric.split;
            if (split > a.dim()) throw std::invalid_argument("ground_distance: block split exceeds dimension");
            return metric.alpha * block_sup(a, b, 0, split) + block_sup(a, b, split, a.dim());
        }
    }
    return 0.0;
}

// ------------------------------------------------------------------ CostMatrix

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries, double exponent)
    : rows_(rows), cols_(cols), p_(exponent), c_(std::move(entries)) {
    if (c_.size() != rows_ * cols_) throw std::invalid_argument("CostMatrix: entry count mismatch");
    for (double v : c_) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("CostMatrix: entries must be finite and >= 0");
    }
}

CostMatrix CostMatrix::from_measures(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p,
                                     const GroundMetric& metric, bool truncate_at_one) {
    check_compatible(mu, nu);
    if (!(p > 0.0)) throw std::invalid_argument("CostMatrix: exponent must be positive");
    const std::size_t n = mu.size();
    const std::size_t m = nu.size();
    std::vector<double> c(n * m);
    auto row = [&](std::size_t i) {
        for (std::size_t j = 0; j < m; ++j) {
            double d = ground_distance(mu.atom(i), nu.atom(j), metric);
            if (truncate_at_one) d = std::min(d, 1.0);
            c[i * m + j] = p == 1.0 ? d : (p == 2.0 ? d * d : std::pow(d, p));
        }
    };
    if (n * m >= 16384) {
        parallel_for(0, n, row);
    } else {
        for (std::size_t i = 0; i < n; ++i) row(i);
    }
    CostMatrix out;
    out.rows_ = n;
    out.cols_ = m;
    out.p_ = p;
    out.c_ = std::move(c);
    return out;
}

double CostMatrix::max_entry() const {
    double m = 0.0;
    for (double v : c_) m = std::max(m, v);
    return m;
}

// --------------------------------------------------------------- TransportPlan

std::vector<double> TransportPlan::row_marginals() const {
    std::vector<double> r(rows, 0.0);
    for (const auto& e : entries) r[e.row] += e.mass;
    return r;
}

std::vector<double> TransportPlan::col_marginals() const {
    std::vector<double> c(cols, 0.0);
    for (const auto& e : entries) c[e.col] += e.mass;
    return c;
}

// ------------------------------------------------------------------ assignment

namespace {

// Jonker-Volgenant on a dense n x n cost: column reduction, two passes of
// augmenting row reduction, then shortest augmenting paths for the rows still
// free. x[i] is the column of row i, y[j] the row of column j, v the column
// prices.
class DenseJV {
public:
    DenseJV(const double* c, std::size_t n) : c_(c), n_(static_cast<long>(n)), x_(n, -1), y_(n, -1), v_(n, kInf) {}

    std::vector<long> solve() {
        std::vector<long> free_rows(static_cast<std::size_t>(n_));
        long n_free = column_reduction(free_rows);
        for (int pass = 0; pass < 2 && n_free > 0; ++pass) n_free = row_reduction(free_rows, n_free);
        if (n_free > 0) augment(free_rows, n_free);
        return x_;
    }

private:
    double cost(long i, long j) const { return c_[i * n_ + j]; }

    long column_reduction(std::vector<long>& free_rows) {
        for (long i = 0; i < n_; ++i) {
            for (long j = 0; j < n_; ++j) {
                if (cost(i, j) < v_[j]) {
                    v_[j] = cost(i, j);
                    y_[j] = i;
                }
            }
        }
        std::vector<char> unique(static_cast<std::size_t>(n_), 1);
        for (long j = n_ - 1; j >= 0; --j) {
            const long i = y_[j];
            if (x_[i] < 0) {
                x_[i] = j;
            } else {
                unique[i] = 0;
                y_[j] = -1;
            }
        }
        long n_free = 0;
        for (long i = 0; i < n_; ++i) {
            if (x_[i] < 0) {
                free_rows[n_free++] = i;
            } else if (unique[i]) {
                const long j = x_[i];
                double m = kInf;
                for (long j2 = 0; j2 < n_; ++j2) {
                    if (j2 != j) m = std::min(m, cost(i, j2) - v_[j2]);
                }
                if (m < kInf) v_[j] -= m;
            }
        }
        return n_free;
    }

    long row_reduction(std::vector<long>& free_rows, long n_free) {
        long current = 0;
        long next_free = 0;
        long rounds = 0;
        while (current < n_free) {
            ++rounds;
            const long fi = free_rows[current++];
            long j1 = 0;
            double u1 = cost(fi, 0) - v_[0];
            long j2 = -1;
            double u2 = kInf;
            for (long j = 1; j < n_; ++j) {
                const double h = cost(fi, j) - v_[j];
                if (h < u2) {
                    if (h >= u1) {
                        u2 = h;
                        j2 = j;
                    } else {
                        u2 = u1;
                        u1 = h;
                        j2 = j1;
                        j1 = j;
                    }
                }
            }
            long i0 = y_[j1];
            const double v1_new = v_[j1] - (u2 - u1);
            const bool lowers = v1_new < v_[j1];
            if (rounds < current * n_) {
                if (lowers) {
                    v_[j1] = v1_new;
                } else if (i0 >= 0 && j2 >= 0) {
                    j1 = j2;
                    i0 = y_[j2];
                }
                if (i0 >= 0) {
                    if (lowers) {
                        free_rows[--current] = i0;
                    } else {
                        free_rows[next_free++] = i0;
                    }
                }
            } else if (i0 >= 0) {
                free_rows[next_free++] = i0;
            }
            x_[fi] = j1;
            y_[j1] = fi;
        }
        return next_free;
    }

    void augment(const std::vector<long>& free_rows, long n_free) {
        std::vector<long> pred(static_cast<std::size_t>(n_));
        std::vector<long> cols(static_cast<std::size_t>(n_));
        std::vector<double> d(static_cast<std::size_t>(n_));
        for (long f = 0; f < n_free; ++f) {
            const long start = free_rows[f];
            long j = shortest_path(start, pred, cols, d);
            long i = -1;
            while (i != start) {
                i = pred[j];
                y_[j] = i;
                std::swap(j, x_[i]);
            }
        }
    }

    // Dijkstra over reduced costs from a free row; returns the free column reached.
    long shortest_path(long start, std::vector<long>& pred, std::vector<long>& cols, std::vector<double>& d) {
        for (long j = 0; j < n_; ++j) {
            cols[j] = j;
            pred[j] = start;
            d[j] = cost(start, j) - v_[j];
        }
        long lo = 0, hi = 0, n_ready = 0, final_j = -1;
        double level = 0.0;  // distance of the columns on the scan list
        while (final_j < 0) {
            if (lo == hi) {
                n_ready = lo;
                hi = collect_minimal(lo, cols, d);
                level = d[cols[lo]];
                for (long k = lo; k < hi; ++k) {
                    if (y_[cols[k]] < 0) {
                        final_j = cols[k];
                        break;
                    }
                }
            }
            if (final_j < 0) final_j = scan(lo, hi, cols, d, pred);
        }
        for (long k = 0; k < n_ready; ++k) v_[cols[k]] += d[cols[k]] - level;
        return final_j;
    }

    // Moves the columns of minimal distance among cols[lo..) to the front.
    long collect_minimal(long lo, std::vector<long>& cols, const std::vector<double>& d) const {
        long hi = lo + 1;
        double mind = d[cols[lo]];
        for (long k = hi; k < n_; ++k) {
            const long j = cols[k];
            if (d[j] <= mind) {
                if (d[j] < mind) {
                    hi = lo;
                    mind = d[j];
                }
                cols[k] = cols[hi];
                cols[hi++] = j;
            }
        }
        return hi;
    }

    long scan(long& lo, long& hi, std::vector<long>& cols, std::vector<double>& d, std::vector<long>& pred) const {
        while (lo != hi) {
            long j = cols[lo++];
            const long i = y_[j];
            const double mind = d[j];
            const double h = cost(i, j) - v_[j] - mind;
            for (long k = hi; k < n_; ++k) {
                j = cols[k];
                const double red = cost(i, j) - v_[j] - h;
                if (red < d[j]) {
                    d[j] = red;
                    pred[j] = i;
                    if (red == mind) {
                        if (y_[j] < 0) return j;
                        cols[k] = cols[hi];
                        cols[hi++] = j;
                    }
                }
            }
        }
        return -1;
    }

    const double* c_;
    long n_;
    std::vector<long> x_, y_;
    std::vector<double> v_;
};

}  // namespace

TransportPlan solve_assignment(const CostMatrix& cost) {
    const std::size_t n = cost.rows();
    if (n == 0 || cost.cols() != n) throw std::invalid_argument("solve_assignment: cost must be square and nonempty");
    if (n > kMaxAssignmentSize) {
        throw std::invalid_argument("solve_assignment: " + std::to_string(n) + " atoms exceeds the exact-solver limit " +
                                    std::to_string(kMaxAssignmentSize) + "; use sinkhorn_wp");
    }
    TransportPlan plan;
    plan.rows = plan.cols = n;
    plan.permutation.assign(n, 0);
    if (n == 1) {
        plan.permutation[0] = 0;
    } else {
        const std::vector<long> x = DenseJV(cost.entries().data(), n).solve();
        for (std::size_t i = 0; i < n; ++i) plan.permutation[i] = static_cast<std::size_t>(x[i]);
    }
    const double mass = 1.0 / static_cast<double>(n);
    double total = 0.0;
    plan.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        total += cost(i, plan.permutation[i]);
        plan.entries.push_back({i, plan.permutation[i], mass});
    }
    plan.objective = total / static_cast<double>(n);
    return plan;
}

// ------------------------------------------------------ transportation simplex

TransportPlan solve_transport(const CostMatrix& cost, const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    if (n == 0 || m == 0) throw std::invalid_argument("solve_transport: empty cost matrix");
    if (a.size() != n || b.size() != m) throw std::invalid_argument("solve_transport: marginal size mismatch");

    struct Cell {
        std::size_t i, j;
        double x;
    };
    std::vector<Cell> basis;
    basis.reserve(n + m - 1);
    std::vector<char> is_basic(n * m, 0);

    // Northwest-corner start: exactly n + m - 1 cells, some possibly at zero flow.
    {
        std::vector<double> ra = a, rb = b;
        std::size_t i = 0, j = 0;
        while (true) {
            const double x = std::max(0.0, std::min(ra[i], rb[j]));
            basis.push_back({i, j, x});
            is_basic[i * m + j] = 1;
            ra[i] -= x;
            rb[j] -= x;
            if (i == n - 1 && j == m - 1) break;
            if (i == n - 1) {
                ++j;
            } else if (j == m - 1) {
                ++i;
            } else if (ra[i] <= rb[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    const double tol = 1e-12 * (1.0 + cost.max_entry());
    const std::size_t nodes = n + m;
    std::vector<std::vector<std::size_t>> adj(nodes);
    std::vector<double> pot(nodes);
    std::vector<char> seen(nodes);
    std::vector<std::size_t> stack, parent_edge(nodes);
    std::size_t degenerate_run = 0;
    const std::size_t max_pivots = 100 * n * m + 1000;

    for (std::size_t pivot = 0;; ++pivot) {
        if (pivot > max_pivots) throw std::runtime_error("solve_transport: pivot limit reached");
        for (auto& l : adj) l.clear();
        for (std::size_t e = 0; e < basis.size(); ++e) {
            adj[basis[e].i].push_back(e);
            adj[n + basis[e].j].push_back(e);
        }
        // Potentials u_i (nodes 0..n-1) and v_j (nodes n..), with c_ij = u_i + v_j on the tree.
        std::fill(seen.begin(), seen.end(), 0);
        pot[0] = 0.0;
        seen[0] = 1;
        stack.assign(1, 0);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t e : adj[node]) {
                const std::size_t other = node < n ? n + basis[e].j : basis[e].i;
                if (seen[other]) continue;
                seen[other] = 1;
                pot[other] = cost(basis[e].i, basis[e].j) - pot[node];
                stack.push_back(other);
            }
        }

        // Pricing: Dantzig's most negative reduced cost, or the first negative
        // one (Bland) after a long run of degenerate pivots.
        const bool bland = degenerate_run > n + m;
        std::size_t ei = n, ej = m;
        double best = -tol;
        for (std::size_t i = 0; i < n && !(bland && ei < n); ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (is_basic[i * m + j]) continue;
                const double r = cost(i, j) - pot[i] - pot[n + j];
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                    if (bland) break;
                }
            }
        }
        if (ei == n) break;

        // Tree path from column ej to row ei; the cycle alternates starting with
        // a decrease on the edge at ei.
        std::fill(seen.begin(), seen.end(), 0);
        seen[n + ej] = 1;
        stack.assign(1, n + ej);
        while (!stack.empty() && !seen[ei]) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t e : adj[node]) {
                const std::size_t other = node < n ? n + basis[e].j : basis[e].i;
                if (seen[other]) continue;
                seen[other] = 1;
                parent_edge[other] = e;
                stack.push_back(other);
            }
        }
        std::vector<std::size_t> path;
        for (std::size_t node = ei; node != n + ej;) {
            const std::size_t e = parent_edge[node];
            path.push_back(e);
            node = node < n ? n + basis[e].j : basis[e].i;
        }
        double theta = kInf;
        std::size_t leave = 0;
        for (std::size_t t = 0; t < path.size(); t += 2) {
            const std::size_t e = path[t];
            if (basis[e].x < theta || (basis[e].x == theta && e < leave)) {
                theta = basis[e].x;
                leave = e;
            }
        }
        for (std::size_t t = 0; t < path.size(); ++t) {
            double& x = basis[path[t]].x;
            x = (t % 2 == 0) ? std::max(0.0, x - theta) : x + theta;
        }
        degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
        is_basic[basis[leave].i * m + basis[leave].j] = 0;
        basis[leave] = {ei, ej, theta};
        is_basic[ei * m + ej] = 1;
    }

    std::sort(basis.begin(), basis.end(), [](const Cell& l, const Cell& r) { return l.i != r.i ? l.i < r.i : l.j < r.j; });
    TransportPlan plan;
    plan.rows = n;
    plan.cols = m;
    double total = 0.0;
    for (const auto& c : basis) {
        if (c.x <= 0.0) continue;
        plan.entries.push_back({c.i, c.j, c.x});
        total += c.x * cost(c.i, c.j);
    }
    plan.objective = total;
    return plan;
}

TransportPlan optimal_plan(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, const CostMatrix& cost) {
    if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
        throw std::invalid_argument("optimal_plan: cost shape does not match the measures");
    }
    if (mu.is_uniform() && nu.is_uniform() && mu.size() == nu.size()) return solve_assignment(cost);
    return solve_transport(cost, mu.weights(), nu.weights());
}

double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, const GroundMetric& metric) {
    if (!(p > 0.0)) throw std::invalid_argument("wasserstein_p: p must be positive");
    const CostMatrix cost = CostMatrix::from_measures(mu, nu, p, metric);
    const double c = optimal_plan(mu, nu, cost).objective;
    if (p < 1.0) return c;
    if (p == 1.0) return c;
    return p == 2.0 ? std::sqrt(c) : std::pow(c, 1.0 / p);
}

double rho_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    const CostMatrix cost = CostMatrix::from_measures(mu, nu, 1.0, GroundMetric::sup(), true);
    return std::min(1.0, optimal_plan(mu, nu, cost).objective);
}

// -------------------------------------------------------------------- Sinkhorn

SinkhornResult sinkhorn_wp(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p, double epsilon_reg,
                           int max_iter, const GroundMetric& metric, double tolerance) {
    if (!(epsilon_reg > 0.0)) throw std::invalid_argument("sinkhorn_wp: epsilon_reg must be positive");
    if (max_iter < 1) throw std::invalid_argument("sinkhorn_wp: max_iter must be >= 1");
    const CostMatrix cost = CostMatrix::from_measures(mu, nu, p, metric);
    const std::size_t n = cost.rows();
    const std::size_t m = cost.cols();
    const double scale = cost.max_entry();
    SinkhornResult res;
    if (scale == 0.0) {
        res.gap_history.push_back(0.0);
        return res;
    }
    std::vector<double> c(cost.entries());
    for (double& v : c) v /= scale;
    const std::vector<double> a = mu.weights();
    const std::vector<double> b = nu.weights();
    std::vector<double> la(n), lb(m);
    for (std::size_t i = 0; i < n; ++i) la[i] = std::log(a[i]);
    for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(b[j]);

    std::vector<double> f(n, 0.0), g(m, 0.0), work(std::max(n, m)), plan(n * m);
    std::vector<double> colmin(m), rowsum(n), colsum(m);
    double best_primal = kInf;
    double best_dual = -kInf;

    // Primal: cost of the rounded (exactly feasible) plan. Dual: the doubly
    // c-transformed potentials, a certified lower bound.
    auto evaluate = [&](double eps) {
        std::fill(rowsum.begin(), rowsum.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double v = std::exp(la[i] + lb[j] + (f[i] + g[j] - c[i * m + j]) / eps);
                plan[i * m + j] = v;
                rowsum[i] += v;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double s = rowsum[i] > a[i] ? a[i] / rowsum[i] : 1.0;
            for (std::size_t j = 0; j < m; ++j) plan[i * m + j] *= s;
        }
        std::fill(colsum.begin(), colsum.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) colsum[j] += plan[i * m + j];
        }
        for (std::size_t j = 0; j < m; ++j) colsum[j] = colsum[j] > b[j] ? b[j] / colsum[j] : 1.0;
        std::fill(rowsum.begin(), rowsum.end(), 0.0);
        std::vector<double> cs(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                double& v = plan[i * m + j];
                v *= colsum[j];
                rowsum[i] += v;
                cs[j] += v;
            }
        }
        double ea_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rowsum[i] = std::max(0.0, a[i] - rowsum[i]);
            ea_norm += rowsum[i];
        }
        for (std::size_t j = 0; j < m; ++j) cs[j] = std::max(0.0, b[j] - cs[j]);
        double primal = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                double v = plan[i * m + j];
                if (ea_norm > 0.0) v += rowsum[i] * cs[j] / ea_norm;
                primal += v * c[i * m + j];
            }
        }

        std::fill(colmin.begin(), colmin.end(), kInf);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) colmin[j] = std::min(colmin[j], c[i * m + j] - f[i]);
        }
        double dual = 0.0;
        for (std::size_t j = 0; j < m; ++j) dual += b[j] * colmin[j];
        for (std::size_t i = 0; i < n; ++i) {
            double r = kInf;
            for (std::size_t j = 0; j < m; ++j) r = std::min(r, c[i * m + j] - colmin[j]);
            dual += a[i] * r;
        }
        best_primal = std::min(best_primal, primal);
        best_dual = std::max(best_dual, dual);
        res.gap_history.push_back(std::max(0.0, best_primal - best_dual) * scale);
    };

    auto sweep = [&](double eps) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) work[j] = lb[j] + (g[j] - c[i * m + j]) / eps;
            f[i] = -eps * log_sum_exp(work.data(), m);
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) work[i] = la[i] + (f[i] - c[i * m + j]) / eps;
            g[j] = -eps * log_sum_exp(work.data(), n);
        }
    };

    auto converged = [&]() { return best_primal - best_dual <= tolerance * std::max(best_primal, epsilon_reg); };

    double eps = 1.0;
    int iter = 0;
    while (iter < max_iter) {
        const bool final_level = eps <= epsilon_reg;
        const int level_iters = final_level ? max_iter - iter : std::min(20, max_iter - iter);
        for (int k = 0; k < level_iters; ++k) {
            sweep(eps);
            ++iter;
            if (final_level || k + 1 == level_iters) {
                evaluate(eps);
                if (converged()) break;
            }
        }
        if (converged() || final_level) break;
        eps = std::max(epsilon_reg, 0.5 * eps);
    }
    res.iterations = iter;
    res.value = best_primal * scale;
    res.error_bound = std::max(0.0, best_primal - best_dual) * scale;
    if (!converged()) {
        throw std::runtime_error("sinkhorn_wp: duality gap " + std::to_string(res.error_bound) + " after " +
                                 std::to_string(iter) + " iterations; increase epsilon_reg or max_iter");
    }
    return res;
}

}  // namespace mvlab
