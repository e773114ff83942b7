#include "mvlab/transport.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mvlab;
using Catch::Approx;

namespace {

// Exhaustive minimum over permutations of the mean matched cost.
double brute_force(const CostMatrix& c) {
    std::vector<std::size_t> perm(c.rows());
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) s += c(i, perm[i]);
        best = std::min(best, s / static_cast<double>(perm.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Replicates atom i counts[i] times; exact when weights are counts / total.
EmpiricalMeasure replicate(const EmpiricalMeasure& mu, const std::vector<int>& counts) {
    std::vector<Segment> atoms;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (int k = 0; k < counts[i]; ++k) atoms.push_back(mu.atom(i));
    }
    return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure points_1d(std::initializer_list<double> xs) {
    std::vector<StateVector> pts;
    for (double x : xs) pts.push_back(StateVector{x});
    return EmpiricalMeasure::from_points(pts);
}

}  // namespace

TEST_CASE("Dirac masses are at their ground distance", "[transport]") {
    const auto a = EmpiricalMeasure::from_points({StateVector{0.0, 0.0}});
    const auto b = EmpiricalMeasure::from_points({StateVector{3.0, 4.0}});
    for (double p : {1.0, 2.0, 3.5}) REQUIRE(wasserstein_p(a, b, p, GroundMetric::euclid()) == Approx(5.0));
    REQUIRE(wasserstein_p(a, b, 2.0) == Approx(5.0));
}

TEST_CASE("two-point example picks the shorter pairing", "[transport]") {
    REQUIRE(wasserstein_p(points_1d({0.0, 2.0}), points_1d({1.0, 3.0}), 1.0) == Approx(1.0));
    REQUIRE(wasserstein_p(points_1d({0.0, 2.0}), points_1d({3.0, 1.0}), 1.0) == Approx(1.0));
}

TEST_CASE("identical measures are at distance zero", "[transport]") {
    testing::Gen g(1);
    const auto mu = g.uniform_measure(20, 3, 0.3, 0.1);
    REQUIRE(wasserstein_p(mu, mu, 2.0) == 0.0);
    REQUIRE(rho_distance(mu, mu) == 0.0);
    std::vector<int> counts;
    const auto w = g.rational_measure(6, 2, counts);
    REQUIRE(wasserstein_p(w, w, 1.0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("exponents below one return the power cost", "[transport]") {
    REQUIRE(wasserstein_p(points_1d({0.0}), points_1d({4.0}), 0.5) == Approx(2.0));
}

TEST_CASE("rho truncates the sup-norm cost at one", "[transport]") {
    const Segment xi = Segment::from_values({StateVector{0.0}, StateVector{0.0}}, 1.0, 1.0);
    const Segment eta = Segment::from_values({StateVector{0.3}, StateVector{-0.1}}, 1.0, 1.0);
    const Segment far = Segment::from_values({StateVector{7.0}, StateVector{0.0}}, 1.0, 1.0);
    REQUIRE(rho_distance(EmpiricalMeasure::dirac(xi), EmpiricalMeasure::dirac(eta)) == Approx(0.3));
    REQUIRE(rho_distance(EmpiricalMeasure::dirac(xi), EmpiricalMeasure::dirac(far)) == 1.0);
}

TEST_CASE("rho matches brute force on three-atom measures", "[transport]") {
    testing::Gen g(33);
    for (int t = 0; t < 50; ++t) {
        const auto mu = g.uniform_measure(3, 2, 0.2, 0.1, 0.8);
        const auto nu = g.uniform_measure(3, 2, 0.2, 0.1, 0.8);
        const auto c = CostMatrix::from_measures(mu, nu, 1.0, GroundMetric::sup(), true);
        REQUIRE(rho_distance(mu, nu) == Approx(brute_force(c)).epsilon(1e-12));
    }
}

TEST_CASE("assignment equals the exhaustive optimum for small sizes", "[transport][property]") {
    testing::Gen g(7);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = g.index(1, 7);
        const auto mu = g.uniform_measure(n, g.index(1, 3));
        const auto nu = g.uniform_measure(n, mu.dim());
        const double p = t % 3 == 0 ? 1.0 : (t % 3 == 1 ? 2.0 : 1.5);
        const auto c = CostMatrix::from_measures(mu, nu, p, GroundMetric::sup());
        const TransportPlan plan = solve_assignment(c);
        REQUIRE(plan.objective == Approx(brute_force(c)).epsilon(1e-12));
        std::vector<std::size_t> sorted = plan.permutation;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) REQUIRE(sorted[i] == i);
    }
}

TEST_CASE("assignment handles ties and degenerate costs deterministically", "[transport]") {
    const CostMatrix zero(4, 4, std::vector<double>(16, 0.0));
    const auto p1 = solve_assignment(zero);
    const auto p2 = solve_assignment(zero);
    REQUIRE(p1.objective == 0.0);
    REQUIRE(p1.permutation == p2.permutation);
    REQUIRE_THROWS_AS(solve_assignment(CostMatrix(2, 3, std::vector<double>(6, 1.0))), std::invalid_argument);
}

TEST_CASE("general weights agree with the atom-replication oracle", "[transport][property]") {
    testing::Gen g(12);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = g.index(1, 6);
        const std::size_t m = g.index(1, 6);
        std::vector<int> ca;
        std::vector<int> cb;
        const auto mu = g.rational_measure(n, 2, ca);
        auto nu = g.rational_measure(m, 2, cb);
        // Give both measures the same total count so the replicas have equal size.
        const int ta = std::accumulate(ca.begin(), ca.end(), 0);
        const int tb = std::accumulate(cb.begin(), cb.end(), 0);
        std::vector<int> ra = ca, rb = cb;
        for (auto& x : ra) x *= tb;
        for (auto& x : rb) x *= ta;
        const double p = t % 2 == 0 ? 1.0 : 2.0;
        const auto c = CostMatrix::from_measures(mu, nu, p, GroundMetric::euclid());
        const TransportPlan plan = solve_transport(c, mu.weights(), nu.weights());
        const auto rep_mu = replicate(mu, ra);
        const auto rep_nu = replicate(nu, rb);
        if (rep_mu.size() <= kMaxAssignmentSize) {
            const auto rc = CostMatrix::from_measures(rep_mu, rep_nu, p, GroundMetric::euclid());
            REQUIRE(plan.objective == Approx(solve_assignment(rc).objective).epsilon(1e-9).margin(1e-12));
        }
        const auto rm = plan.row_marginals();
        const auto cm = plan.col_marginals();
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(rm[i] - mu.weight(i)) <= 1e-9);
        for (std::size_t j = 0; j < m; ++j) REQUIRE(std::abs(cm[j] - nu.weight(j)) <= 1e-9);
    }
}

TEST_CASE("uneven uniform sizes route through the transportation solver", "[transport]") {
    // {0, 2} against {1}: every atom moves by 1.
    REQUIRE(wasserstein_p(points_1d({0.0, 2.0}), points_1d({1.0}), 1.0) == Approx(1.0));
    REQUIRE(wasserstein_p(points_1d({0.0, 1.0, 2.0}), points_1d({0.0, 2.0}), 1.0) == Approx(1.0 / 3.0));
}

TEST_CASE("metric axioms on random triples", "[transport][property]") {
    testing::Gen g(2025);
    for (int t = 0; t < 60; ++t) {
        const std::size_t dim = g.index(1, 3);
        const double r0 = 0.1 * static_cast<double>(g.index(0, 3));
        auto draw = [&]() {
            if (t % 2 == 0) return g.uniform_measure(g.index(2, 64), dim, r0, 0.1, g.uniform(0.2, 2.0));
            return g.uniform_measure(16, dim, r0, 0.1, g.uniform(0.2, 2.0));
        };
        const auto x = draw();
        const auto y = draw();
        const auto z = draw();
        for (double p : {1.0, 2.0}) {
            const double xy = wasserstein_p(x, y, p);
            const double yx = wasserstein_p(y, x, p);
            const double yz = wasserstein_p(y, z, p);
            const double xz = wasserstein_p(x, z, p);
            REQUIRE(std::abs(xy - yx) <= 1e-9);
            REQUIRE(xz <= xy + yz + 1e-9);
        }
        const double rxy = rho_distance(x, y);
        const double rxz = rho_distance(x, z);
        const double ryz = rho_distance(y, z);
        REQUIRE(std::abs(rxy - rho_distance(y, x)) <= 1e-9);
        REQUIRE(rxz <= rxy + ryz + 1e-9);
        REQUIRE(rxy <= 1.0);
        REQUIRE(rxy <= wasserstein_p(x, y, 1.0) + 1e-12);
    }
}

TEST_CASE("weighted product metric reduces to the sup metric on a single block", "[transport]") {
    testing::Gen g(4);
    for (int t = 0; t < 50; ++t) {
        // Atoms that agree on block 1: the weight alpha never enters.
        std::vector<StateVector> a, b;
        for (int k = 0; k < 5; ++k) {
            a.push_back(StateVector{0.0, g.normal()});
            b.push_back(StateVector{0.0, g.normal()});
        }
        const auto mu = EmpiricalMeasure::from_points(a);
        const auto nu = EmpiricalMeasure::from_points(b);
        REQUIRE(wasserstein_p(mu, nu, 2.0, GroundMetric::weighted(3.0)) ==
                Approx(wasserstein_p(mu, nu, 2.0, GroundMetric::sup())).epsilon(1e-12));
        // In general the block sum dominates the joint Euclidean sup norm.
        const auto x = g.uniform_measure(5, 4);
        const auto y = g.uniform_measure(5, 4);
        REQUIRE(wasserstein_p(x, y, 2.0, GroundMetric::weighted(1.0)) >=
                wasserstein_p(x, y, 2.0, GroundMetric::sup()) - 1e-12);
    }
    const auto x = EmpiricalMeasure::from_points({StateVector{1.0, 0.0}});
    const auto y = EmpiricalMeasure::from_points({StateVector{0.0, 2.0}});
    REQUIRE(wasserstein_p(x, y, 1.0, GroundMetric::weighted(0.5)) == Approx(0.5 + 2.0));
}

TEST_CASE("Sinkhorn bounds the exact cost", "[transport][sinkhorn]") {
    testing::Gen g(64);
    const auto mu = g.uniform_measure(64, 2);
    const auto nu = g.uniform_measure(64, 2, 0.0, 1.0, 1.5);
    const double exact = std::pow(wasserstein_p(mu, nu, 2.0), 2.0);
    const SinkhornResult r = sinkhorn_wp(mu, nu, 2.0, 1e-4, 20000, GroundMetric::sup(), 1e-2);
    REQUIRE(r.value >= exact - 1e-12);
    REQUIRE(r.value - r.error_bound <= exact + 1e-12);
    REQUIRE(std::abs(r.value - exact) <= 0.02 * exact);
    for (std::size_t k = 1; k < r.gap_history.size(); ++k) REQUIRE(r.gap_history[k] <= r.gap_history[k - 1]);
}

TEST_CASE("Sinkhorn on identical measures stays within its gap", "[transport][sinkhorn]") {
    testing::Gen g(65);
    const auto mu = g.uniform_measure(30, 2);
    const SinkhornResult r = sinkhorn_wp(mu, mu, 1.0, 1e-3, 5000);
    REQUIRE(r.value <= r.error_bound + 1e-15);
}

TEST_CASE("Sinkhorn reports non-convergence", "[transport][sinkhorn]") {
    testing::Gen g(66);
    const auto mu = g.uniform_measure(30, 2);
    const auto nu = g.uniform_measure(30, 2, 0.0, 1.0, 2.0);
    REQUIRE_THROWS_AS(sinkhorn_wp(mu, nu, 2.0, 1e-6, 2, GroundMetric::sup(), 1e-9), std::runtime_error);
    REQUIRE_THROWS_AS(sinkhorn_wp(mu, nu, 2.0, 0.0, 10), std::invalid_argument);
}

TEST_CASE("transport rejects empty or mismatched inputs", "[transport]") {
    const auto a = EmpiricalMeasure::from_points({StateVector{0.0}});
    const auto b = EmpiricalMeasure::from_points({StateVector{0.0, 1.0}});
    REQUIRE_THROWS_AS(wasserstein_p(a, b, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(wasserstein_p(a, EmpiricalMeasure{}, 1.0), std::invalid_argument);
}
