#include "mvlab/analysis.hpp"
#include "mvlab/conditions.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace mvlab;
using Catch::Approx;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Dense log grid over [1e-8, 1e8] with 1e5 points.
double grid_inf_2_4(double a1, double a2, double a3) {
    double best = 1e300;
    const int n = 100000;
    for (int k = 0; k <= n; ++k) {
        const double s = std::pow(10.0, -8.0 + 16.0 * k / n);
        const double g = 2.0 * a2 + a3 / s;
        best = std::min(best, 2.0 * a3 * s + a3 / s + 2.0 * a2 + std::sqrt(4.0 * (1.0 + a1) * (1.0 + a1) + g * g));
    }
    return best;
}

// Simpson quadrature of (sigma^2/2) int ((sqrt h)')^2 dmu for mu = N(0, s2), nu = N(m, v).
double dv_quadrature(double lambda, double sigma, double m, double v) {
    const double s2 = sigma * sigma / (2.0 * lambda);
    const double lo = std::min(-12.0 * std::sqrt(s2), m - 12.0 * std::sqrt(v));
    const double hi = std::max(12.0 * std::sqrt(s2), m + 12.0 * std::sqrt(v));
    const int n = 200000;
    const double h = (hi - lo) / n;
    auto integrand = [&](double x) {
        const double log_mu = -0.5 * x * x / s2 - 0.5 * std::log(2.0 * M_PI * s2);
        const double log_nu = -0.5 * (x - m) * (x - m) / v - 0.5 * std::log(2.0 * M_PI * v);
        const double root_h = std::exp(0.5 * (log_nu - log_mu));
        const double dlog_h = -(x - m) / v + x / s2;
        const double d_root_h = 0.5 * dlog_h * root_h;
        return d_root_h * d_root_h * std::exp(log_mu);
    };
    double acc = integrand(lo) + integrand(hi);
    for (int k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * integrand(lo + k * h);
    return 0.5 * sigma * sigma * acc * h / 3.0;
}

}  // namespace

// ------------------------------------------------------------------ H1

TEST_CASE("H1 verdict is the strict constant ordering", "[analysis][conditions]") {
    ModelSpec m = make_ou(2, 0.5, 1.0);  // kappa1 = 1, kappa2 = 0
    ConditionReport r = check_H1_constants(m, 2000);
    REQUIRE(r.verdict);
    REQUIRE(r.details.at("certified") == 1.0);
    m.params["kappa2"] = 1.0;
    r = check_H1_constants(m, 0);
    REQUIRE_FALSE(r.verdict);
    m.params.erase("kappa1");
    REQUIRE_THROWS_AS(check_H1_constants(m), std::invalid_argument);
    REQUIRE_THROWS_AS(check_H1_constants(make_linear_spectral({1.0})), std::invalid_argument);
}

TEST_CASE("H1 holds for the eps = 0 linear example", "[analysis][conditions]") {
    const ConditionReport r = check_H1_constants(make_example_2_1(3, 0.0, DriftVariant::linear));
    REQUIRE(r.lhs == 1.0);
    REQUIRE(r.rhs == 0.0);
    REQUIRE(r.verdict);
    REQUIRE(r.details.at("certified") == 1.0);
}

TEST_CASE("probing flags constants that are too optimistic", "[analysis][conditions]") {
    ModelSpec m = make_ou(1, 0.5, 1.0);
    m.params["kappa1"] = 1.5;
    const ConditionReport r = check_H1_constants(m, 500);
    REQUIRE(r.details.at("certified") == 0.0);
    REQUIRE(r.warnings.size() == 1);
}

// ------------------------------------------------------- Hamiltonian condition

TEST_CASE("Hamiltonian condition closed forms", "[analysis][conditions]") {
    ConditionReport r = check_condition_2_4(0.6, 0.0, 0.0, 0.0);
    REQUIRE(r.rhs == Approx(2.0).epsilon(1e-15));
    REQUIRE(r.verdict);
    REQUIRE_FALSE(check_condition_2_4(0.5, 0.0, 0.0, 0.0).verdict);
    r = check_condition_2_4(1.0, 1.0, 0.5, 0.0);
    REQUIRE(r.rhs == Approx(1.0 + std::sqrt(17.0)).epsilon(1e-15));
    REQUIRE_FALSE(r.optimizer.has_value());
    REQUIRE_THROWS_AS(check_condition_2_4(0.0, 1.0, 1.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(check_condition_2_4(1.0, -1.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("Hamiltonian infimum matches a dense grid", "[analysis][conditions][property]") {
    testing::Gen gen(2);
    for (int trial = 0; trial < 20; ++trial) {
        const double a1 = gen.uniform(0.0, 3.0);
        const double a2 = gen.uniform(0.0, 3.0);
        const double a3 = gen.uniform(0.01, 3.0);
        const ConditionReport r = check_condition_2_4(1.0, a1, a2, a3);
        const double grid = grid_inf_2_4(a1, a2, a3);
        INFO("a = " << a1 << ", " << a2 << ", " << a3);
        REQUIRE(rel_err(r.rhs, grid) <= 1e-6);
        REQUIRE(r.rhs <= grid + 1e-12);
        REQUIRE(conditions::hamiltonian_objective(*r.optimizer, a1, a2, a3) == Approx(r.rhs).epsilon(1e-14));
    }
}

TEST_CASE("the stochastic Hamiltonian example's verdict agrees with a golden-section oracle", "[analysis]") {
    const ConditionReport r = check_condition_2_4(2.0, 1.0, 0.5, 0.2);
    // Independent golden section on ln s over [-10, 10].
    auto f = [](double u) { return conditions::hamiltonian_objective(std::exp(u), 1.0, 0.5, 0.2); };
    double a = -10.0, b = 10.0;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int i = 0; i < 200; ++i) {
        const double c = b - g * (b - a);
        const double d = a + g * (b - a);
        if (f(c) < f(d)) {
            b = d;
        } else {
            a = c;
        }
    }
    const double oracle = f(0.5 * (a + b));
    REQUIRE(r.rhs == Approx(oracle).epsilon(1e-9));
    REQUIRE(r.verdict == (8.0 > oracle));
    REQUIRE(r.verdict);
    const auto reports = check_model(make_example_2_2(1, 2.0, 1.0, 0.5, 0.2, Matrix::identity(1)));
    REQUIRE(reports.size() == 2);
    REQUIRE(reports[1].name == "condition_2_4");
    REQUIRE(reports[1].rhs == Approx(r.rhs).epsilon(1e-12));
}

// ------------------------------------------------------------------ kappa_p

TEST_CASE("kappa_p examples", "[analysis][conditions]") {
    ConditionReport r = check_kappa_p(2.0, 0.0, 0.5, 3.0);
    REQUIRE(r.lhs == 3.0);
    REQUIRE(*r.optimizer == 3.0);
    r = check_kappa_p(2.0, 0.3, 0.0, 3.0);
    REQUIRE(r.lhs == Approx(2.7).epsilon(1e-15));
    r = check_kappa_p(2.0, 0.2, 0.5, 1.0);
    REQUIRE(r.lhs == Approx(1.0 - 0.2 * std::exp(1.0)).epsilon(1e-14));
    REQUIRE(r.lhs == Approx(0.45634).margin(5e-6));
    REQUIRE(*r.optimizer == 1.0);
    REQUIRE(r.verdict);
}

TEST_CASE("kappa_p matches a grid and its own identity", "[analysis][conditions][property]") {
    testing::Gen gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        const double p = gen.uniform(1.0, 3.0);
        const double a = gen.uniform(0.0, 2.0);
        const double r0 = gen.uniform(0.0, 2.0);
        const double l1 = gen.uniform(0.1, 5.0);
        const ConditionReport r = check_kappa_p(p, a, r0, l1);
        double grid = -1e300;
        for (int k = 0; k <= 100000; ++k) {
            const double x = l1 * k / 100000.0;
            grid = std::max(grid, x - a * std::exp(p * x * r0));
        }
        const double th = *r.optimizer;
        REQUIRE(rel_err(r.lhs, grid) <= 1e-6);
        REQUIRE(r.lhs == Approx(th - a * std::exp(p * th * r0)).epsilon(1e-15));
    }
}

// ------------------------------------------------------ delay conditions

TEST_CASE("delay profile grid minimum matches its two candidate ends", "[analysis][conditions]") {
    testing::Gen gen(4);
    for (int trial = 0; trial < 20; ++trial) {
        const double l1 = gen.uniform(0.1, 10.0);
        const double r0 = gen.uniform(0.0, 3.0);
        const GridMinimum g = delay_profile_grid_min(l1, r0);
        // s e^{-s r0} is unimodal, so the grid minimum is at one of its ends.
        const double left = l1 / 100000.0;
        const double fl = left * std::exp(-left * r0);
        const double fr = l1 * std::exp(-l1 * r0);
        const double value = std::min(fl, fr);
        REQUIRE(std::abs(g.value - value) <= 1e-8 * std::max(1.0, value));
        REQUIRE(std::abs(g.location - (fl <= fr ? left : l1)) <= 1e-8 * l1);
    }
}

TEST_CASE("K2 evaluates the infimum verbatim and warns", "[analysis][conditions]") {
    ConditionReport r = check_K2(2.0, 0.5, 0.0, 0.0, 0.0, 1.0);
    REQUIRE(r.rhs == 0.0);
    REQUIRE(r.verdict == (r.lhs > 0.0));
    REQUIRE(r.verdict);
    r = check_K2(2.0, 0.0, 0.1, 0.1, 0.5, 1.0);
    REQUIRE(r.lhs == Approx(2.0 / 100000.0).epsilon(1e-12));
    REQUIRE(*r.optimizer == Approx(2.0e-5).epsilon(1e-12));
    REQUIRE_FALSE(r.verdict);
    REQUIRE(r.warnings.size() == 1);
    REQUIRE(r.details.at("sup_variant") == 2.0);
    REQUIRE(r.details.at("sup_variant_verdict") == 1.0);
}

TEST_CASE("alpha prime closed forms and quadratic", "[analysis][conditions][property]") {
    REQUIRE(alpha_prime(3.0, 0.0, 1.0, 2.0) == Approx(1.0).epsilon(1e-15));
    REQUIRE(alpha_prime(0.0, 1.0, 0.0, 1.0) == Approx(1.0).epsilon(1e-15));
    REQUIRE_THROWS_AS(alpha_prime(1.0, 1.0, 1.0, 0.0), std::invalid_argument);
    testing::Gen gen(6);
    for (int trial = 0; trial < 200; ++trial) {
        const double delta = gen.uniform(-2.0, 2.0);
        const double K1 = gen.uniform(0.0, 3.0);
        const double K2 = gen.uniform(0.0, 3.0);
        const double B = gen.uniform(0.1, 3.0);
        const double a = alpha_prime(delta, K1, K2, B);
        REQUIRE(a >= 0.0);
        REQUIRE(std::abs(B * a * a - (delta - K2) * a - K1) <= 1e-12 * std::max(1.0, B * a * a));
    }
}

TEST_CASE("ASS condition examples", "[analysis][conditions]") {
    ConditionReport r = check_ASS(1.0, 0.5, 1.0, 1.0, 0.0);
    REQUIRE(r.details.at("alpha") == Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-15));
    REQUIRE(r.details.at("alpha") == Approx(0.618034).margin(1e-6));
    REQUIRE(r.rhs == Approx(1.0 + r.details.at("alpha")).epsilon(1e-15));
    r = check_ASS(1.0, 0.5, 2.0, 0.0, 0.0);
    REQUIRE(r.rhs == 0.0);
    REQUIRE(r.verdict == (r.lhs > 0.0));
    REQUIRE(r.lhs == check_K2(1.0, 0.5, 0.0, 0.0, 0.0, 1.0).lhs);
    REQUIRE(check_ASS(1.0, 0.5, 2.0, 0.0, 0.1).rhs == std::numeric_limits<double>::infinity());
    // A negative a1 enters through its modulus.
    REQUIRE(check_ASS(1.0, 0.5, -1.0, 1.0, 0.0).rhs == Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-15));
    REQUIRE_THROWS_AS(check_ASS(1.0, 0.5, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("spectral summability by the p-series test", "[analysis][conditions]") {
    REQUIRE(check_spectral_summability(1.0, 2.0, 0.4).verdict);
    REQUIRE_FALSE(check_spectral_summability(1.0, 2.0, 0.6).verdict);
    REQUIRE_FALSE(check_spectral_summability(1.0, 1.0, 0.5).verdict);
    REQUIRE_THROWS_AS(check_spectral_summability(1.0, 2.0, 1.0), std::invalid_argument);

    const auto sq = power_law_spectrum(200, 1.0, 2.0);
    ConditionReport r = check_spectral_summability(sq, 0.4);
    REQUIRE(r.verdict);
    REQUIRE(r.details.at("fitted_q") == Approx(2.0).epsilon(1e-10));
    // Sum of i^{-1.2} is zeta(1.2) = 5.5915...; partial sum plus tail bound must cover it.
    REQUIRE(r.lhs >= 5.5915);
    REQUIRE(r.lhs <= 5.5916 + 0.1);
    REQUIRE_FALSE(check_spectral_summability(sq, 0.6).verdict);
    REQUIRE_THROWS_AS(check_spectral_summability(std::vector<double>{1.0, -1.0}, 0.5), std::invalid_argument);
}

TEST_CASE("check_model picks the checks of each hypothesis family", "[analysis]") {
    REQUIRE(check_model(make_example_2_1(2, 0.1, DriftVariant::linear)).size() == 1);
    const auto h3 = check_model(make_example_2_3(4, 1.0, 1, M_PI, 0.1, 0.1, 0.5, {{-0.5, 1.0}}));
    REQUIRE(h3[0].name == "kappa_p");
    REQUIRE(h3[1].name == "spectral_summability");
    const auto h4 = check_model(make_example_2_4(3, 1.0, 0.1, 0.05, power_law_spectrum(3, 1.0, 2.0), 0.5));
    REQUIRE(h4[0].name == "K2");
    REQUIRE(h4[1].name == "ASS");
    const auto h2 = check_model(make_linear_spectral(power_law_spectrum(8, 1.0, 2.0)));
    REQUIRE(h2[0].verdict);
}

TEST_CASE("reports serialize to JSON, CSV and a table", "[analysis]") {
    std::vector<ConditionReport> reports{check_condition_2_4(2.0, 1.0, 0.5, 0.2), check_K2(1.0, 0.0, 0, 0, 0, 1)};
    reports.push_back(check_spectral_summability(std::vector<double>{1.0}, 0.5));
    std::ostringstream js;
    write_reports_json(js, reports, {RateFit{0.5, 1.0, 0.99, 0.5, 4.0, 10}});
    const auto doc = nlohmann::json::parse(js.str());
    REQUIRE(doc["reports"].size() == 3);
    REQUIRE(doc["reports"][0]["name"] == "condition_2_4");
    REQUIRE(doc["reports"][0]["verdict"] == true);
    REQUIRE(doc["reports"][2]["rhs"].is_null());
    REQUIRE(doc["rate_fits"][0]["rate"] == 0.5);
    std::ostringstream cs;
    write_reports_csv(cs, reports);
    REQUIRE(cs.str().rfind("name,lhs,rhs,verdict,optimizer\ncondition_2_4,", 0) == 0);
    std::ostringstream tb;
    write_reports_table(tb, reports);
    REQUIRE(tb.str().find("warning:") != std::string::npos);
}

// ----------------------------------------------------------------- rates

TEST_CASE("rate fits on synthetic exponentials", "[analysis][rates]") {
    std::vector<double> t, w, w3;
    for (int k = 0; k <= 40; ++k) {
        t.push_back(0.1 * k);
        w.push_back(std::exp(-0.5 * t.back()));
        w3.push_back(3.0 * std::exp(-1.2 * t.back()));
    }
    RateFit f = fit_contraction_rate(t, w, 0.0, 4.0);
    REQUIRE(std::abs(f.rate - 0.5) <= 1e-9);
    REQUIRE(f.r_squared == Approx(1.0).epsilon(1e-12));
    REQUIRE(f.points == 41);
    f = fit_contraction_rate(t, w3, 0.5, 4.0);
    REQUIRE(std::abs(f.rate - 1.2) <= 1e-9);
    REQUIRE(std::abs(f.intercept - std::log(3.0)) <= 1e-9);
    REQUIRE(f.points == 36);

    std::mt19937_64 eng(2024);
    std::normal_distribution<double> z(0.0, 0.1);
    std::vector<double> tn, wn;
    for (int k = 0; k < 50; ++k) {
        tn.push_back(0.1 * k);
        wn.push_back(std::exp(-0.8 * tn.back() + z(eng)));
    }
    REQUIRE(fit_contraction_rate(tn, wn, 0.0, 5.0).rate == Approx(0.8).epsilon(0.1));

    w[3] = 0.0;
    REQUIRE_THROWS_AS(fit_contraction_rate(t, w, 0.0, 4.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_contraction_rate(t, w3, 10.0, 20.0), std::invalid_argument);
}

TEST_CASE("contraction experiment recovers the OU rate", "[analysis][rates]") {
    ContractionConfig cfg;
    cfg.N = 200;
    cfg.seed = 3;
    const ContractionResult res = run_contraction_experiment(make_example_2_1(2, 0.0, DriftVariant::linear), cfg);
    REQUIRE(res.t.size() == 41);
    REQUIRE(res.distance.front() > 5.0);
    INFO("fitted rate " << res.fit.rate);
    REQUIRE(res.fit.rate == Approx(0.5).epsilon(0.05));
}

// -------------------------------------------------------------- comparison

TEST_CASE("comparison experiment vanishes without law dependence", "[analysis][comparison]") {
    ComparisonConfig cfg;
    cfg.N = 40;
    cfg.T = 4.0;
    cfg.report_interval = 1.0;
    cfg.invariant.N = 40;
    cfg.invariant.T_sample = 1.0;
    const ComparisonResult res = run_comparison_experiment(make_ou(2, 1.0, 1.0), cfg);
    REQUIRE(res.t.size() == 4);
    for (std::size_t k = 0; k < res.t.size(); ++k) {
        REQUIRE(res.rho[k] == 0.0);
        REQUIRE(res.integral[k] == 0.0);
    }
}

TEST_CASE("comparison rho is dominated by the running coupling integral", "[analysis][comparison]") {
    ComparisonConfig cfg;
    cfg.N = 200;
    cfg.T = 20.0;
    cfg.report_interval = 5.0;
    cfg.invariant.N = 200;
    const ComparisonResult res = run_comparison_experiment(make_example_2_1(2, 0.05, DriftVariant::linear), cfg);
    REQUIRE(res.t.size() == 4);
    REQUIRE(res.worst_bound_gap <= 1e-12);
    for (std::size_t k = 0; k < res.t.size(); ++k) {
        REQUIRE(res.rho[k] <= res.integral[k] / res.t[k] + 1e-12);
        if (k > 0) REQUIRE(res.integral[k] >= res.integral[k - 1]);
    }
    REQUIRE(res.integral.back() > 0.0);
}

// ---------------------------------------------------------------- DV rate

TEST_CASE("DV rate closed form", "[analysis][dv]") {
    const double sig = std::sqrt(2.0);
    REQUIRE(dv_rate_gaussian_ou(1.0, sig, 0.0, sig * sig / 2.0) == 0.0);
    REQUIRE(dv_rate_gaussian_ou(1.0, sig, 0.0, 1.0) == Approx(0.0).margin(1e-15));
    REQUIRE(dv_rate_gaussian_ou(1.0, std::sqrt(2.0), 1.0, 1.0) == Approx(0.25).epsilon(1e-14));
    REQUIRE(dv_rate_gaussian_ou(1.0, std::sqrt(2.0), 0.0, 2.0) == Approx(0.125).epsilon(1e-14));
    REQUIRE(dv_rate_gaussian_ou(2.0, 3.0, 0.0, 9.0 / 4.0) == 0.0);
    REQUIRE_THROWS_AS(dv_rate_gaussian_ou(1.0, 1.0, 0.0, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(dv_rate_gaussian_ou(0.0, 1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("DV rate matches quadrature of the Dirichlet form", "[analysis][dv][property]") {
    for (double m : {-1.0, -0.3, 0.0, 0.5, 1.5}) {
        for (double v : {0.3, 0.7, 1.0, 1.6, 2.5}) {
            const double J = dv_rate_gaussian_ou(1.3, 0.9, m, v);
            INFO("m = " << m << " v = " << v);
            REQUIRE(J >= 0.0);
            REQUIRE(std::abs(J - dv_quadrature(1.3, 0.9, m, v)) <= 1e-8);
        }
    }
}

// ---------------------------------------------------------------- hitting

TEST_CASE("hitting moments: trivial cases", "[analysis][hitting]") {
    const ReferenceModel ref = freeze_reference(make_ou(1, 1.0, 1.0), EmpiricalMeasure::from_points({StateVector{0.0}}));
    HittingConfig cfg;
    cfg.n_samples = 50;
    cfg.starts = {StateVector{0.5}};
    HittingEstimate h = hitting_moment(ref, cfg);
    REQUIRE(h.estimate == 1.0);
    REQUIRE(h.censored_fraction == 0.0);

    const ReferenceModel strong =
        freeze_reference(make_ou(1, 50.0, 0.1), EmpiricalMeasure::from_points({StateVector{0.0}}));
    cfg.K_radius = 10.0;
    cfg.starts = {StateVector{12.0}};
    h = hitting_moment(strong, cfg);
    REQUIRE(h.estimate == Approx(1.0).margin(0.01));
    REQUIRE(h.censored_fraction == 0.0);

    cfg.T_cap = 0.05;
    cfg.K_radius = 0.1;
    cfg.starts = {StateVector{50.0}};
    h = hitting_moment(ref, cfg);
    REQUIRE(h.censored_fraction == 1.0);
    REQUIRE(h.estimate == Approx(std::exp(0.1 * 0.05)));
}

TEST_CASE("OU hitting moment agrees with a fine-step oracle", "[analysis][hitting]") {
    const ReferenceModel ref = freeze_reference(make_ou(1, 1.0, 1.0), EmpiricalMeasure::from_points({StateVector{0.0}}));
    HittingConfig cfg;
    cfg.K_radius = 1.0;
    cfg.lambda_exp = 0.1;
    cfg.n_samples = 4000;
    cfg.starts = {StateVector{3.0}};
    cfg.seed = 5;
    const HittingEstimate h = hitting_moment(ref, cfg);

    std::mt19937_64 eng(99);
    std::normal_distribution<double> z(0.0, 1.0);
    const double dt = 1e-3;
    const double sq = std::sqrt(dt);
    double acc = 0.0;
    const int paths = 4000;
    for (int p = 0; p < paths; ++p) {
        double x = 3.0, t = 0.0;
        while (std::abs(x) > 1.0 && t < 50.0) {
            x += -x * dt + sq * z(eng);
            t += dt;
        }
        acc += std::exp(0.1 * t);
    }
    const double oracle = acc / paths;
    INFO("estimate " << h.estimate << " oracle " << oracle);
    REQUIRE(h.censored_fraction == 0.0);
    REQUIRE(h.estimate == Approx(oracle).epsilon(0.10));
}
