#include "mvlab/analysis.hpp"

#include "mvlab/conditions.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/search.hpp"
#include "mvlab/transport.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mvlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConditionReport make_report(std::string name, double lhs, double rhs) {
    ConditionReport r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.verdict = lhs > rhs;
    return r;
}

void require_nonnegative(const char* what, double v) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + " must be nonnegative");
}

// b(x, mu) - Lambda x: the drift the monotonicity inequality speaks about.
StateVector full_drift(const ModelSpec& m, const Segment& seg, const EmpiricalMeasure& mu) {
    StateVector b = m.drift_at(seg, mu);
    const auto x = seg.current();
    if (m.has_linear_operator()) {
        for (std::size_t i = 0; i < m.dim; ++i) b[i] -= m.linear_rates[i] * x[i];
    }
    return b;
}

// Exact W2 between two uniform two-atom measures of points.
double w2_two_atoms(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    auto d2 = [&](std::size_t i, std::size_t j) {
        const double d = euclidean_distance(mu.atom(i).current(), nu.atom(j).current());
        return d * d;
    };
    return std::sqrt(0.5 * std::min(d2(0, 0) + d2(1, 1), d2(0, 1) + d2(1, 0)));
}

}  // namespace

// ------------------------------------------------------------- checkers

ConditionReport check_H1_constants(const ModelSpec& model, std::size_t n_probes, std::uint64_t seed) {
    if (model.hypothesis != Hypothesis::H1) {
        throw std::invalid_argument(model.name + ": H1 check on a model tagged " + to_string(model.hypothesis));
    }
    const auto k1 = model.find_param("kappa1");
    const auto k2 = model.find_param("kappa2");
    if (!k1 || !k2) throw std::invalid_argument(model.name + ": missing constants kappa1/kappa2");
    if (model.r0 != 0.0) throw std::invalid_argument(model.name + ": H1 models have no delay");
    ConditionReport r = make_report("H1", *k1, *k2);
    r.verdict = *k1 > *k2 && *k2 >= 0.0;
    r.details = {{"kappa1", *k1}, {"kappa2", *k2}};

    std::mt19937_64 eng(seed);
    std::normal_distribution<double> z(0.0, 2.0);
    auto point = [&] {
        StateVector v(model.dim);
        for (std::size_t i = 0; i < model.dim; ++i) v[i] = z(eng);
        return v;
    };
    double worst = -kInf;
    for (std::size_t t = 0; t < n_probes; ++t) {
        const Segment x = Segment::point(point());
        const Segment y = Segment::point(point());
        const auto mu = EmpiricalMeasure::from_points({point(), point()});
        const auto nu = EmpiricalMeasure::from_points({point(), point()});
        const StateVector bx = full_drift(model, x, mu);
        const StateVector by = full_drift(model, y, nu);
        double inner = 0.0;
        for (std::size_t i = 0; i < model.dim; ++i) inner += (bx[i] - by[i]) * (x.current()[i] - y.current()[i]);
        const double lhs = 2.0 * inner + hs_distance_squared(model.diffusion_at(mu), model.diffusion_at(nu));
        const double dx = euclidean_distance(x.current(), y.current());
        const double w = w2_two_atoms(mu, nu);
        const double rhs = -*k1 * dx * dx + *k2 * w * w;
        worst = std::max(worst, (lhs - rhs) / (1.0 + dx * dx + w * w));
    }
    r.details["probes"] = static_cast<double>(n_probes);
    r.details["max_violation"] = n_probes ? worst : 0.0;
    const bool certified = n_probes == 0 || worst <= 1e-12;
    r.details["certified"] = certified ? 1.0 : 0.0;
    if (!certified) r.warnings.push_back("random probes violate the stored constants");
    return r;
}

ConditionReport check_condition_2_4(double lambda, double a1, double a2, double a3) {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
    require_nonnegative("a1", a1);
    require_nonnegative("a2", a2);
    require_nonnegative("a3", a3);
    ConditionReport r;
    if (a3 == 0.0) {
        // The s-dependence drops out.
        r = make_report("condition_2_4", 4.0 * lambda,
                        2.0 * a2 + std::sqrt(4.0 * (1.0 + a1) * (1.0 + a1) + 4.0 * a2 * a2));
    } else {
        const auto f = [&](double s) { return conditions::hamiltonian_objective(s, a1, a2, a3); };
        const ScalarOptimum opt = two_stage_minimize(f, 1e-8, 1e8, true);
        r = make_report("condition_2_4", 4.0 * lambda, opt.value);
        r.optimizer = opt.location;
    }
    r.details = {{"lambda", lambda}, {"a1", a1}, {"a2", a2}, {"a3", a3}};
    return r;
}

ConditionReport check_kappa_p(double p, double a1_plus_a2, double r0, double lambda1) {
    const conditions::KappaP k = conditions::kappa_p(p, a1_plus_a2, r0, lambda1);
    ConditionReport r = make_report("kappa_p", k.kappa, 0.0);
    r.optimizer = k.theta;
    r.details = {{"p", p}, {"a1_plus_a2", a1_plus_a2}, {"r0", r0}, {"lambda1", lambda1}, {"theta_star", k.theta}};
    return r;
}

GridMinimum delay_profile_grid_min(double lambda1, double r0, std::size_t n_grid) {
    if (!(lambda1 > 0.0)) throw std::invalid_argument("lambda1 must be positive");
    require_nonnegative("r0", r0);
    if (n_grid == 0) throw std::invalid_argument("grid must have at least one point");
    GridMinimum g{kInf, 0.0, false};
    std::size_t best = 0;
    for (std::size_t k = 1; k <= n_grid; ++k) {
        const double s = lambda1 * static_cast<double>(k) / static_cast<double>(n_grid);
        const double v = conditions::delay_rate_profile(s, r0);
        if (v < g.value) {
            g.value = v;
            g.location = s;
            best = k;
        }
    }
    g.at_left_end = best == 1;
    return g;
}

namespace {

void attach_delay_profile(ConditionReport& r, double lambda1, double r0) {
    const GridMinimum g = delay_profile_grid_min(lambda1, r0);
    r.lhs = g.value;
    r.optimizer = g.location;
    r.verdict = r.lhs > r.rhs;
    double argmax = 0.0;
    const double sup = conditions::delay_rate_profile_sup(lambda1, r0, &argmax);
    r.details["sup_variant"] = sup;
    r.details["sup_variant_location"] = argmax;
    r.details["sup_variant_verdict"] = sup > r.rhs ? 1.0 : 0.0;
    if (g.at_left_end) {
        r.warnings.push_back("the infimum over (0, lambda1] is approached as s -> 0; the grid minimum " +
                             format_number(g.value) + " at s = " + format_number(g.location) +
                             " is the left grid end, see sup_variant");
    }
}

}  // namespace

ConditionReport check_K2(double lambda1, double r0, double K2, double K3, double alpha_prime_value, double normB) {
    require_nonnegative("K2", K2);
    require_nonnegative("K3", K3);
    require_nonnegative("alpha_prime", alpha_prime_value);
    require_nonnegative("normB", normB);
    ConditionReport r = make_report("K2", 0.0, K2 + alpha_prime_value * normB + K3);
    r.details = {{"lambda1", lambda1}, {"r0", r0},    {"K2", K2},
                 {"K3", K3},           {"alpha_prime", alpha_prime_value}, {"normB", normB}};
    attach_delay_profile(r, lambda1, r0);
    return r;
}

double alpha_prime(double delta, double K1, double K2, double normB) {
    if (normB == 0.0) throw std::invalid_argument("alpha_prime: normB must be nonzero");
    return conditions::alpha_prime(delta, K1, K2, normB);
}

ConditionReport check_ASS(double lambda1, double r0, double a1, double a2, double a3) {
    if (a1 == 0.0) throw std::invalid_argument("check_ASS: a1 must be nonzero");
    require_nonnegative("a2", a2);
    require_nonnegative("a3", a3);
    const double alpha = conditions::paired_block_weight(a1, a2);
    double measure_term = 0.0;
    if (a3 != 0.0) measure_term = alpha > 0.0 ? a3 / std::min(1.0, alpha) : kInf;
    ConditionReport r = make_report("ASS", 0.0, a2 + std::abs(a1) * alpha + measure_term);
    r.details = {{"lambda1", lambda1}, {"r0", r0}, {"a1", a1}, {"a2", a2}, {"a3", a3}, {"alpha", alpha}};
    attach_delay_profile(r, lambda1, r0);
    return r;
}

ConditionReport check_spectral_summability(double c, double q, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(c > 0.0)) throw std::invalid_argument("spectrum scale must be positive");
    if (!(q > 0.0)) throw std::invalid_argument("spectrum exponent must be positive");
    ConditionReport r = make_report("spectral_summability", q * (1.0 - gamma), 1.0);
    r.details = {{"c", c}, {"q", q}, {"gamma", gamma}};
    return r;
}

ConditionReport check_spectral_summability(const std::vector<double>& spectrum, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (spectrum.empty()) throw std::invalid_argument("empty spectrum");
    double partial = 0.0;
    for (double l : spectrum) {
        if (!(l > 0.0)) throw std::invalid_argument("spectrum must be positive");
        partial += std::pow(l, gamma - 1.0);
    }
    const std::size_t n = spectrum.size();
    double tail = kInf;
    ConditionReport r;
    r.details["partial_sum"] = partial;
    if (n >= 2) {
        // Least squares of ln(lambda_i) on ln(i) over the upper half.
        const std::size_t from = n / 2;
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        const auto m = static_cast<double>(n - from);
        for (std::size_t i = from; i < n; ++i) {
            const double x = std::log(static_cast<double>(i + 1));
            const double y = std::log(spectrum[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double den = m * sxx - sx * sx;
        const double q = den > 0.0 ? (m * sxy - sx * sy) / den : 0.0;
        const double c = std::exp((sy - q * sx) / m);
        const double e = q * (1.0 - gamma);
        if (e > 1.0) tail = std::pow(c, gamma - 1.0) * std::pow(static_cast<double>(n), 1.0 - e) / (e - 1.0);
        r.details["fitted_c"] = c;
        r.details["fitted_q"] = q;
    } else {
        r.warnings.push_back("a single eigenvalue admits no tail extrapolation");
    }
    r.name = "spectral_summability";
    r.lhs = partial + tail;
    r.rhs = kInf;
    r.verdict = std::isfinite(r.lhs);
    r.details["tail_bound"] = tail;
    r.details["gamma"] = gamma;
    return r;
}

std::vector<ConditionReport> check_model(const ModelSpec& model) {
    std::vector<ConditionReport> out;
    const auto& P = model;
    switch (model.hypothesis) {
        case Hypothesis::H1:
            out.push_back(check_H1_constants(model));
            if (P.has_param("lambda") && P.has_param("a1") && P.has_param("a2") && P.has_param("a3")) {
                out.push_back(check_condition_2_4(P.param("lambda"), P.param("a1"), P.param("a2"), P.param("a3")));
            }
            break;
        case Hypothesis::H2: {
            const double kappa = P.param("lambda1") - (P.param("alpha1") + P.param("alpha2"));
            ConditionReport r = make_report("H2_contraction", kappa, 0.0);
            r.details = {{"lambda1", P.param("lambda1")}, {"alpha1", P.param("alpha1")}, {"alpha2", P.param("alpha2")}};
            out.push_back(r);
            out.push_back(check_spectral_summability(model.spectrum, P.find_param("gamma").value_or(0.5)));
            break;
        }
        case Hypothesis::H3:
            out.push_back(check_kappa_p(P.param("p"), P.param("alpha1") + P.param("alpha2"), P.param("r0"),
                                        P.param("lambda1")));
            out.push_back(check_spectral_summability(model.spectrum, P.find_param("gamma").value_or(0.5)));
            break;
        case Hypothesis::H4: {
            const double normB = P.param("normB");
            const double ap = alpha_prime(P.param("delta"), P.param("K1"), P.param("K2"), normB);
            out.push_back(check_K2(P.param("lambda1"), P.param("r0"), P.param("K2"), P.param("K3"), ap, normB));
            out.push_back(check_ASS(P.param("lambda1"), P.param("r0"), P.param("alpha1"), P.param("alpha2"),
                                    P.param("alpha3")));
            break;
        }
    }
    return out;
}

// --------------------------------------------------------------- reports

namespace {

nlohmann::ordered_json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return format_number(v);
}

}  // namespace

void write_reports_json(std::ostream& os, const std::vector<ConditionReport>& reports,
                        const std::vector<RateFit>& fits) {
    nlohmann::ordered_json doc;
    doc["reports"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json j;
        j["name"] = r.name;
        j["lhs"] = number(r.lhs);
        j["rhs"] = number(r.rhs);
        j["verdict"] = r.verdict;
        j["optimizer"] = r.optimizer ? number(*r.optimizer) : nlohmann::ordered_json(nullptr);
        nlohmann::ordered_json d = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.details) d[k] = number(v);
        j["details"] = d;
        j["warnings"] = r.warnings;
        doc["reports"].push_back(j);
    }
    doc["rate_fits"] = nlohmann::ordered_json::array();
    for (const auto& f : fits) {
        doc["rate_fits"].push_back({{"rate", number(f.rate)},
                                    {"intercept", number(f.intercept)},
                                    {"r_squared", number(f.r_squared)},
                                    {"t_lo", f.t_lo},
                                    {"t_hi", f.t_hi},
                                    {"points", f.points}});
    }
    os << doc.dump(2) << '\n';
}

void write_reports_csv(std::ostream& os, const std::vector<ConditionReport>& reports) {
    os << "name,lhs,rhs,verdict,optimizer\n";
    for (const auto& r : reports) {
        os << r.name << ',' << csv_number(r.lhs) << ',' << csv_number(r.rhs) << ',' << (r.verdict ? "true" : "false")
           << ',' << (r.optimizer ? csv_number(*r.optimizer) : std::string()) << '\n';
    }
}

void write_reports_table(std::ostream& os, const std::vector<ConditionReport>& reports) {
    os << std::left << std::setw(24) << "condition" << std::right << std::setw(16) << "lhs" << std::setw(16) << "rhs"
       << std::setw(10) << "verdict" << std::setw(16) << "optimizer" << '\n';
    for (const auto& r : reports) {
        os << std::left << std::setw(24) << r.name << std::right << std::setprecision(8) << std::setw(16) << r.lhs
           << std::setw(16) << r.rhs << std::setw(10) << (r.verdict ? "true" : "false") << std::setw(16);
        if (r.optimizer) {
            os << *r.optimizer;
        } else {
            os << "-";
        }
        os << '\n';
        for (const auto& w : r.warnings) os << "  warning: " << w << '\n';
    }
}

void write_rate_fit_csv(std::ostream& os, const RateFit& fit) {
    os << "rate,intercept,r_squared,t_lo,t_hi,points\n"
       << format_number(fit.rate) << ',' << format_number(fit.intercept) << ',' << format_number(fit.r_squared) << ','
       << format_number(fit.t_lo) << ',' << format_number(fit.t_hi) << ',' << fit.points << '\n';
}

// ------------------------------------------------------------- estimators

RateFit fit_contraction_rate(const std::vector<double>& t, const std::vector<double>& w, double t_lo, double t_hi) {
    if (t.size() != w.size()) throw std::invalid_argument("fit_contraction_rate: series lengths differ");
    const double slack = 1e-9 * std::max(1.0, std::abs(t_hi));
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_lo - slack || t[k] > t_hi + slack) continue;
        if (!(w[k] > 0.0)) {
            throw std::invalid_argument("fit_contraction_rate: nonpositive value " + format_number(w[k]) +
                                        " at t = " + format_number(t[k]));
        }
        xs.push_back(t[k]);
        ys.push_back(std::log(w[k]));
    }
    if (xs.size() < 2) throw std::invalid_argument("fit_contraction_rate: fewer than two points in the window");
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("fit_contraction_rate: window holds a single time");
    const double slope = sxy / sxx;
    RateFit f;
    f.rate = -slope;
    f.intercept = my - slope * mx;
    f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    f.t_lo = t_lo;
    f.t_hi = t_hi;
    f.points = xs.size();
    return f;
}

ContractionResult run_contraction_experiment(const ModelSpec& model, const ContractionConfig& cfg) {
    ContractionResult res;
    if (!model.has_param("contraction_rate")) res.warnings.push_back(model.name + ": no advertised contraction rate");
    EnsembleConfig ens;
    ens.N = cfg.N;
    ens.T = cfg.T;
    ens.scheme = cfg.scheme;
    ens.seed = cfg.seed;
    ens.checkpoint_stride = cfg.checkpoint_stride;
    const InitSampler at_zero = constant_init(Segment(StateVector(model.dim), model.r0, cfg.scheme.dt));
    const InitSampler shifted = gaussian_init(StateVector(model.dim, cfg.offset), 1.0, model.r0, cfg.scheme.dt);
    const EnsembleRun a = simulate_mckean_vlasov(model, at_zero, ens);
    const EnsembleRun b = simulate_mckean_vlasov(model, shifted, ens);
    res.t = a.flow.times;
    res.distance.resize(res.t.size());
    for (std::size_t k = 0; k < res.t.size(); ++k) {
        res.distance[k] = wasserstein_p(a.flow.measures[k], b.flow.measures[k], cfg.p);
    }
    res.fit = fit_contraction_rate(res.t, res.distance, cfg.t_lo, cfg.t_hi);
    return res;
}

ComparisonResult run_comparison_experiment(const ModelSpec& model, const ComparisonConfig& cfg) {
    ComparisonResult res;
    if (cfg.n_tracked == 0 || cfg.n_tracked > cfg.N) throw std::invalid_argument("comparison: bad tracked count");
    if (cfg.snapshot_stride == 0) throw std::invalid_argument("comparison: snapshot_stride must be >= 1");
    const double dt = cfg.scheme.dt;
    const std::size_t n_steps = step_count(cfg.T, dt);
    const std::size_t report_steps = step_count(cfg.report_interval, dt);
    if (report_steps % cfg.snapshot_stride != 0) {
        throw std::invalid_argument("comparison: report interval must be a multiple of the snapshot spacing");
    }

    const auto rate = model.find_param("contraction_rate");
    if (!rate || !(*rate > 0.0)) res.warnings.push_back(model.name + ": contraction condition not established");

    InvariantConfig inv = cfg.invariant;
    inv.scheme = cfg.scheme;
    inv.antithetic = inv.antithetic || cfg.antithetic;
    InvariantEstimate est = estimate_invariant(model, inv);
    for (auto& w : est.warnings) res.warnings.push_back(std::move(w));
    res.mu_bar = std::move(est.measure);
    const ReferenceModel ref = freeze_reference(model, res.mu_bar);
    const Stepper ref_step(ref.model, cfg.scheme);
    const LawFeatures fbar = ref.model.law_features(ref.frozen_measure);
    const Matrix sigma_bar = ref.model.diffusion(fbar);

    EnsembleConfig ens;
    ens.N = cfg.N;
    ens.T = cfg.T;
    ens.scheme = cfg.scheme;
    ens.seed = cfg.seed;
    ens.antithetic = cfg.antithetic;
    ens.record_flow = false;

    std::vector<std::size_t> idx(cfg.n_tracked);
    for (std::size_t k = 0; k < cfg.n_tracked; ++k) idx[k] = k * (cfg.N / cfg.n_tracked);
    std::vector<Segment> xbar;
    std::vector<std::vector<Segment>> snap_x(cfg.n_tracked), snap_bar(cfg.n_tracked);
    std::vector<double> integral(cfg.n_tracked, 0.0);
    const double snap_dt = static_cast<double>(cfg.snapshot_stride) * dt;
    StepScratch scratch;
    std::vector<double> dW(model.noise_dim);
    StateVector next(model.dim);

    const auto observer = [&](std::size_t s, double t, const EmpiricalMeasure& mu) {
        if (s == 0) {
            for (std::size_t i : idx) xbar.push_back(mu.atom(i));
        } else {
            for (std::size_t k = 0; k < idx.size(); ++k) {
                particle_stream(ens, idx[k]).increment(s - 1, dW);
                ref_step.advance(xbar[k].current(), xbar[k], fbar, sigma_bar, dW, next.span(), scratch);
                xbar[k].push(next.span());
            }
        }
        if (s > 0 && s % report_steps == 0) {
            double rho_sum = 0.0, int_sum = 0.0;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const double rho = rho_distance(EmpiricalMeasure(snap_x[k]), EmpiricalMeasure(snap_bar[k]));
                rho_sum += rho;
                int_sum += integral[k];
                res.worst_bound_gap = std::max(res.worst_bound_gap, rho - integral[k] / t);
            }
            res.t.push_back(t);
            res.rho.push_back(rho_sum / static_cast<double>(idx.size()));
            res.integral.push_back(int_sum / static_cast<double>(idx.size()));
        }
        if (s % cfg.snapshot_stride == 0 && s < n_steps) {
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const Segment& x = mu.atom(idx[k]);
                snap_x[k].push_back(x);
                snap_bar[k].push_back(xbar[k]);
                integral[k] += std::min(sup_distance(x, xbar[k]), 1.0) * snap_dt;
            }
        }
    };
    res.worst_bound_gap = -kInf;
    const Segment start(StateVector(model.dim, cfg.offset), model.r0, dt);
    (void)simulate_mckean_vlasov(model, constant_init(start), ens, observer);
    return res;
}

double dv_rate_gaussian_ou(double lambda_ref, double sigma_ref, double m, double v) {
    if (!(lambda_ref > 0.0)) throw std::invalid_argument("dv_rate: lambda must be positive");
    if (!(sigma_ref > 0.0)) throw std::invalid_argument("dv_rate: sigma must be positive");
    if (!(v > 0.0)) throw std::invalid_argument("dv_rate: variance must be positive");
    const double s2 = sigma_ref * sigma_ref / (2.0 * lambda_ref);
    const double g = (v - s2) / (s2 * v);
    return sigma_ref * sigma_ref / 8.0 * (m * m / (s2 * s2) + g * g * v);
}

HittingEstimate hitting_moment(const ReferenceModel& ref, const HittingConfig& cfg) {
    if (!(cfg.K_radius > 0.0)) throw std::invalid_argument("hitting_moment: K_radius must be positive");
    if (!(cfg.lambda_exp > 0.0)) throw std::invalid_argument("hitting_moment: lambda_exp must be positive");
    if (!(cfg.T_cap > 0.0)) throw std::invalid_argument("hitting_moment: T_cap must be positive");
    if (cfg.starts.empty()) throw std::invalid_argument("hitting_moment: no starting points");
    if (cfg.n_samples == 0) throw std::invalid_argument("hitting_moment: n_samples must be >= 1");
    const ModelSpec& model = ref.model;
    const Stepper stepper(model, cfg.scheme);
    const LawFeatures f = model.law_features(ref.frozen_measure);
    const Matrix sigma = model.diffusion(f);
    const double dt = cfg.scheme.dt;
    const auto max_steps = static_cast<std::size_t>(std::floor(cfg.T_cap / dt + 1e-9));
    for (const auto& s : cfg.starts) {
        if (s.dim() != model.dim) throw std::invalid_argument("hitting_moment: start dimension mismatch");
    }

    std::vector<double> tau(cfg.n_samples);
    std::vector<char> censored(cfg.n_samples, 0);
    parallel_for(0, cfg.n_samples, [&](std::size_t i) {
        const NoiseStream stream(cfg.seed, i, dt);
        Segment seg(cfg.starts[i % cfg.starts.size()], model.r0, dt);
        StepScratch scratch;
        std::vector<double> dW(model.noise_dim);
        StateVector next(model.dim);
        std::size_t k = 0;
        while (euclidean_norm(seg.current()) > cfg.K_radius) {
            if (k == max_steps) {
                censored[i] = 1;
                break;
            }
            stream.increment(k, dW);
            stepper.advance(seg.current(), seg, f, sigma, dW, next.span(), scratch);
            seg.push(next.span());
            ++k;
        }
        tau[i] = censored[i] ? cfg.T_cap : static_cast<double>(k) * dt;
    });

    HittingEstimate est;
    double sum = 0.0, sum2 = 0.0, tsum = 0.0;
    std::size_t n_cens = 0;
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const double e = std::exp(cfg.lambda_exp * tau[i]);
        sum += e;
        sum2 += e * e;
        tsum += tau[i];
        n_cens += censored[i] ? 1 : 0;
    }
    const auto n = static_cast<double>(cfg.n_samples);
    est.estimate = sum / n;
    est.mean_tau = tsum / n;
    est.censored_fraction = static_cast<double>(n_cens) / n;
    const double var = n > 1 ? std::max(0.0, (sum2 - sum * sum / n) / (n - 1.0)) : 0.0;
    est.standard_error = std::sqrt(var / n);
    return est;
}

}  // namespace mvlab
