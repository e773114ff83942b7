#include "mvlab/runner.hpp"

#include "mvlab/analysis.hpp"
#include "mvlab/meanfield.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace mvlab {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void override_seed(json& doc, std::uint64_t seed) {
    if (!doc.is_object()) return;
    if (!doc.contains("ensemble") || !doc["ensemble"].is_object()) doc["ensemble"] = json::object();
    doc["ensemble"]["seed"] = seed;
}

namespace {

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return format_number(v);
}

ordered_json json_number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

/// Collects files and scalar results while an experiment runs.
class Emitter {
public:
    explicit Emitter(std::filesystem::path dir) : dir_(std::move(dir)) {}

    template <class Fn>
    void file(const std::string& name, Fn&& write) {
        std::ostringstream os;
        write(os);
        const std::string bytes = os.str();
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + (dir_ / name).string() + " for writing");
        f << bytes;
        if (!f) throw std::runtime_error("failed writing " + (dir_ / name).string());
        ordered_json entry;
        entry["name"] = name;
        entry["bytes"] = bytes.size();
        entry["fnv1a"] = hex64(fnv1a(bytes));
        files_.push_back(entry);
        names_.push_back(name);
    }

    void summary(const std::string& key, ordered_json value) { summary_[key] = std::move(value); }
    void warn(const std::vector<std::string>& ws) { warnings_.insert(warnings_.end(), ws.begin(), ws.end()); }
    std::ostringstream& text() { return text_; }

    const std::filesystem::path& dir() const { return dir_; }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    const ordered_json& files() const { return files_; }
    const ordered_json& summary() const { return summary_; }

private:
    std::filesystem::path dir_;
    ordered_json files_ = ordered_json::array();
    ordered_json summary_ = ordered_json::object();
    std::vector<std::string> names_;
    std::vector<std::string> warnings_;
    std::ostringstream text_;
};

double opt_num(const json& o, const char* key, double fallback) {
    return o.contains(key) ? o.at(key).get<double>() : fallback;
}

std::size_t opt_count(const json& o, const char* key, std::size_t fallback) {
    return o.contains(key) ? static_cast<std::size_t>(o.at(key).get<double>()) : fallback;
}

bool opt_bool(const json& o, const char* key, bool fallback) { return o.contains(key) ? o.at(key).get<bool>() : fallback; }

StateVector point_from(const json& v, std::size_t dim, const std::string& field) {
    if (v.is_number()) return StateVector(dim, v.get<double>());
    if (v.size() != dim) {
        throw ConfigError({{field, "has " + std::to_string(v.size()) + " entries but the model has dimension " +
                                       std::to_string(dim)}});
    }
    std::vector<double> c;
    for (const auto& e : v) c.push_back(e.get<double>());
    return StateVector(std::move(c));
}

/// options.init: {"kind": constant | gaussian, "mean": x or [x_1..], "sd": s}.
InitSampler init_from(const json& opts, const ModelSpec& model, const StepScheme& scheme, const char* default_kind,
                      double default_sd) {
    const json init = opts.value("init", json::object());
    const std::string kind = init.value("kind", std::string(default_kind));
    const StateVector mean = point_from(init.value("mean", json(0.0)), model.dim, "options.init.mean");
    if (kind == "constant") return constant_init(Segment(mean, model.r0, scheme.dt));
    return gaussian_init(mean, opt_num(init, "sd", default_sd), model.r0, scheme.dt);
}

void write_moments(std::ostream& os, const EmpiricalMeasure& mu) {
    const StateVector mean = mu.mean_current();
    const auto cov = mu.covariance_current();
    const std::size_t d = mean.dim();
    os << "coordinate,mean,variance\n";
    for (std::size_t i = 0; i < d; ++i) {
        os << (i + 1) << ',' << format_number(mean[i]) << ',' << format_number(cov[i * d + i]) << '\n';
    }
}

void run_simulate(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    EnsembleConfig e;
    e.N = cfg.N;
    e.T = *cfg.T;
    e.scheme = cfg.scheme;
    e.seed = cfg.seed;
    e.checkpoint_stride = cfg.checkpoint_stride;
    e.antithetic = opt_bool(cfg.options, "antithetic", false);
    e.tracked = {0};
    if (cfg.options.contains("tracked")) {
        e.tracked.clear();
        for (const auto& v : cfg.options["tracked"]) {
            const double idx = v.get<double>();
            if (idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(cfg.N)) {
                throw ConfigError({{"options.tracked", "particle index " + format_number(idx) + " outside [0, N)"}});
            }
            e.tracked.push_back(static_cast<std::size_t>(idx));
        }
    }
    const EnsembleRun run = simulate_mckean_vlasov(model, init_from(cfg.options, model, cfg.scheme, "constant", 1.0), e);
    out.file("law_flow.csv", [&](std::ostream& os) { run.flow.write_csv(os); });
    out.file("final_measure.csv", [&](std::ostream& os) { write_measure_csv(os, run.ensemble.particles); });
    for (std::size_t k = 0; k < run.tracked.size(); ++k) {
        out.file("trajectory_" + std::to_string(e.tracked[k]) + ".csv",
                 [&](std::ostream& os) { run.tracked[k].write_csv(os); });
    }
    out.summary("checkpoints", run.flow.size());
}

void run_invariant(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    InvariantConfig ic;
    ic.N = cfg.N;
    ic.T_burn = cfg.T_burn.value_or(-1.0);
    ic.T_sample = *cfg.T;
    ic.thin_interval = opt_num(cfg.options, "thin_interval", 1.0);
    ic.scheme = cfg.scheme;
    ic.seed = cfg.seed;
    ic.antithetic = opt_bool(cfg.options, "antithetic", false);
    const InvariantEstimate est = estimate_invariant(model, ic);
    out.file("invariant_measure.csv", [&](std::ostream& os) { write_measure_csv(os, est.measure); });
    out.file("invariant_moments.csv", [&](std::ostream& os) { write_moments(os, est.measure); });
    out.summary("T_burn", est.T_burn);
    out.summary("snapshots", est.snapshots);
    out.summary("atoms", est.measure.size());
    out.warn(est.warnings);
}

void run_picard(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    const json& o = cfg.options;
    EnsembleConfig draws;
    draws.N = cfg.N;
    draws.seed = cfg.seed;
    const InitSampler init = init_from(o, model, cfg.scheme, "gaussian", 1.0);
    std::vector<Segment> atoms;
    atoms.reserve(cfg.N);
    for (std::size_t i = 0; i < cfg.N; ++i) atoms.push_back(init(i, particle_stream(draws, i, NoiseStream::Domain::initial)));

    PicardConfig pc;
    pc.n_iter = opt_count(o, "n_iter", 6);
    pc.N = cfg.N;
    pc.scheme = cfg.scheme;
    pc.seed = cfg.seed;
    pc.variant = o.value("variant", std::string("frozen_law")) == "frozen_path_and_law" ? PicardVariant::frozen_path_and_law
                                                                                       : PicardVariant::frozen_law;
    pc.p = opt_num(o, "p", 0.0);
    pc.distance_stride = opt_count(o, "distance_stride", 1);
    const double t0 = o.contains("t0") ? o["t0"].get<double>()
                                       : pick_t0(model, opt_num(o, "C2", 1.0), opt_num(o, "horizon", 1.0));
    const PicardResult r = picard_solve(model, EmpiricalMeasure(std::move(atoms)), t0, pc);
    out.file("picard.csv", [&](std::ostream& os) {
        os << "iteration,distance,ratio\n";
        for (std::size_t n = 0; n < r.distances.size(); ++n) {
            os << n << ',' << csv_number(r.distances[n]) << ',' << csv_number(r.ratios[n]) << '\n';
        }
    });
    out.file("picard_flow.csv", [&](std::ostream& os) { r.flows.back().write_csv(os); });
    out.summary("t0", r.t0);
    ordered_json ratios = ordered_json::array();
    for (double v : r.ratios) ratios.push_back(json_number(v));
    out.summary("ratios", ratios);
}

void run_contraction(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    const json& o = cfg.options;
    ContractionConfig cc;
    cc.N = cfg.N;
    cc.T = *cfg.T;
    cc.scheme = cfg.scheme;
    cc.seed = cfg.seed;
    cc.offset = opt_num(o, "offset", cc.offset);
    cc.t_lo = opt_num(o, "t_lo", cc.t_lo);
    cc.t_hi = opt_num(o, "t_hi", std::min(cc.t_hi, cc.T));
    cc.p = opt_num(o, "p", cc.p);
    if (cfg.checkpoint_stride) cc.checkpoint_stride = cfg.checkpoint_stride;
    const ContractionResult r = run_contraction_experiment(model, cc);
    out.file("law_distance.csv", [&](std::ostream& os) { write_series_csv(os, r.t, r.distance); });
    out.file("rate_fit.csv", [&](std::ostream& os) { write_rate_fit_csv(os, r.fit); });
    out.summary("rate", r.fit.rate);
    out.summary("r_squared", r.fit.r_squared);
    out.warn(r.warnings);
}

void run_compare(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    const json& o = cfg.options;
    ComparisonConfig cc;
    cc.N = cfg.N;
    cc.T = *cfg.T;
    cc.scheme = cfg.scheme;
    cc.seed = cfg.seed;
    cc.offset = opt_num(o, "offset", cc.offset);
    cc.n_tracked = opt_count(o, "n_tracked", cc.n_tracked);
    cc.snapshot_stride = opt_count(o, "snapshot_stride", cfg.checkpoint_stride ? cfg.checkpoint_stride : cc.snapshot_stride);
    cc.report_interval = opt_num(o, "report_interval", cc.report_interval);
    cc.antithetic = opt_bool(o, "antithetic", cc.antithetic);
    const json inv = o.value("invariant", json::object());
    cc.invariant.N = opt_count(inv, "N", cfg.N);
    cc.invariant.T_burn = cfg.T_burn.value_or(-1.0);
    cc.invariant.T_sample = opt_num(inv, "T_sample", 10.0);
    cc.invariant.thin_interval = opt_num(inv, "thin_interval", 1.0);
    // A distinct master seed keeps the invariant sample independent of the particle noise.
    cc.invariant.seed = cfg.seed + 1;
    const ComparisonResult r = run_comparison_experiment(model, cc);
    out.file("comparison.csv", [&](std::ostream& os) {
        os << "t,rho,integral\n";
        for (std::size_t k = 0; k < r.t.size(); ++k) {
            os << format_number(r.t[k]) << ',' << format_number(r.rho[k]) << ',' << format_number(r.integral[k]) << '\n';
        }
    });
    out.file("invariant_measure.csv", [&](std::ostream& os) { write_measure_csv(os, r.mu_bar); });
    out.summary("worst_bound_gap", r.worst_bound_gap);
    out.warn(r.warnings);
}

int run_check(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    std::vector<ConditionReport> reports = check_model(model);
    if (model.hypothesis == Hypothesis::H1 && !reports.empty()) {
        reports.front() = check_H1_constants(model, opt_count(cfg.options, "n_probes", 10000), cfg.seed);
    }
    out.file("report.json", [&](std::ostream& os) { write_reports_json(os, reports); });
    out.file("report.csv", [&](std::ostream& os) { write_reports_csv(os, reports); });
    write_reports_table(out.text(), reports);
    bool all = true;
    ordered_json verdicts = ordered_json::object();
    for (const auto& r : reports) {
        all = all && r.verdict;
        verdicts[r.name] = r.verdict;
        for (const auto& w : r.warnings) out.warn({r.name + ": " + w});
    }
    out.summary("verdicts", verdicts);
    return all ? exit_code::ok : exit_code::verdict_false;
}

void run_dvrate(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    const double lambda = model.param("theta");
    const double sigma = model.param("sigma");
    std::vector<double> ms{0.0};
    std::vector<double> vs{sigma * sigma / (2.0 * lambda)};
    if (cfg.options.contains("m")) ms = cfg.options["m"].get<std::vector<double>>();
    if (cfg.options.contains("v")) vs = cfg.options["v"].get<std::vector<double>>();
    out.file("dv_rate.csv", [&](std::ostream& os) {
        os << "m,v,rate\n";
        for (double m : ms) {
            for (double v : vs) os << format_number(m) << ',' << format_number(v) << ',' << format_number(dv_rate_gaussian_ou(lambda, sigma, m, v)) << '\n';
        }
    });
}

void run_hitting(const ExperimentConfig& cfg, const ModelSpec& model, Emitter& out) {
    const json& o = cfg.options;
    const std::string freeze = o.value("freeze", std::string(model.law_dependent ? "invariant" : "origin"));
    EmpiricalMeasure mu_bar;
    if (freeze == "invariant") {
        InvariantConfig ic;
        ic.N = cfg.N;
        ic.T_burn = cfg.T_burn.value_or(-1.0);
        ic.T_sample = cfg.T.value_or(10.0);
        ic.scheme = cfg.scheme;
        ic.seed = cfg.seed + 1;
        InvariantEstimate est = estimate_invariant(model, ic);
        out.warn(est.warnings);
        mu_bar = std::move(est.measure);
    } else {
        mu_bar = EmpiricalMeasure::dirac(Segment(StateVector(model.dim), model.r0, cfg.scheme.dt));
    }
    const ReferenceModel ref = freeze_reference(model, mu_bar);

    HittingConfig hc;
    hc.K_radius = opt_num(o, "K_radius", hc.K_radius);
    hc.lambda_exp = opt_num(o, "lambda_exp", hc.lambda_exp);
    hc.n_samples = opt_count(o, "n_samples", hc.n_samples);
    hc.T_cap = opt_num(o, "T_cap", hc.T_cap);
    hc.scheme = cfg.scheme;
    hc.seed = cfg.seed;
    if (o.contains("starts")) {
        for (std::size_t i = 0; i < o["starts"].size(); ++i) {
            hc.starts.push_back(point_from(o["starts"][i], model.dim, "options.starts[" + std::to_string(i) + "]"));
        }
    } else {
        StateVector x(model.dim);
        x[0] = 2.0 * hc.K_radius;
        hc.starts.push_back(x);
    }
    const HittingEstimate h = hitting_moment(ref, hc);
    out.file("hitting.csv", [&](std::ostream& os) {
        os << "estimate,standard_error,censored_fraction,mean_tau\n"
           << format_number(h.estimate) << ',' << format_number(h.standard_error) << ','
           << format_number(h.censored_fraction) << ',' << format_number(h.mean_tau) << '\n';
    });
    out.summary("censored_fraction", h.censored_fraction);
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RunResult run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    const ModelSpec model = build_model(cfg.model_name, cfg.model_params);
    std::filesystem::create_directories(out_dir);
    Emitter out(out_dir);

    int code = exit_code::ok;
    const std::string& x = cfg.experiment;
    if (x == "simulate") {
        run_simulate(cfg, model, out);
    } else if (x == "invariant") {
        run_invariant(cfg, model, out);
    } else if (x == "picard") {
        run_picard(cfg, model, out);
    } else if (x == "contraction") {
        run_contraction(cfg, model, out);
    } else if (x == "compare") {
        run_compare(cfg, model, out);
    } else if (x == "check") {
        code = run_check(cfg, model, out);
    } else if (x == "dvrate") {
        run_dvrate(cfg, model, out);
    } else if (x == "hitting") {
        run_hitting(cfg, model, out);
    } else {
        throw std::invalid_argument("unknown experiment '" + x + "'");
    }

    ordered_json manifest;
    manifest["experiment"] = x;
    manifest["config"] = cfg.document;
    manifest["config_hash"] = hex64(fnv1a(cfg.document.dump()));
    manifest["model"] = {{"name", model.name}, {"dim", model.dim}, {"r0", model.r0}, {"hypothesis", to_string(model.hypothesis)}};
    manifest["seed"] = cfg.seed;
    manifest["N"] = cfg.N;
    manifest["dt"] = cfg.scheme.dt;
    manifest["versions"] = {{"mvlab", kVersion},
                            {"compiler", __VERSION__},
                            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    manifest["files"] = out.files();
    manifest["summary"] = out.summary();
    manifest["warnings"] = out.warnings();
    manifest["exit_code"] = code;
    manifest["created_utc"] = utc_timestamp();
    {
        std::ofstream f(out_dir / "manifest.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + (out_dir / "manifest.json").string() + " for writing");
        f << manifest.dump(2) << '\n';
    }

    RunResult result;
    result.exit_code = code;
    result.files = out.names();
    result.warnings = out.warnings();
    result.text = out.text().str();
    return result;
}

}  // namespace mvlab
