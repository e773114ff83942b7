#include "mvlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>

namespace mvlab {

using nlohmann::json;

std::string Violation::message() const { return reason == "required" ? field + " required" : field + ": " + reason; }

namespace {

std::string join_messages(const std::vector<Violation>& vs) {
    std::string out = "invalid configuration";
    for (const auto& v : vs) out += "\n  " + v.message();
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

/// Short human form for messages (do not use for data files).
std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// ----------------------------------------------------------------- schema

enum class Kind { number, integer, string, boolean, numbers, pairs, points, number_or_numbers, object };

struct Field {
    std::string key;
    Kind kind;
    bool required = false;
    std::vector<Field> children = {};  // for Kind::object
};

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::number: return "a number";
        case Kind::integer: return "an integer";
        case Kind::string: return "a string";
        case Kind::boolean: return "a boolean";
        case Kind::numbers: return "an array of numbers";
        case Kind::pairs: return "an array of [offset, weight] pairs";
        case Kind::points: return "an array of points (arrays of numbers)";
        case Kind::number_or_numbers: return "a number or an array of numbers";
        case Kind::object: return "an object";
    }
    return "?";
}

bool is_integral(const json& v) {
    if (v.is_number_integer()) return true;
    if (!v.is_number_float()) return false;
    const double x = v.get<double>();
    return std::isfinite(x) && x == std::floor(x);
}

bool all_numbers(const json& v) {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
}

bool matches(const json& v, Kind k) {
    switch (k) {
        case Kind::number: return v.is_number();
        case Kind::integer: return is_integral(v);
        case Kind::string: return v.is_string();
        case Kind::boolean: return v.is_boolean();
        case Kind::numbers: return all_numbers(v);
        case Kind::pairs:
            return v.is_array() && std::all_of(v.begin(), v.end(),
                                               [](const json& e) { return all_numbers(e) && e.size() == 2; });
        case Kind::points:
            return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return all_numbers(e); });
        case Kind::number_or_numbers: return v.is_number() || all_numbers(v);
        case Kind::object: return v.is_object();
    }
    return false;
}

void check_fields(const json& obj, const std::string& path, const std::vector<Field>& fields,
                  std::vector<Violation>& out) {
    for (const auto& f : fields) {
        const std::string where = path + "." + f.key;
        if (!obj.contains(f.key)) {
            if (f.required) out.push_back({where, "required"});
            continue;
        }
        const json& v = obj.at(f.key);
        if (!matches(v, f.kind)) {
            out.push_back({where, std::string("must be ") + kind_name(f.kind)});
            continue;
        }
        if (f.kind == Kind::object) check_fields(v, where, f.children, out);
    }
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        const bool known = std::any_of(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
        if (!known) out.push_back({path + "." + key, "unknown key"});
    }
}

double num(const json& obj, const std::string& key, double fallback) {
    return obj.contains(key) ? obj.at(key).get<double>() : fallback;
}

std::size_t count(const json& obj, const std::string& key, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const double v = obj.at(key).get<double>();
    if (v < 0.0) throw std::invalid_argument(key + " must be >= 0");
    return static_cast<std::size_t>(v);
}

std::vector<double> numbers(const json& obj, const std::string& key) {
    std::vector<double> out;
    if (obj.contains(key)) {
        for (const auto& e : obj.at(key)) out.push_back(e.get<double>());
    }
    return out;
}

// --------------------------------------------------------------- registry

struct ModelEntry {
    std::string name;
    std::vector<Field> params;
    std::function<ModelSpec(const json&)> build;
};

void set_gamma(ModelSpec& m, const json& p) {
    if (p.contains("gamma")) m.params["gamma"] = p.at("gamma").get<double>();
}

std::vector<double> spectrum_from(const json& p, std::size_t modes, const std::string& who) {
    std::vector<double> s = numbers(p, "spectrum");
    if (!s.empty()) return s;
    if (modes == 0) throw std::invalid_argument(who + ": give either spectrum or modes");
    return power_law_spectrum(modes, num(p, "spectrum_c", 1.0), num(p, "spectrum_q", 2.0));
}

const std::vector<ModelEntry>& registry() {
    static const std::vector<ModelEntry> entries = {
        {"example_2_1",
         {{"d", Kind::integer}, {"eps", Kind::number, true}, {"variant", Kind::string}, {"c", Kind::number},
          {"theta", Kind::number}},
         [](const json& p) {
             const std::string v = p.value("variant", std::string("linear"));
             DriftVariant variant;
             if (v == "linear") {
                 variant = DriftVariant::linear;
             } else if (v == "superlinear") {
                 variant = DriftVariant::superlinear;
             } else {
                 throw std::invalid_argument("example_2_1: variant must be linear or superlinear, got '" + v + "'");
             }
             return make_example_2_1(count(p, "d", 2), num(p, "eps", 0.0), variant, num(p, "c", 0.0),
                                     num(p, "theta", 0.0));
         }},
        {"example_2_2",
         {{"m", Kind::integer},
          {"lambda", Kind::number, true},
          {"a1", Kind::number, true},
          {"a2", Kind::number, true},
          {"a3", Kind::number, true},
          {"sigma", Kind::number}},
         [](const json& p) {
             const std::size_t m = count(p, "m", 1);
             Matrix sigma = Matrix::identity(m);
             const double s = num(p, "sigma", 1.0);
             for (std::size_t i = 0; i < m; ++i) sigma(i, i) = s;
             return make_example_2_2(m, num(p, "lambda", 0.0), num(p, "a1", 0.0), num(p, "a2", 0.0),
                                     num(p, "a3", 0.0), sigma);
         }},
        {"example_2_3",
         {{"modes", Kind::integer, true},
          {"alpha", Kind::number, true},
          {"d", Kind::integer},
          {"diameter", Kind::number},
          {"a1", Kind::number, true},
          {"a2", Kind::number, true},
          {"r0", Kind::number, true},
          {"theta", Kind::pairs},
          {"gamma", Kind::number}},
         [](const json& p) {
             const double r0 = num(p, "r0", 0.0);
             std::vector<DelayAtom> theta;
             if (p.contains("theta")) {
                 for (const auto& e : p.at("theta")) theta.push_back({e[0].get<double>(), e[1].get<double>()});
             } else {
                 theta.push_back({-r0, 1.0});
             }
             ModelSpec m = make_example_2_3(count(p, "modes", 0), num(p, "alpha", 0.0), count(p, "d", 1),
                                            num(p, "diameter", 1.0), num(p, "a1", 0.0), num(p, "a2", 0.0), r0, theta);
             set_gamma(m, p);
             return m;
         }},
        {"example_2_4",
         {{"modes", Kind::integer, true},
          {"a1", Kind::number, true},
          {"a2", Kind::number, true},
          {"a3", Kind::number, true},
          {"spectrum", Kind::numbers},
          {"spectrum_c", Kind::number},
          {"spectrum_q", Kind::number},
          {"r0", Kind::number},
          {"gamma", Kind::number}},
         [](const json& p) {
             const std::size_t modes = count(p, "modes", 0);
             ModelSpec m = make_example_2_4(modes, num(p, "a1", 0.0), num(p, "a2", 0.0), num(p, "a3", 0.0),
                                            spectrum_from(p, modes, "example_2_4"), num(p, "r0", 0.0));
             set_gamma(m, p);
             return m;
         }},
        {"ou",
         {{"d", Kind::integer}, {"theta", Kind::number, true}, {"sigma", Kind::number}},
         [](const json& p) { return make_ou(count(p, "d", 1), num(p, "theta", 0.0), num(p, "sigma", 1.0)); }},
        {"linear_spectral",
         {{"modes", Kind::integer},
          {"spectrum", Kind::numbers},
          {"spectrum_c", Kind::number},
          {"spectrum_q", Kind::number},
          {"gamma", Kind::number}},
         [](const json& p) {
             ModelSpec m = make_linear_spectral(spectrum_from(p, count(p, "modes", 0), "linear_spectral"));
             set_gamma(m, p);
             return m;
         }},
    };
    return entries;
}

const ModelEntry* find_model(const std::string& name) {
    for (const auto& e : registry()) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

// ------------------------------------------------------ experiment options

const std::vector<Field> kInitFields = {
    {"kind", Kind::string}, {"mean", Kind::number_or_numbers}, {"sd", Kind::number}};

const std::vector<Field>& option_fields(const std::string& experiment) {
    static const std::map<std::string, std::vector<Field>> table = {
        {"simulate",
         {{"init", Kind::object, false, kInitFields}, {"tracked", Kind::numbers}, {"antithetic", Kind::boolean}}},
        {"invariant", {{"thin_interval", Kind::number}, {"antithetic", Kind::boolean}}},
        {"picard",
         {{"n_iter", Kind::integer},
          {"t0", Kind::number},
          {"C2", Kind::number},
          {"horizon", Kind::number},
          {"variant", Kind::string},
          {"p", Kind::number},
          {"distance_stride", Kind::integer},
          {"init", Kind::object, false, kInitFields}}},
        {"contraction", {{"offset", Kind::number}, {"t_lo", Kind::number}, {"t_hi", Kind::number}, {"p", Kind::number}}},
        {"compare",
         {{"offset", Kind::number},
          {"n_tracked", Kind::integer},
          {"snapshot_stride", Kind::integer},
          {"report_interval", Kind::number},
          {"antithetic", Kind::boolean},
          {"invariant",
           Kind::object,
           false,
           {{"N", Kind::integer}, {"T_sample", Kind::number}, {"thin_interval", Kind::number}}}}},
        {"check", {{"n_probes", Kind::integer}}},
        {"dvrate", {{"m", Kind::numbers}, {"v", Kind::numbers}}},
        {"hitting",
         {{"K_radius", Kind::number},
          {"lambda_exp", Kind::number},
          {"n_samples", Kind::integer},
          {"T_cap", Kind::number},
          {"starts", Kind::points},
          {"freeze", Kind::string}}},
    };
    return table.at(experiment);
}

/// Horizon used when ensemble.T is absent.
double default_horizon(const std::string& experiment) {
    if (experiment == "simulate") return 1.0;
    if (experiment == "invariant") return 10.0;
    if (experiment == "contraction") return 4.0;
    if (experiment == "compare") return 100.0;
    return 1.0;
}

bool divides(double big, double dt) {
    const double ratio = big / dt;
    return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio);
}

}  // namespace

ConfigError::ConfigError(std::vector<Violation> violations)
    : std::runtime_error(join_messages(violations)), violations_(std::move(violations)) {}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"simulate", "invariant",   "picard", "contraction",
                                                   "compare",  "check",       "dvrate", "hitting"};
    return names;
}

const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& e : registry()) out.push_back(e.name);
        return out;
    }();
    return names;
}

ModelSpec build_model(const std::string& name, const json& params) {
    const ModelEntry* e = find_model(name);
    if (!e) throw std::invalid_argument("unknown model '" + name + "'; available: " + join(model_names()));
    return e->build(params.is_null() ? json::object() : params);
}

std::vector<Violation> validate(const json& doc, const std::string& subcommand) {
    std::vector<Violation> out;
    if (!doc.is_object()) return {{"<document>", "must be an object"}};

    static const std::set<std::string> top = {"experiment", "model",           "scheme", "ensemble",
                                              "output_dir", "checkpoint_stride", "options"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (!top.count(key)) out.push_back({key, "unknown key"});
    }

    // experiment
    std::string experiment = subcommand;
    if (doc.contains("experiment")) {
        if (!doc["experiment"].is_string()) {
            out.push_back({"experiment", "must be a string"});
        } else {
            const std::string given = doc["experiment"].get<std::string>();
            if (!subcommand.empty() && given != subcommand) {
                out.push_back({"experiment", "document says '" + given + "' but the subcommand is '" + subcommand + "'"});
            }
            if (experiment.empty()) experiment = given;
        }
    }
    const auto& names = experiment_names();
    if (experiment.empty()) {
        out.push_back({"experiment", "required"});
    } else if (std::find(names.begin(), names.end(), experiment) == names.end()) {
        out.push_back({"experiment", "unknown experiment '" + experiment + "'; available: " + join(names)});
        experiment.clear();
    }

    // model
    std::optional<ModelSpec> model;
    if (!doc.contains("model")) {
        out.push_back({"model", "required"});
    } else if (!doc["model"].is_object()) {
        out.push_back({"model", "must be an object"});
    } else {
        const json& m = doc["model"];
        for (const auto& [key, value] : m.items()) {
            (void)value;
            if (key != "name" && key != "params") out.push_back({"model." + key, "unknown key"});
        }
        if (!m.contains("name")) {
            out.push_back({"model.name", "required"});
        } else if (!m["name"].is_string()) {
            out.push_back({"model.name", "must be a string"});
        } else {
            const std::string name = m["name"].get<std::string>();
            const ModelEntry* entry = find_model(name);
            if (!entry) {
                out.push_back({"model.name", "unknown model '" + name + "'; available: " + join(model_names())});
            } else {
                const json params = m.value("params", json::object());
                if (!params.is_object()) {
                    out.push_back({"model.params", "must be an object"});
                } else {
                    const std::size_t before = out.size();
                    check_fields(params, "model.params", entry->params, out);
                    if (out.size() == before) {
                        try {
                            model = entry->build(params);
                        } catch (const std::exception& e) {
                            out.push_back({"model.params", e.what()});
                        }
                    }
                }
            }
        }
    }

    // scheme
    StepScheme scheme;
    bool scheme_ok = true;
    if (doc.contains("scheme")) {
        const json& s = doc["scheme"];
        if (!s.is_object()) {
            out.push_back({"scheme", "must be an object"});
            scheme_ok = false;
        } else {
            const std::size_t before = out.size();
            check_fields(s, "scheme", {{"kind", Kind::string}, {"dt", Kind::number}}, out);
            if (s.contains("kind") && s["kind"].is_string()) {
                try {
                    scheme.kind = scheme_kind_from_string(s["kind"].get<std::string>());
                } catch (const std::exception& e) {
                    out.push_back({"scheme.kind", e.what()});
                }
            }
            if (s.contains("dt") && s["dt"].is_number()) {
                scheme.dt = s["dt"].get<double>();
                if (!(scheme.dt > 0.0) || !std::isfinite(scheme.dt)) out.push_back({"scheme.dt", "must be positive"});
            }
            scheme_ok = out.size() == before;
        }
    }
    if (model && scheme_ok) {
        if (!divides(model->r0, scheme.dt)) {
            out.push_back({"scheme.dt", "dt=" + short_number(scheme.dt) + " does not divide r0=" +
                                            short_number(model->r0)});
        }
        if (scheme.kind == SchemeKind::exponential_euler && !model->has_linear_operator()) {
            out.push_back({"scheme.kind", "exponential_euler needs a model with a linear operator; " + model->name +
                                              " has none"});
        }
    }

    // ensemble
    if (!doc.contains("ensemble")) {
        out.push_back({"ensemble.seed", "required"});
    } else if (!doc["ensemble"].is_object()) {
        out.push_back({"ensemble", "must be an object"});
    } else {
        const json& e = doc["ensemble"];
        check_fields(e, "ensemble",
                     {{"N", Kind::integer}, {"T", Kind::number}, {"T_burn", Kind::number}, {"seed", Kind::integer, true}},
                     out);
        if (e.contains("seed") && is_integral(e["seed"]) && e["seed"].get<double>() < 0.0) {
            out.push_back({"ensemble.seed", "must be >= 0"});
        }
        if (e.contains("N") && is_integral(e["N"]) && e["N"].get<double>() < 2.0) {
            out.push_back({"ensemble.N", "must be >= 2"});
        }
        if (e.contains("T") && e["T"].is_number()) {
            const double T = e["T"].get<double>();
            if (!(T > 0.0) || !std::isfinite(T)) {
                out.push_back({"ensemble.T", "must be positive"});
            } else if (scheme_ok && (experiment == "simulate" || experiment == "contraction" ||
                                     experiment == "compare") && !divides(T, scheme.dt)) {
                out.push_back({"ensemble.T", "T=" + short_number(T) + " is not a multiple of dt=" +
                                                 short_number(scheme.dt)});
            }
        }
    }

    if (doc.contains("output_dir") && !doc["output_dir"].is_string()) {
        out.push_back({"output_dir", "must be a string"});
    }
    if (doc.contains("checkpoint_stride")) {
        const json& c = doc["checkpoint_stride"];
        if (!is_integral(c) || c.get<double>() < 1.0) out.push_back({"checkpoint_stride", "must be a positive integer"});
    }

    // options
    if (doc.contains("options")) {
        if (!doc["options"].is_object()) {
            out.push_back({"options", "must be an object"});
        } else if (!experiment.empty()) {
            const json& o = doc["options"];
            check_fields(o, "options", option_fields(experiment), out);
            if (o.contains("variant") && o["variant"].is_string()) {
                const std::string v = o["variant"].get<std::string>();
                if (v != "frozen_law" && v != "frozen_path_and_law") {
                    out.push_back({"options.variant", "must be frozen_law or frozen_path_and_law"});
                }
            }
            if (o.contains("init") && o["init"].is_object() && o["init"].contains("kind")) {
                const json& k = o["init"]["kind"];
                if (k.is_string() && k != "constant" && k != "gaussian") {
                    out.push_back({"options.init.kind", "must be constant or gaussian"});
                }
            }
            if (o.contains("freeze") && o["freeze"].is_string() && o["freeze"] != "invariant" &&
                o["freeze"] != "origin") {
                out.push_back({"options.freeze", "must be invariant or origin"});
            }
        }
    }
    if (model && experiment == "dvrate" && (model->name != "ou" || model->dim != 1)) {
        out.push_back({"model.name", "dvrate needs the one-dimensional ou model"});
    }
    return out;
}

ExperimentConfig parse_config(const json& doc, const std::string& experiment) {
    auto violations = validate(doc, experiment);
    if (!violations.empty()) throw ConfigError(std::move(violations));

    ExperimentConfig cfg;
    cfg.document = doc;
    cfg.experiment = experiment.empty() ? doc.at("experiment").get<std::string>() : experiment;
    cfg.model_name = doc.at("model").at("name").get<std::string>();
    cfg.model_params = doc.at("model").value("params", json::object());
    if (doc.contains("scheme")) {
        const json& s = doc["scheme"];
        if (s.contains("kind")) cfg.scheme.kind = scheme_kind_from_string(s["kind"].get<std::string>());
        if (s.contains("dt")) cfg.scheme.dt = s["dt"].get<double>();
    }
    const json& e = doc.at("ensemble");
    cfg.seed = static_cast<std::uint64_t>(e.at("seed").get<double>());
    if (e.at("seed").is_number_unsigned()) cfg.seed = e.at("seed").get<std::uint64_t>();
    cfg.N = count(e, "N", 1000);
    cfg.T = e.contains("T") ? std::optional<double>(e["T"].get<double>()) : std::nullopt;
    if (!cfg.T && (cfg.experiment == "simulate" || cfg.experiment == "invariant" || cfg.experiment == "contraction" ||
                   cfg.experiment == "compare")) {
        cfg.T = default_horizon(cfg.experiment);
    }
    if (e.contains("T_burn")) cfg.T_burn = e["T_burn"].get<double>();
    cfg.output_dir = doc.value("output_dir", std::string());
    cfg.checkpoint_stride = count(doc, "checkpoint_stride", 0);
    cfg.options = doc.value("options", json::object());
    return cfg;
}

json parse_document(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ConfigError({{"<document>", std::string("unparseable: ") + err.what()}});
    }
}

}  // namespace mvlab
