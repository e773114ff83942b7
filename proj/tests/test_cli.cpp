#include "mvlab/analysis.hpp"
#include "mvlab/config.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/runner.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mvlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mvlab_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json contraction_doc() {
    return json::parse(R"({
        "experiment": "contraction",
        "model": {"name": "example_2_1", "params": {"d": 2, "eps": 0.0}},
        "scheme": {"kind": "euler_maruyama", "dt": 0.01},
        "ensemble": {"N": 120, "T": 2, "seed": 9},
        "checkpoint_stride": 10,
        "options": {"t_lo": 0.5, "t_hi": 2}
    })");
}

bool has(const std::vector<Violation>& vs, const std::string& field) {
    return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.field == field; });
}

std::string messages(const std::vector<Violation>& vs) {
    std::string s;
    for (const auto& v : vs) s += v.message() + "\n";
    return s;
}

/// Runs the document into a fresh directory and returns the data files' contents.
std::map<std::string, std::string> run_to_files(const json& doc, const std::string& tag) {
    const fs::path dir = scratch_dir(tag);
    const RunResult r = run(parse_config(doc), dir);
    std::map<std::string, std::string> out;
    for (const auto& f : r.files) out[f] = slurp(dir / f);
    return out;
}

}  // namespace

TEST_CASE("validate: missing seed is reported as ensemble.seed required", "[cli][validate]") {
    json doc = contraction_doc();
    doc["ensemble"].erase("seed");
    const auto vs = validate(doc);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].message() == "ensemble.seed required");

    doc.erase("ensemble");
    const auto vs2 = validate(doc);
    REQUIRE(vs2.size() == 1);
    CHECK(vs2[0].message() == "ensemble.seed required");
}

TEST_CASE("validate: dt not dividing r0 names both values", "[cli][validate]") {
    const json doc = json::parse(R"({
        "experiment": "simulate",
        "model": {"name": "example_2_3",
                  "params": {"modes": 2, "alpha": 1.0, "a1": 0.1, "a2": 0.1, "r0": 0.1}},
        "scheme": {"dt": 0.03},
        "ensemble": {"seed": 1}
    })");
    const auto vs = validate(doc);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].field == "scheme.dt");
    CHECK_THAT(vs[0].reason, Catch::Matchers::ContainsSubstring("dt=0.03"));
    CHECK_THAT(vs[0].reason, Catch::Matchers::ContainsSubstring("r0=0.1"));

    json ok = doc;
    ok["scheme"]["dt"] = 0.025;
    CHECK(validate(ok).empty());
}

TEST_CASE("validate: unknown model lists every available model", "[cli][validate]") {
    json doc = contraction_doc();
    doc["model"] = {{"name", "lorenz"}};
    const auto vs = validate(doc);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].field == "model.name");
    for (const auto& name : model_names()) CHECK_THAT(vs[0].reason, Catch::Matchers::ContainsSubstring(name));
    CHECK(model_names().size() == 6);
}

TEST_CASE("validate: type, range and key errors carry their field path", "[cli][validate]") {
    json doc = contraction_doc();
    doc["ensemble"]["N"] = 1.5;
    doc["ensemble"]["T"] = 2.005;
    doc["options"]["window"] = 3;
    doc["model"]["params"].erase("eps");
    doc["scheme"]["kind"] = "rk4";
    doc["checkpoint_stride"] = 0;
    doc["colour"] = "blue";
    const auto vs = validate(doc);
    INFO(messages(vs));
    CHECK(has(vs, "ensemble.N"));
    CHECK(has(vs, "ensemble.T") == false);  // T is only checked against a valid scheme
    CHECK(has(vs, "options.window"));
    CHECK(has(vs, "model.params.eps"));
    CHECK(has(vs, "scheme.kind"));
    CHECK(has(vs, "checkpoint_stride"));
    CHECK(has(vs, "colour"));

    json t = contraction_doc();
    t["ensemble"]["T"] = 2.005;
    const auto vt = validate(t);
    REQUIRE(vt.size() == 1);
    CHECK(vt[0].field == "ensemble.T");

    json n = contraction_doc();
    n["ensemble"]["N"] = 1;
    CHECK(has(validate(n), "ensemble.N"));
}

TEST_CASE("validate: model constants and scheme compatibility", "[cli][validate]") {
    json doc = contraction_doc();
    doc["model"]["params"]["eps"] = -1.0;
    const auto vs = validate(doc);
    REQUIRE(vs.size() == 1);
    CHECK(vs[0].field == "model.params");

    json e = contraction_doc();
    e["scheme"]["kind"] = "exponential_euler";
    const auto ve = validate(e);
    REQUIRE(ve.size() == 1);
    CHECK(ve[0].field == "scheme.kind");

    json d = contraction_doc();
    d["experiment"] = "dvrate";
    CHECK(has(validate(d), "model.name"));
}

TEST_CASE("validate: experiment comes from the document or the subcommand", "[cli][validate]") {
    json doc = contraction_doc();
    CHECK(validate(doc).empty());
    CHECK(validate(doc, "contraction").empty());
    CHECK(has(validate(doc, "picard"), "experiment"));
    doc.erase("experiment");
    CHECK(has(validate(doc), "experiment"));
    CHECK(validate(doc, "contraction").empty());
    doc["experiment"] = "sweep";
    const auto vs = validate(doc);
    REQUIRE(has(vs, "experiment"));
    CHECK_THAT(vs[0].reason, Catch::Matchers::ContainsSubstring("hitting"));
}

TEST_CASE("validate: non-objects and unparseable text", "[cli][validate]") {
    CHECK(has(validate(json::array()), "<document>"));
    CHECK_THROWS_AS(parse_document("{\"model\": "), ConfigError);
    try {
        (void)parse_document("{oops}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0].field == "<document>");
    }
}

TEST_CASE("every bundled config validates", "[cli][validate]") {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(MVLAB_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".json") continue;
        INFO(entry.path().string());
        const json doc = parse_document(slurp(entry.path()));
        const auto vs = validate(doc);
        INFO(messages(vs));
        CHECK(vs.empty());
        ++n;
    }
    CHECK(n >= 8);
}

TEST_CASE("parse_config extracts typed fields and defaults", "[cli][config]") {
    const ExperimentConfig cfg = parse_config(contraction_doc());
    CHECK(cfg.experiment == "contraction");
    CHECK(cfg.model_name == "example_2_1");
    CHECK(cfg.N == 120);
    CHECK(cfg.T.value() == 2.0);
    CHECK_FALSE(cfg.T_burn.has_value());
    CHECK(cfg.seed == 9);
    CHECK(cfg.checkpoint_stride == 10);
    CHECK(cfg.scheme.dt == 0.01);

    json doc = contraction_doc();
    doc["ensemble"].erase("T");
    doc["ensemble"]["seed"] = 18446744073709551615ULL;
    const ExperimentConfig d = parse_config(doc);
    CHECK(d.T.value() == 4.0);
    CHECK(d.seed == 18446744073709551615ULL);

    json bad = contraction_doc();
    bad["ensemble"].erase("seed");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
}

TEST_CASE("override_seed replaces or supplies the seed", "[cli][config]") {
    json doc = contraction_doc();
    override_seed(doc, 42);
    CHECK(parse_config(doc).seed == 42);
    doc.erase("ensemble");
    CHECK_FALSE(validate(doc).empty());
    override_seed(doc, 5);
    CHECK(validate(doc).empty());
}

TEST_CASE("build_model constructs every registered model", "[cli][config]") {
    CHECK(build_model("example_2_1", {{"eps", 0.05}}).dim == 2);
    CHECK(build_model("example_2_1", {{"eps", 0.0}, {"variant", "superlinear"}, {"c", 1}, {"theta", 1}}).dim == 2);
    CHECK(build_model("example_2_2", {{"m", 2}, {"lambda", 2}, {"a1", 1}, {"a2", 0.5}, {"a3", 0.2}}).dim == 4);
    CHECK(build_model("example_2_3", {{"modes", 3}, {"alpha", 1}, {"a1", 0.1}, {"a2", 0.1}, {"r0", 0.2}}).r0 == 0.2);
    CHECK(build_model("example_2_4", {{"modes", 2}, {"a1", 1}, {"a2", 1}, {"a3", 0}}).dim == 4);
    CHECK(build_model("ou", {{"theta", 1}}).dim == 1);
    const ModelSpec ls = build_model("linear_spectral", {{"modes", 4}, {"gamma", 0.2}});
    CHECK(ls.spectrum == std::vector<double>{1, 4, 9, 16});
    CHECK(ls.param("gamma") == 0.2);
    CHECK(build_model("linear_spectral", {{"spectrum", {1, 2}}}).dim == 2);
    CHECK_THROWS_AS(build_model("linear_spectral", json::object()), std::invalid_argument);
    CHECK_THROWS_AS(build_model("example_2_1", {{"eps", 0.1}, {"variant", "cubic"}}), std::invalid_argument);
    CHECK_THROWS_AS(build_model("nope", json::object()), std::invalid_argument);
}

TEST_CASE("fnv1a matches published test vectors", "[cli][manifest]") {
    CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
    CHECK(hex64(fnv1a("foobar")) == "85944171f73967e8");
}

TEST_CASE("contraction run: schema, rate and manifest", "[cli][run]") {
    const fs::path dir = scratch_dir("contraction");
    const RunResult r = run(parse_config(contraction_doc()), dir);
    CHECK(r.exit_code == exit_code::ok);
    REQUIRE(r.files == std::vector<std::string>{"law_distance.csv", "rate_fit.csv"});

    std::istringstream dist(slurp(dir / "law_distance.csv"));
    std::string line;
    std::getline(dist, line);
    CHECK(line == "t,value");
    std::size_t rows = 0;
    while (std::getline(dist, line)) ++rows;
    CHECK(rows == 21);  // t = 0, 0.1, ..., 2

    std::istringstream fit(slurp(dir / "rate_fit.csv"));
    std::getline(fit, line);
    CHECK(line == "rate,intercept,r_squared,t_lo,t_hi,points");
    std::getline(fit, line);
    const double rate = std::stod(line.substr(0, line.find(',')));
    CHECK(rate == Catch::Approx(0.5).epsilon(0.08));

    const json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["config"] == contraction_doc());
    CHECK(manifest["config_hash"] == hex64(fnv1a(contraction_doc().dump())));
    CHECK(manifest["versions"]["mvlab"] == kVersion);
    REQUIRE(manifest["files"].size() == 2);
    CHECK(manifest["files"][0]["fnv1a"] == hex64(fnv1a(slurp(dir / "law_distance.csv"))));
    CHECK(manifest.contains("created_utc"));
}

TEST_CASE("reruns are byte-identical, whatever the worker count", "[cli][determinism]") {
    const std::size_t saved = worker_count();
    json docs[] = {contraction_doc(), parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/simulate_example_2_3.json")),
                   parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/compare_example_2_1.json")),
                   parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/hitting_ou.json"))};
    docs[2]["ensemble"]["T"] = 5;
    docs[2]["ensemble"]["N"] = 40;
    docs[2]["ensemble"]["T_burn"] = 2;
    docs[3]["options"]["n_samples"] = 64;
    for (std::size_t k = 0; k < std::size(docs); ++k) {
        INFO("config " << k);
        set_worker_count(1);
        const auto a = run_to_files(docs[k], "det_a");
        const auto b = run_to_files(docs[k], "det_b");
        set_worker_count(3);
        const auto c = run_to_files(docs[k], "det_c");
        CHECK_FALSE(a.empty());
        CHECK(a == b);
        CHECK(a == c);
    }
    set_worker_count(saved);

    json other = contraction_doc();
    override_seed(other, 10);
    CHECK(run_to_files(other, "det_seed") != run_to_files(contraction_doc(), "det_base"));
}

TEST_CASE("manifests differ only in their timestamp", "[cli][determinism]") {
    const fs::path a = scratch_dir("man_a");
    const fs::path b = scratch_dir("man_b");
    (void)run(parse_config(contraction_doc()), a);
    (void)run(parse_config(contraction_doc()), b);
    json ma = json::parse(slurp(a / "manifest.json"));
    json mb = json::parse(slurp(b / "manifest.json"));
    ma.erase("created_utc");
    mb.erase("created_utc");
    CHECK(ma == mb);
}

TEST_CASE("check run: report schema and verdict exit codes", "[cli][run]") {
    const json doc = parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/check_example_2_2.json"));
    const fs::path dir = scratch_dir("check");
    const RunResult r = run(parse_config(doc), dir);
    CHECK(r.exit_code == exit_code::ok);
    CHECK_THAT(r.text, Catch::Matchers::ContainsSubstring("condition_2_4"));

    const ConditionReport expected = check_condition_2_4(2.0, 1.0, 0.5, 0.2);
    const json report = json::parse(slurp(dir / "report.json"));
    const auto& reports = report["reports"];
    auto it = std::find_if(reports.begin(), reports.end(), [](const json& j) { return j["name"] == "condition_2_4"; });
    REQUIRE(it != reports.end());
    CHECK((*it)["lhs"].get<double>() == 8.0);
    CHECK((*it)["rhs"].get<double>() == expected.rhs);
    CHECK((*it)["verdict"] == true);

    std::istringstream csv(slurp(dir / "report.csv"));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "name,lhs,rhs,verdict,optimizer");

    json failing = doc;
    failing["model"]["params"]["lambda"] = 0.5;
    CHECK(run(parse_config(failing), scratch_dir("check_false")).exit_code == exit_code::verdict_false);
}

TEST_CASE("run reports option/model dimension mismatches as config errors", "[cli][run]") {
    json doc = parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/hitting_ou.json"));
    doc["options"]["starts"] = json::parse("[[1.0, 2.0]]");
    try {
        (void)run(parse_config(doc), scratch_dir("mismatch"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.violations().size() == 1);
        CHECK(e.violations()[0].field == "options.starts[0]");
    }

    json sim = parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/simulate_example_2_3.json"));
    sim["options"]["tracked"] = {500};
    CHECK_THROWS_AS(run(parse_config(sim), scratch_dir("tracked")), ConfigError);
}

TEST_CASE("dvrate run writes the closed form on the requested grid", "[cli][run]") {
    const json doc = parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs/dvrate_ou.json"));
    const fs::path dir = scratch_dir("dvrate");
    (void)run(parse_config(doc), dir);
    std::istringstream csv(slurp(dir / "dv_rate.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "m,v,rate");
    std::size_t rows = 0;
    bool saw_zero = false;
    while (std::getline(csv, line)) {
        ++rows;
        if (line == "0,1,0") saw_zero = true;  // m = 0, v = sigma^2 / (2 theta) = 1
    }
    CHECK(rows == 9);
    CHECK(saw_zero);
}

TEST_CASE("the remaining experiments emit their documented headers", "[cli][run]") {
    const std::map<std::string, std::pair<std::string, std::string>> expected = {
        {"simulate_example_2_3.json", {"trajectory_0.csv", "t,x_1,x_2,x_3,x_4"}},
        {"invariant_example_2_1.json", {"invariant_moments.csv", "coordinate,mean,variance"}},
        {"picard_example_2_1.json", {"picard.csv", "iteration,distance,ratio"}},
        {"compare_example_2_1.json", {"comparison.csv", "t,rho,integral"}},
        {"hitting_ou.json", {"hitting.csv", "estimate,standard_error,censored_fraction,mean_tau"}},
    };
    for (const auto& [file, want] : expected) {
        INFO(file);
        json doc = parse_document(slurp(fs::path(MVLAB_SOURCE_DIR) / "configs" / file));
        if (doc["experiment"] == "compare") doc["ensemble"]["T"] = 5;
        const fs::path dir = scratch_dir("headers");
        (void)run(parse_config(doc), dir);
        std::istringstream in(slurp(dir / want.first));
        std::string header;
        std::getline(in, header);
        CHECK(header == want.second);
    }
}
