// Command-line front end: one subcommand per experiment.

#include "mvlab/config.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/runner.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace {

struct Invocation {
    std::string config_path;
    std::string out_dir;
    std::size_t threads = 0;
    std::uint64_t seed = 0;
    bool validate_only = false;
};

const std::vector<std::pair<std::string, std::string>> kSubcommands = {
    {"simulate", "interacting particle system: law flow and tracked trajectories"},
    {"invariant", "estimate the invariant law by long-run pooling"},
    {"picard", "Picard iteration over law flows and its contraction ratios"},
    {"contraction", "W_p distance between two ensembles over time and its decay rate"},
    {"compare", "occupation measures of the particle system against the frozen reference equation"},
    {"check", "evaluate the parameter conditions applicable to the model"},
    {"dvrate", "level-2 rate of Gaussian laws under the one-dimensional OU reference"},
    {"hitting", "exponential moment of the hitting time of a ball"},
};

int execute(const std::string& experiment, const Invocation& inv, bool seed_given) {
    std::ifstream in(inv.config_path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read " << inv.config_path << '\n';
        return mvlab::exit_code::failure;
    }
    std::stringstream buf;
    buf << in.rdbuf();

    try {
        nlohmann::json doc = mvlab::parse_document(buf.str());
        if (seed_given) mvlab::override_seed(doc, inv.seed);
        const auto violations = mvlab::validate(doc, experiment);
        if (!violations.empty()) {
            for (const auto& v : violations) std::cerr << "error: " << v.message() << '\n';
            return mvlab::exit_code::schema;
        }
        if (inv.validate_only) {
            std::cout << inv.config_path << ": ok\n";
            return mvlab::exit_code::ok;
        }
        const mvlab::ExperimentConfig cfg = mvlab::parse_config(doc, experiment);
        std::string out = inv.out_dir;
        if (out.empty()) out = cfg.output_dir;
        if (out.empty()) out = "out/" + experiment;
        if (inv.threads > 0) mvlab::set_worker_count(inv.threads);

        const mvlab::RunResult r = mvlab::run(cfg, out);
        std::cout << r.text;
        for (const auto& f : r.files) std::cout << "wrote " << (std::filesystem::path(out) / f).string() << '\n';
        std::cout << "wrote " << (std::filesystem::path(out) / "manifest.json").string() << '\n';
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
        return r.exit_code;
    } catch (const mvlab::ConfigError& e) {
        for (const auto& v : e.violations()) std::cerr << "error: " << v.message() << '\n';
        return mvlab::exit_code::schema;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mvlab::exit_code::failure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mvlab: experiments on distribution-dependent SDEs"};
    app.set_version_flag("--version", mvlab::kVersion);
    app.require_subcommand(1);

    Invocation inv;
    std::map<std::string, CLI::App*> subs;
    std::map<std::string, CLI::Option*> seed_opts;
    for (const auto& [name, help] : kSubcommands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", inv.config_path, "experiment configuration (JSON)")->required();
        sub->add_option("--out", inv.out_dir, "output directory (overrides output_dir)");
        sub->add_option("--threads", inv.threads, "worker threads; results do not depend on it")
            ->check(CLI::PositiveNumber);
        seed_opts[name] = sub->add_option("--seed", inv.seed, "master seed (overrides ensemble.seed)");
        sub->add_flag("--validate", inv.validate_only, "check the configuration and exit");
        subs[name] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mvlab::exit_code::schema;
    }
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) return execute(name, inv, seed_opts[name]->count() > 0);
    }
    return mvlab::exit_code::failure;
}
