#pragma once

// Experiment configuration documents: schema validation, the model registry
// and typed extraction of the fields the runner needs.

#include "mvlab/integrator.hpp"
#include "mvlab/models.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mvlab {

/// One schema problem: the dotted field path and what is wrong with it.
struct Violation {
    std::string field;
    std::string reason;

    [[nodiscard]] std::string message() const;
    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Thrown by parse_config when validation reports violations.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<Violation> violations);
    [[nodiscard]] const std::vector<Violation>& violations() const noexcept { return violations_; }

private:
    std::vector<Violation> violations_;
};

[[nodiscard]] const std::vector<std::string>& experiment_names();
[[nodiscard]] const std::vector<std::string>& model_names();

/// Builds a registered model from its parameter object. Throws
/// std::invalid_argument for unknown names and invalid constants.
[[nodiscard]] ModelSpec build_model(const std::string& name, const nlohmann::json& params);

struct ExperimentConfig {
    std::string experiment;
    std::string model_name;
    nlohmann::json model_params = nlohmann::json::object();
    StepScheme scheme;
    std::size_t N = 1000;
    /// Horizon; absent means the experiment's own default.
    std::optional<double> T;
    std::optional<double> T_burn;
    std::uint64_t seed = 0;
    std::string output_dir;
    /// 0 selects the experiment default.
    std::size_t checkpoint_stride = 0;
    nlohmann::json options = nlohmann::json::object();
    /// The validated document as given, echoed into the manifest.
    nlohmann::json document;
};

/// Every violation in the document, empty iff runnable. When `experiment` is
/// non-empty it names the subcommand, which the document may omit.
[[nodiscard]] std::vector<Violation> validate(const nlohmann::json& doc, const std::string& experiment = "");

/// Validates and extracts. Throws ConfigError listing every violation.
[[nodiscard]] ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& experiment = "");

/// Parses JSON text; throws ConfigError with field "<document>" when unparseable.
[[nodiscard]] nlohmann::json parse_document(const std::string& text);

}  // namespace mvlab
