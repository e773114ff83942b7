#pragma once

// Experiment orchestration behind the command-line tool: builds the model,
// runs the named experiment and writes its data files plus a manifest.

#include "mvlab/config.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mvlab {

inline constexpr const char* kVersion = "1.0.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int verdict_false = 2;
inline constexpr int schema = 3;
}  // namespace exit_code

struct RunResult {
    int exit_code = exit_code::ok;
    /// Data files written, relative to the output directory, in emission order.
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    /// Human-readable result for the terminal (empty when there is nothing to show).
    std::string text;
};

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a(std::string_view bytes);
[[nodiscard]] std::string hex64(std::uint64_t v);

/// Sets ensemble.seed in the document (the --seed override).
void override_seed(nlohmann::json& doc, std::uint64_t seed);

/// Runs the experiment into out_dir (created if missing). Data files depend
/// only on the configuration; manifest.json additionally carries a timestamp.
/// Throws ConfigError for problems only detectable once the model exists, and
/// std::exception for runtime failures.
[[nodiscard]] RunResult run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace mvlab
