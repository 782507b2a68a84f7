#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"

namespace mfsmp {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
    exit_ok = 0,
    exit_verdict_failed = 1,
    exit_usage = 2,
    exit_config = 3,
    exit_unknown_builtin = 4,
    exit_solver = 5,
    exit_ill_posed = 6,
    exit_mismatch = 7,
    exit_io = 8,
};

/// Text block describing every exit code, for --help.
std::string exit_code_help();

/// Raised for missing or unusable knobs; maps to exit_usage.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Runs one experiment. Writes report.json, manifest.json, summary.txt and
/// tables/*.csv under `out_dir`. Returns 0 when every verdict passes and
/// exit_verdict_failed otherwise; errors propagate as exceptions.
int run_experiment(const std::string& command, const nlohmann::json& config, std::optional<std::uint64_t> seed,
                   const std::filesystem::path& out_dir, std::ostream& log);

/// Like run_experiment, but maps every error to its exit code and reports it on `err`.
int run_experiment_guarded(const std::string& command, const nlohmann::json& config,
                           std::optional<std::uint64_t> seed, const std::filesystem::path& out_dir, std::ostream& log,
                           std::ostream& err);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace mfsmp
