#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "addfit/estimator.hpp"
#include "addfit/frf.hpp"
#include "addfit/synth.hpp"

namespace addfit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNotConverged = 3;

struct FrfSection {
    double delay = 0.0;  // seconds, removed before fitting
    double f_min = 0.0;  // Hz
    double f_max = std::numeric_limits<double>::infinity();
    WeightKind weighting = WeightKind::inverse_magnitude;
    std::optional<double> floor;  // default 1e-9 max|G|
    bool weighted_init = false;
};

struct IdentifySection {
    bool rigid_body = false;
    int num_degree = 0;
};

struct IoSection {
    std::filesystem::path out_dir = ".";
    std::optional<FrfFormat> format;
};

/// Parsed `--config` document. Every section is optional; sections left at
/// their defaults are listed in `defaulted`.
struct RunConfig {
    SynthSpec synth = benchmark_spec();
    FrfSection frf;
    PeakOptions cmif;
    EstimationOptions estimator;
    IdentifySection identify;
    IoSection io;
    std::vector<std::string> defaulted;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::optional<std::filesystem::path>& path);

/// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Applies delay compensation and band selection from the frf section.
FrfDataset preprocess(const FrfDataset& data, const FrfSection& frf);
WeightingScheme make_weighting(const FrfDataset& data, const FrfSection& frf);

/// Entry point shared by the executable and the tests. Returns the process
/// exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace addfit::cli
