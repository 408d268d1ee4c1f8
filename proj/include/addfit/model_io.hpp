#pragma once

#include <filesystem>
#include <string>

#include "addfit/model.hpp"

namespace addfit {

/// Shortest text that reads back bit-identically: printf("%.17g").
std::string format_double(double x);

/// Model document:
///   {"n_u": .., "n_y": .., "submodels": [{"ell": .., "den": [a1..an],
///     "num": [B_0, .., B_m]}]}
/// with every matrix written row-major as an array of row arrays and every
/// number printed with 17 significant digits.
std::string model_to_json(const AdditiveModel& model);
AdditiveModel model_from_json(const std::string& text);

void save_model(const AdditiveModel& model, const std::filesystem::path& path);
AdditiveModel load_model(const std::filesystem::path& path);

}  // namespace addfit
