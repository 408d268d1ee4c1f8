#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "addfit/estimator.hpp"
#include "addfit/frf.hpp"
#include "addfit/model.hpp"

namespace addfit {

/// Counter-based normal generator. Draw i uses
///   x = seed + (i + 1) * 0x9E3779B97F4A7C15 (mod 2^64)
///   x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
///   x = (x ^ (x >> 27)) * 0x94D049BB133111EB
///   x =  x ^ (x >> 31)
/// (the SplitMix64 output for state `seed` at step i), u = ((x >> 11) + 1) *
/// 2^-53 in (0, 1]. Standard normals come in Box-Muller pairs from draws
/// (2c, 2c+1): sqrt(-2 ln u0) * (cos, sin)(2 pi u1).
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t counter);
    double uniform(std::uint64_t counter) const;
    /// Normal pair c: first element from draws 2c, 2c+1.
    std::pair<double, double> normal_pair(std::uint64_t c) const;

private:
    std::uint64_t seed_;
};

enum class GridSpacing { linear, log };
enum class NoiseKind { none, complex_gaussian };

struct SynthSpec {
    Eigen::Index n_u = 2;
    Eigen::Index n_y = 2;
    std::optional<RMatrix> rigid_body;  // B_0 of the B_0 / s^2 term
    std::vector<ModalSpec> modes;
    double f_start_hz = 1.0;
    double f_stop_hz = 500.0;
    std::size_t points = 1000;
    GridSpacing spacing = GridSpacing::linear;
    NoiseKind noise = NoiseKind::none;
    double snr_db = 40.0;
    double delay = 0.0;  // seconds
    std::uint64_t seed = 1;
};

/// 2x2 stage-like benchmark: rigid-body B_0/s^2 plus modes at 30 Hz
/// (zeta 0.02) and 120 Hz (zeta 0.01); 1000 log-spaced points, 1-500 Hz;
/// noiseless.
SynthSpec benchmark_spec();

/// Throws DomainError / StructureError on a spec violating its invariants.
void validate_spec(const SynthSpec& spec);

/// Optional rigid-body B_0/s^2 submodel first, then one second-order
/// submodel per mode.
AdditiveModel build_truth(const SynthSpec& spec);

std::vector<double> frequency_grid_hz(const SynthSpec& spec);

/// G(w_k) = P(j w_k) exp(-j w_k tau) + V_k. Each entry of V is circular complex
/// Gaussian with variance rms^2 10^(-snr/10), rms being the RMS of that
/// noiseless entry over the grid. Normal pair index for point k, column c,
/// row r is (k n_u + c) n_y + r.
FrfDataset simulate_frf(const SynthSpec& spec);

/// `[synth]` config section <-> SynthSpec. Missing keys keep the defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& section, SynthSpec base = {});
nlohmann::json to_json(const SynthSpec& spec);

// --- brute-force oracle -----------------------------------------------------

struct BruteForceResult {
    AdditiveModel best;
    double best_cost = 0.0;
    std::size_t best_index = 0;
    /// cost[i][j] for omegas[i], zetas[j]
    std::vector<std::vector<double>> surface;
};

/// Exhaustive search over single-mode denominators 1 + 2 zeta/omega s +
/// s^2/omega^2 for a SISO dataset; for each grid point the numerator
/// (degree num_degree, ell integrators) is the weighted linear LS solution.
BruteForceResult brute_force_siso_fit(const FrfDataset& data, const WeightingScheme& weighting,
                                      const std::vector<double>& omegas,
                                      const std::vector<double>& zetas, int num_degree = 0,
                                      int ell = 0);

}  // namespace addfit
