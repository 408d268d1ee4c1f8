#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "addfit/model.hpp"

namespace addfit {

enum class FrequencyUnit { hz, rad_per_s };
enum class FrfFormat { csv, json };

FrfFormat frf_format_from_string(const std::string& s);
std::string to_string(FrfFormat f);

/// N complex n_y x n_u response matrices on a strictly increasing, positive
/// frequency grid. The grid is stored in Hz (the on-disk unit); omega()
/// returns rad/s.
class FrfDataset {
public:
    FrfDataset(std::vector<double> freq_hz, std::vector<CMatrix> responses);

    std::size_t size() const { return freq_hz_.size(); }
    Eigen::Index n_y() const { return responses_.front().rows(); }
    Eigen::Index n_u() const { return responses_.front().cols(); }

    double freq_hz(std::size_t k) const { return freq_hz_[k]; }
    double omega(std::size_t k) const;
    const CMatrix& response(std::size_t k) const { return responses_[k]; }

    const std::vector<double>& frequencies_hz() const { return freq_hz_; }
    std::vector<double> omegas() const;
    const std::vector<CMatrix>& responses() const { return responses_; }

    bool delay_compensated = false;
    FrequencyUnit source_unit = FrequencyUnit::hz;
    /// Free-form provenance (noise convention, seed, ...). Kept by the JSON
    /// format only.
    std::map<std::string, std::string> metadata;

private:
    std::vector<double> freq_hz_;
    std::vector<CMatrix> responses_;
};

// CSV: header "freq_hz,out,in,re,im", 1-based indices, records sorted by
// (freq, in, out).
// JSON: {"unit": "hz", "n_u", "n_y", "points": [{"f", "G_re", "G_im"}]} with
// row-major matrices; unit "rad/s" is accepted on input.
FrfDataset load_frf(const std::filesystem::path& path, FrfFormat format);
void save_frf(const FrfDataset& data, const std::filesystem::path& path, FrfFormat format);
FrfDataset parse_frf_csv(const std::string& text);
FrfDataset parse_frf_json(const std::string& text);
std::string frf_to_csv(const FrfDataset& data);
std::string frf_to_json(const FrfDataset& data);

/// G'(w) = G(w) exp(+j w tau): removes a pure delay of tau seconds.
FrfDataset delay_compensate(const FrfDataset& data, double tau);

/// Keeps f_min <= f <= f_max (Hz). Throws DomainError when nothing remains.
FrfDataset band_select(const FrfDataset& data, double f_min_hz,
                       double f_max_hz = std::numeric_limits<double>::infinity());

// --- CMIF ------------------------------------------------------------------

struct CmifPeak {
    std::size_t index = 0;
    double value = 0.0;
    std::size_t track = 0;  // 0 = largest singular value
};

struct CmifResult {
    std::vector<double> freq_hz;
    /// N x min(n_u, n_y), squared singular values, descending along a row.
    RMatrix values;
    std::vector<CmifPeak> peaks;
};

CmifResult compute_cmif(const FrfDataset& data);

struct PeakOptions {
    int window = 2;                // local max over 2w+1 points
    double prominence_ratio = 10;  // prominence >= ratio * median(track 0)
    double default_zeta = 0.01;
    int tracks = 1;                // number of singular-value tracks searched
};

/// Local maxima with sufficient topographic prominence. Peaks on lower
/// tracks within the window of an already found peak are dropped.
std::vector<CmifPeak> detect_peaks(const CmifResult& cmif, const PeakOptions& options = {});

struct ModeSeed {
    double omega = 0.0;  // rad/s
    double zeta = 0.01;
    CmifPeak peak;
};

/// Detects peaks and turns each one into (omega at the peak, default zeta),
/// sorted by frequency. Needs at least three points.
std::vector<ModeSeed> pick_modes(const CmifResult& cmif, const PeakOptions& options = {});

// --- weighting -------------------------------------------------------------

enum class WeightKind { identity, inverse_magnitude, custom };

std::string to_string(WeightKind k);
WeightKind weight_kind_from_string(const std::string& s);

/// Per-frequency Hermitian PSD weighting filters W(w_k) of size
/// (n_u n_y) x (n_u n_y) acting on vec(E). The induced squared norm is
/// ||x||_W^2 = ||W x||^2 = x^H W^H W x, so an inverse-magnitude filter turns
/// the absolute residual into a relative one.
struct WeightingScheme {
    WeightKind kind = WeightKind::identity;
    std::vector<CMatrix> filters;

    /// Q = W^H W per frequency.
    std::vector<CMatrix> quadratic_forms() const;
};

/// Throws DomainError unless every filter is Hermitian (1e-12) and PSD.
void check_weighting(const WeightingScheme& w, std::size_t n, Eigen::Index dim);

WeightingScheme identity_weighting(Eigen::Index n_u, Eigen::Index n_y, std::size_t n);

/// W = diag(vec(max(|G|, floor)))^-1. Throws DomainError when an entry is zero
/// and floor is zero.
WeightingScheme inverse_magnitude_weighting(const FrfDataset& data, double floor);

/// 1e-9 * max |G| over the dataset.
double default_magnitude_floor(const FrfDataset& data);

}  // namespace addfit
