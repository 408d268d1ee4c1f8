#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "addfit/frf.hpp"
#include "addfit/model.hpp"

namespace addfit {

enum class InstrumentMode { riv, sk };
enum class Stabilization { none, reflect };

struct EstimationOptions {
    int max_iterations = 100;
    double tol_beta = 1e-9;   // relative parameter change
    double tol_grad = 1e-8;   // scale-normalized stationarity residual
    InstrumentMode instrument = InstrumentMode::riv;
    Stabilization stabilization = Stabilization::reflect;
    double regularization = 0.0;  // ridge term added to the normalized S1
    bool frequency_scaling = true;
    double divergence_factor = 1e6;
    double max_condition = 1e14;
};

/// Reads the keys of an `estimator` config section onto `options`; unknown
/// keys are rejected.
void apply_estimator_config(const nlohmann::json& section, EstimationOptions& options);
nlohmann::json to_json(const EstimationOptions& options);

// --- per-frequency quantities ----------------------------------------------

/// E(w_k) = G(w_k) - P(j w_k).
CMatrix residual(const FrfDataset& data, const AdditiveModel& model, std::size_t k);

/// (1/2N) sum_k ||vec E(w_k)||_W^2.
double cost(const FrfDataset& data, const WeightingScheme& weighting, const AdditiveModel& model);

/// G(w_k) minus every submodel except submodel i.
CMatrix residual_plant(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                       std::size_t k);

/// g~_{f,i} = vec(G~_i) / A_i(j w_k).
CVector filtered_residual_output(const FrfDataset& data, const AdditiveModel& model,
                                 std::size_t i, std::size_t k);

/// Pseudolinear regressor Phi_i(w_k), (n_i + (m_i+1) n_u n_y) x (n_u n_y), such
/// that vec(E) = g~_{f,i} - Phi_i^T theta_i.
CMatrix regressor_block(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                        std::size_t k);

/// Instrument Phi_hat_i(w_k) = -(d vec(E) / d theta_i^T)^H.
CMatrix instrument_block(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                         std::size_t k);

/// Stacked Phi, Phi_hat (n_beta x n_u n_y) and Upsilon (K x n_u n_y) at every
/// frequency.
struct RegressionWorkspace {
    std::vector<CMatrix> regressor;
    std::vector<CMatrix> instrument;
    std::vector<CMatrix> output;
};

RegressionWorkspace assemble_stacked(const FrfDataset& data, const AdditiveModel& model,
                                     InstrumentMode mode = InstrumentMode::riv);

struct OptimalityResidual {
    RVector vector;  // (1/N) sum Re{Phi_hat W vec(E)} = -grad(cost)
    double norm = 0.0;  // ||vector|| / (1 + ||beta||)
};

/// Stationarity residual in physical parameters.
OptimalityResidual optimality_residual(const FrfDataset& data, const WeightingScheme& weighting,
                                       const AdditiveModel& model);

/// Same quantity expressed in the parameters of rescale_frequency(model,
/// scale); this is what the estimator's tol_grad is compared against.
OptimalityResidual normalized_optimality_residual(const FrfDataset& data,
                                                  const WeightingScheme& weighting,
                                                  const AdditiveModel& model, double scale);

/// Median grid frequency in rad/s, the default normalization scale.
double median_omega(const FrfDataset& data);

// --- initialization ---------------------------------------------------------

struct FixedDenominator {
    int ell = 0;
    ScalarDenominator den;
    int num_degree = 0;
};

struct InitOptions {
    bool weighted = false;  // false: plain 2-norm fit
    bool frequency_scaling = true;
    double max_condition = 1e14;  // on the normal matrix
};

/// Linear least-squares fit of all numerator coefficients with the
/// denominators held fixed.
AdditiveModel init_numerators(const FrfDataset& data, const WeightingScheme& weighting,
                              const std::vector<FixedDenominator>& denominators,
                              const InitOptions& options = {});

// --- iteration -------------------------------------------------------------

struct IterationResult {
    AdditiveModel model;
    RMatrix block_parameters;   // full n_beta x K solution before extraction
    double off_block_norm = 0;  // Frobenius norm of the discarded entries
    double condition = 0;       // estimate for the equilibrated S1
};

/// One refined-IV (or SK) update: solves sum Re{Phi_hat W Phi^T} B =
/// sum Re{Phi_hat W Upsilon^T} and keeps the block diagonal of B.
IterationResult iterate_once(const FrfDataset& data, const WeightingScheme& weighting,
                             const AdditiveModel& model, const EstimationOptions& options = {});

/// Reflects unstable roots about the imaginary axis (r -> -conj(r)).
AdditiveModel stabilize(const AdditiveModel& model);

enum class Termination { parameter_change, stationarity, max_iterations, solver_failure };
std::string to_string(Termination t);

struct EstimationReport {
    int iterations = 0;
    bool converged = false;
    Termination reason = Termination::max_iterations;
    std::string message;
    std::vector<double> cost;
    std::vector<double> grad_norm;
    std::vector<RVector> beta_trajectory;
    std::vector<double> off_block_norm;

    nlohmann::json to_json() const;
};

struct EstimationResult {
    AdditiveModel model;
    EstimationReport report;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, EstimationReport report)
        : Error(what), report_(std::move(report)) {}
    const EstimationReport& report() const { return report_; }

private:
    EstimationReport report_;
};

EstimationResult estimate(const FrfDataset& data, const WeightingScheme& weighting,
                          const AdditiveModel& initial, const EstimationOptions& options = {});

}  // namespace addfit
