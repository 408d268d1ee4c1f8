#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "addfit/errors.hpp"

namespace addfit {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Scalar denominator A(s) = 1 + a_1 s + ... + a_n s^n.
///
/// The constant term is fixed to one and not stored. A non-zero degree
/// requires a non-zero leading coefficient.
class ScalarDenominator {
public:
    ScalarDenominator() = default;
    explicit ScalarDenominator(std::vector<double> coefficients);

    /// Builds 1 + a_1 s + ... from its roots as prod_r (1 - s/r).
    /// Roots must be non-zero and closed under conjugation.
    static ScalarDenominator from_roots(const std::vector<cplx>& roots);

    int degree() const { return static_cast<int>(coeffs_.size()); }
    const std::vector<double>& coefficients() const { return coeffs_; }

    cplx operator()(cplx s) const;

private:
    std::vector<double> coeffs_;
};

/// Matrix numerator B(s) = B_0 + B_1 s + ... + B_m s^m, all n_y x n_u.
class MatrixNumerator {
public:
    MatrixNumerator() = default;
    explicit MatrixNumerator(std::vector<RMatrix> coefficients);

    int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
    Eigen::Index rows() const { return coeffs_.front().rows(); }
    Eigen::Index cols() const { return coeffs_.front().cols(); }
    const std::vector<RMatrix>& coefficients() const { return coeffs_; }

    CMatrix operator()(cplx s) const;

private:
    std::vector<RMatrix> coeffs_;
};

/// One additive term B(s) / (s^ell A(s)).
class Submodel {
public:
    Submodel(int ell, ScalarDenominator den, MatrixNumerator num);

    int ell() const { return ell_; }
    const ScalarDenominator& den() const { return den_; }
    const MatrixNumerator& num() const { return num_; }
    Eigen::Index n_y() const { return num_.rows(); }
    Eigen::Index n_u() const { return num_.cols(); }

    /// Number of real parameters n + (m+1) n_u n_y.
    Eigen::Index parameter_count() const;

private:
    int ell_;
    ScalarDenominator den_;
    MatrixNumerator num_;
};

/// Sum of K submodels sharing the n_y x n_u dimensions.
class AdditiveModel {
public:
    explicit AdditiveModel(std::vector<Submodel> submodels);

    std::size_t size() const { return submodels_.size(); }
    const Submodel& operator[](std::size_t i) const { return submodels_[i]; }
    const std::vector<Submodel>& submodels() const { return submodels_; }
    Eigen::Index n_y() const { return submodels_.front().n_y(); }
    Eigen::Index n_u() const { return submodels_.front().n_u(); }

private:
    std::vector<Submodel> submodels_;
};

struct ModalSpec {
    double omega = 1.0;  // rad/s
    double zeta = 0.01;
    RMatrix residue;
};

/// Evaluates B(j omega) / ((j omega)^ell A(j omega)) by Horner's scheme.
/// Throws SingularityError at omega = 0 with ell > 0 or on a root of A.
CMatrix eval_submodel(const Submodel& sub, double omega);
CMatrix eval_model(const AdditiveModel& model, double omega);

// --- parameter packing -----------------------------------------------------

struct SubmodelShape {
    int ell = 0;
    int den_degree = 0;
    int num_degree = 0;

    bool operator==(const SubmodelShape&) const = default;
};

/// Structure descriptor of the parameter vector: per-submodel (ell, n, m)
/// and the I/O dimensions.
struct ModelStructure {
    Eigen::Index n_u = 0;
    Eigen::Index n_y = 0;
    std::vector<SubmodelShape> shapes;

    Eigen::Index block_size(std::size_t i) const;
    Eigen::Index block_offset(std::size_t i) const;
    Eigen::Index parameter_count() const;

    bool operator==(const ModelStructure&) const = default;
};

ModelStructure structure_of(const AdditiveModel& model);

struct ParameterVector {
    RVector values;
    ModelStructure structure;
};

/// beta = [theta_1; ...; theta_K] with theta_i = [a_1..a_n, vec(B_0), ..,
/// vec(B_m)], vec() stacking columns.
ParameterVector pack_parameters(const AdditiveModel& model);
AdditiveModel unpack_parameters(const ParameterVector& beta);

// --- modal form ------------------------------------------------------------

/// A(s) = 1 + (2 zeta / omega) s + s^2 / omega^2, numerator = residue.
Submodel modal_to_submodel(const ModalSpec& spec);

/// Inverse of modal_to_submodel; requires ell = 0, n = 2, m = 0 and a
/// stable complex-conjugate root pair.
ModalSpec submodel_to_modal(const Submodel& sub);

// --- structural checks -----------------------------------------------------

struct StabilityResult {
    bool stable = true;
    std::vector<cplx> roots;
};

/// Roots of A via companion-matrix eigenvalues.
StabilityResult check_stability(const ScalarDenominator& den);

/// Default root-coincidence tolerance is tol_rel * (1 + max |root|).
inline constexpr double kDefaultRootTolerance = 1e-8;

enum class Violation {
    multiple_integrators,
    multiple_biproper,
    shared_denominator_roots,
    not_coprime,
    dimension_mismatch,
};

std::string to_string(Violation v);

struct ValidationIssue {
    Violation kind;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }
    bool has(Violation v) const;
};

ValidationReport validate_structure(const AdditiveModel& model,
                                    double tol_root = kDefaultRootTolerance);

/// Returns the model expressed in the normalized Laplace variable
/// s' = s / scale: a'_r = a_r scale^r, B'_r = B_r scale^(r - ell), so that
/// the rescaled model at omega / scale equals the original at omega.
AdditiveModel rescale_frequency(const AdditiveModel& model, double scale);

}  // namespace addfit
