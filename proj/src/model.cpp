#include "addfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace addfit {

namespace {

std::string shape_string(Eigen::Index r, Eigen::Index c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

}  // namespace

ScalarDenominator::ScalarDenominator(std::vector<double> coefficients)
    : coeffs_(std::move(coefficients)) {
    for (double a : coeffs_) {
        if (!std::isfinite(a)) throw DomainError("denominator coefficient is not finite");
    }
    if (!coeffs_.empty() && coeffs_.back() == 0.0) {
        throw StructureError("denominator leading coefficient a_n must be non-zero");
    }
}

ScalarDenominator ScalarDenominator::from_roots(const std::vector<cplx>& roots) {
    // prod (1 - s / r), accumulated in ascending powers
    std::vector<cplx> poly{cplx(1.0)};
    for (const cplx& r : roots) {
        if (r == cplx(0.0)) throw DomainError("denominator root at the origin");
        std::vector<cplx> next(poly.size() + 1, cplx(0.0));
        for (std::size_t p = 0; p < poly.size(); ++p) {
            next[p] += poly[p];
            next[p + 1] -= poly[p] / r;
        }
        poly = std::move(next);
    }
    std::vector<double> coeffs;
    coeffs.reserve(roots.size());
    for (std::size_t p = 1; p < poly.size(); ++p) coeffs.push_back(poly[p].real());
    return ScalarDenominator(std::move(coeffs));
}

cplx ScalarDenominator::operator()(cplx s) const {
    cplx acc(0.0);
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * s + *it;
    return 1.0 + acc * s;
}

MatrixNumerator::MatrixNumerator(std::vector<RMatrix> coefficients)
    : coeffs_(std::move(coefficients)) {
    if (coeffs_.empty()) throw StructureError("numerator needs at least B_0");
    const auto r = coeffs_.front().rows();
    const auto c = coeffs_.front().cols();
    if (r == 0 || c == 0) throw StructureError("numerator matrices must be non-empty");
    for (const auto& b : coeffs_) {
        if (b.rows() != r || b.cols() != c) {
            throw StructureError("numerator coefficient " + shape_string(b.rows(), b.cols()) +
                                 " does not match " + shape_string(r, c));
        }
        if (!b.allFinite()) throw DomainError("numerator coefficient is not finite");
    }
    if (coeffs_.size() > 1 && coeffs_.back().isZero(0.0)) {
        throw StructureError("numerator leading coefficient B_m must be non-zero");
    }
}

CMatrix MatrixNumerator::operator()(cplx s) const {
    CMatrix acc = CMatrix::Zero(rows(), cols());
    for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
        acc = acc * s + it->cast<cplx>();
    }
    return acc;
}

Submodel::Submodel(int ell, ScalarDenominator den, MatrixNumerator num)
    : ell_(ell), den_(std::move(den)), num_(std::move(num)) {
    if (ell_ < 0) throw StructureError("number of integrators must be non-negative");
    if (num_.coefficients().empty()) throw StructureError("submodel numerator is empty");
}

Eigen::Index Submodel::parameter_count() const {
    return den_.degree() + (num_.degree() + 1) * n_y() * n_u();
}

AdditiveModel::AdditiveModel(std::vector<Submodel> submodels)
    : submodels_(std::move(submodels)) {
    if (submodels_.empty()) throw StructureError("additive model needs at least one submodel");
    for (std::size_t i = 1; i < submodels_.size(); ++i) {
        if (submodels_[i].n_y() != n_y() || submodels_[i].n_u() != n_u()) {
            throw StructureError("submodel " + std::to_string(i) + " is " +
                                 shape_string(submodels_[i].n_y(), submodels_[i].n_u()) +
                                 ", expected " + shape_string(n_y(), n_u()));
        }
    }
}

CMatrix eval_submodel(const Submodel& sub, double omega) {
    const cplx s(0.0, omega);
    if (sub.ell() > 0 && omega == 0.0) {
        throw SingularityError("submodel with poles at the origin evaluated at omega = 0");
    }
    const cplx a = sub.den()(s);
    if (a == cplx(0.0)) throw SingularityError("denominator vanishes at the evaluation point");
    return sub.num()(s) / (std::pow(s, sub.ell()) * a);
}

CMatrix eval_model(const AdditiveModel& model, double omega) {
    CMatrix out = CMatrix::Zero(model.n_y(), model.n_u());
    for (const auto& sub : model.submodels()) out += eval_submodel(sub, omega);
    return out;
}

Eigen::Index ModelStructure::block_size(std::size_t i) const {
    const auto& sh = shapes.at(i);
    return sh.den_degree + (sh.num_degree + 1) * n_u * n_y;
}

Eigen::Index ModelStructure::block_offset(std::size_t i) const {
    Eigen::Index off = 0;
    for (std::size_t j = 0; j < i; ++j) off += block_size(j);
    return off;
}

Eigen::Index ModelStructure::parameter_count() const { return block_offset(shapes.size()); }

ModelStructure structure_of(const AdditiveModel& model) {
    ModelStructure st;
    st.n_u = model.n_u();
    st.n_y = model.n_y();
    for (const auto& sub : model.submodels()) {
        st.shapes.push_back({sub.ell(), sub.den().degree(), sub.num().degree()});
    }
    return st;
}

ParameterVector pack_parameters(const AdditiveModel& model) {
    ParameterVector beta{RVector(), structure_of(model)};
    beta.values.resize(beta.structure.parameter_count());
    Eigen::Index pos = 0;
    for (const auto& sub : model.submodels()) {
        for (double a : sub.den().coefficients()) beta.values[pos++] = a;
        for (const auto& b : sub.num().coefficients()) {
            // Eigen storage is column-major, so this is vec()
            beta.values.segment(pos, b.size()) = Eigen::Map<const RVector>(b.data(), b.size());
            pos += b.size();
        }
    }
    return beta;
}

AdditiveModel unpack_parameters(const ParameterVector& beta) {
    const auto& st = beta.structure;
    if (st.shapes.empty()) throw StructureError("structure descriptor has no submodels");
    if (st.n_u <= 0 || st.n_y <= 0) throw StructureError("structure descriptor has empty I/O");
    if (beta.values.size() != st.parameter_count()) {
        throw StructureError("parameter vector has " + std::to_string(beta.values.size()) +
                             " entries, structure requires " +
                             std::to_string(st.parameter_count()));
    }
    std::vector<Submodel> subs;
    Eigen::Index pos = 0;
    for (const auto& sh : st.shapes) {
        if (sh.den_degree < 0 || sh.num_degree < 0) throw StructureError("negative degree");
        std::vector<double> a(beta.values.data() + pos, beta.values.data() + pos + sh.den_degree);
        pos += sh.den_degree;
        std::vector<RMatrix> b;
        for (int r = 0; r <= sh.num_degree; ++r) {
            b.emplace_back(Eigen::Map<const RMatrix>(beta.values.data() + pos, st.n_y, st.n_u));
            pos += st.n_y * st.n_u;
        }
        subs.emplace_back(sh.ell, ScalarDenominator(std::move(a)), MatrixNumerator(std::move(b)));
    }
    return AdditiveModel(std::move(subs));
}

Submodel modal_to_submodel(const ModalSpec& spec) {
    if (!(spec.omega > 0.0) || !std::isfinite(spec.omega)) {
        throw DomainError("modal natural frequency must be positive");
    }
    if (!(spec.zeta > 0.0 && spec.zeta < 1.0)) {
        throw DomainError("modal damping ratio must lie in (0, 1)");
    }
    if (spec.residue.size() == 0) throw StructureError("modal residue is empty");
    ScalarDenominator den({2.0 * spec.zeta / spec.omega, 1.0 / (spec.omega * spec.omega)});
    return Submodel(0, std::move(den), MatrixNumerator({spec.residue}));
}

ModalSpec submodel_to_modal(const Submodel& sub) {
    if (sub.ell() != 0 || sub.den().degree() != 2 || sub.num().degree() != 0) {
        throw DomainError("submodel is not a second-order mode (need ell=0, n=2, m=0)");
    }
    const double a1 = sub.den().coefficients()[0];
    const double a2 = sub.den().coefficients()[1];
    if (!(a2 > 0.0) || !(a1 > 0.0) || a1 * a1 >= 4.0 * a2) {
        throw DomainError("denominator has no stable complex-conjugate root pair");
    }
    ModalSpec spec;
    spec.omega = 1.0 / std::sqrt(a2);
    spec.zeta = 0.5 * a1 * spec.omega;
    spec.residue = sub.num().coefficients().front();
    return spec;
}

StabilityResult check_stability(const ScalarDenominator& den) {
    StabilityResult res;
    const int n = den.degree();
    if (n == 0) return res;
    const auto& a = den.coefficients();
    // monic form: s^n + (a_{n-1}/a_n) s^{n-1} + ... + 1/a_n
    RMatrix companion = RMatrix::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    const double lead = a[n - 1];
    companion(0, n - 1) = -1.0 / lead;
    for (int i = 1; i < n; ++i) companion(i, n - 1) = -a[i - 1] / lead;
    Eigen::EigenSolver<RMatrix> es(companion, false);
    if (es.info() != Eigen::Success) throw SolverError("companion eigenvalue solve failed", 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        res.roots.push_back(es.eigenvalues()[i]);
        if (!(es.eigenvalues()[i].real() < 0.0)) res.stable = false;
    }
    std::sort(res.roots.begin(), res.roots.end(), [](cplx x, cplx y) {
        return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    return res;
}

std::string to_string(Violation v) {
    switch (v) {
        case Violation::multiple_integrators: return "multiple integrator submodels";
        case Violation::multiple_biproper: return "multiple biproper submodels";
        case Violation::shared_denominator_roots: return "shared denominator roots";
        case Violation::not_coprime: return "numerator and denominator share a root";
        case Violation::dimension_mismatch: return "dimension mismatch";
    }
    return "unknown";
}

bool ValidationReport::has(Violation v) const {
    return std::any_of(issues.begin(), issues.end(),
                       [v](const ValidationIssue& i) { return i.kind == v; });
}

ValidationReport validate_structure(const AdditiveModel& model, double tol_root) {
    ValidationReport rep;
    auto add = [&rep](Violation v, const std::string& detail) {
        rep.issues.push_back({v, to_string(v) + ": " + detail});
    };

    std::vector<std::size_t> integrators, biproper;
    std::vector<std::vector<cplx>> roots(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& sub = model[i];
        if (sub.n_y() != model.n_y() || sub.n_u() != model.n_u()) {
            add(Violation::dimension_mismatch, "submodel " + std::to_string(i));
        }
        if (sub.ell() > 0) integrators.push_back(i);
        if (sub.ell() == 0 && sub.num().degree() >= sub.den().degree()) biproper.push_back(i);
        roots[i] = check_stability(sub.den()).roots;
    }
    if (integrators.size() > 1) {
        add(Violation::multiple_integrators, std::to_string(integrators.size()) + " submodels");
    }
    if (biproper.size() > 1) {
        add(Violation::multiple_biproper, std::to_string(biproper.size()) + " submodels");
    }

    double max_mag = 0.0;
    for (const auto& rs : roots)
        for (const auto& r : rs) max_mag = std::max(max_mag, std::abs(r));
    const double tol = tol_root * (1.0 + max_mag);

    for (std::size_t i = 0; i < model.size(); ++i) {
        for (std::size_t j = i + 1; j < model.size(); ++j) {
            for (const auto& ri : roots[i]) {
                bool hit = false;
                for (const auto& rj : roots[j]) {
                    if (std::abs(ri - rj) <= tol) {
                        hit = true;
                        break;
                    }
                }
                if (hit) {
                    add(Violation::shared_denominator_roots,
                        "submodels " + std::to_string(i) + " and " + std::to_string(j));
                    break;
                }
            }
        }
    }

    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& num = model[i].num();
        std::vector<cplx> candidates = roots[i];
        if (model[i].ell() > 0) candidates.emplace_back(0.0);
        for (const auto& r : candidates) {
            double scale = 0.0;
            double pow_r = 1.0;
            for (const auto& b : num.coefficients()) {
                scale += b.cwiseAbs().maxCoeff() * pow_r;
                pow_r *= std::abs(r);
            }
            const double value = num(r).cwiseAbs().maxCoeff();
            if (value <= tol * std::max(scale, 1e-300)) {
                add(Violation::not_coprime, "submodel " + std::to_string(i));
                break;
            }
        }
    }
    return rep;
}

AdditiveModel rescale_frequency(const AdditiveModel& model, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("frequency scale must be positive");
    std::vector<Submodel> subs;
    subs.reserve(model.size());
    for (const auto& sub : model.submodels()) {
        std::vector<double> a = sub.den().coefficients();
        for (std::size_t r = 0; r < a.size(); ++r) a[r] *= std::pow(scale, static_cast<int>(r + 1));
        std::vector<RMatrix> b = sub.num().coefficients();
        for (std::size_t r = 0; r < b.size(); ++r) {
            b[r] *= std::pow(scale, static_cast<int>(r) - sub.ell());
        }
        subs.emplace_back(sub.ell(), ScalarDenominator(std::move(a)), MatrixNumerator(std::move(b)));
    }
    return AdditiveModel(std::move(subs));
}

}  // namespace addfit
