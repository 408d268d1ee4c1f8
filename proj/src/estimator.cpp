#include "addfit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

namespace addfit {

namespace {

// Frequency samples of a dataset, optionally on the normalized axis w / scale,
// together with the quadratic forms Q = W^H W.
struct Samples {
    std::vector<double> omega;
    const std::vector<CMatrix>* response = nullptr;
    std::vector<CMatrix> q;
    bool diagonal_q = true;
    Eigen::Index n_y = 0, n_u = 0;

    std::size_t size() const { return omega.size(); }
    const CMatrix& g(std::size_t k) const { return (*response)[k]; }
};

Samples make_samples(const FrfDataset& data, double scale, const WeightingScheme* weighting) {
    Samples s;
    s.omega = data.omegas();
    if (scale != 1.0) {
        for (double& w : s.omega) w /= scale;
    }
    s.response = &data.responses();
    s.n_y = data.n_y();
    s.n_u = data.n_u();
    if (weighting) {
        check_weighting(*weighting, data.size(), data.n_u() * data.n_y());
        s.q = weighting->quadratic_forms();
        s.diagonal_q = std::all_of(s.q.begin(), s.q.end(),
                                   [](const CMatrix& m) { return m.isDiagonal(0.0); });
    }
    return s;
}

void check_dims(const AdditiveModel& model, Eigen::Index n_y, Eigen::Index n_u) {
    if (model.n_y() != n_y || model.n_u() != n_u) {
        throw StructureError("model is " + std::to_string(model.n_y()) + "x" +
                             std::to_string(model.n_u()) + " but data is " + std::to_string(n_y) +
                             "x" + std::to_string(n_u));
    }
}

CVector vec(const CMatrix& m) { return Eigen::Map<const CVector>(m.data(), m.size()); }

struct PointEval {
    std::vector<CMatrix> parts;  // P_i(xi)
    std::vector<cplx> den;       // A_i(xi)
    CMatrix total;
};

PointEval evaluate(const AdditiveModel& model, double omega, std::size_t k) {
    PointEval ev;
    const cplx xi(0.0, omega);
    ev.total = CMatrix::Zero(model.n_y(), model.n_u());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& sub = model[i];
        const cplx a = sub.den()(xi);
        if (a == cplx(0.0) || (sub.ell() > 0 && omega == 0.0)) {
            throw SingularityError("submodel " + std::to_string(i) + " has a pole on frequency point " +
                                   std::to_string(k));
        }
        ev.den.push_back(a);
        ev.parts.push_back(sub.num()(xi) / (std::pow(xi, sub.ell()) * a));
        ev.total += ev.parts.back();
    }
    return ev;
}

// Rows of Phi_i (regressor) and Phi_hat_i (instrument) for one submodel at one
// frequency. gtilde = vec(G~_i), p = vec(P_i).
void fill_block(const Submodel& sub, cplx xi, cplx a, const CVector& gtilde, const CVector& p,
                InstrumentMode mode, Eigen::Ref<CMatrix> phi, Eigen::Ref<CMatrix> phihat) {
    const Eigen::Index d = gtilde.size();
    const int n = sub.den().degree();
    const int m = sub.num().degree();
    phi.setZero();
    phihat.setZero();
    cplx xr(1.0);
    for (int r = 1; r <= n; ++r) {
        xr *= xi;
        phi.row(r - 1) = (-xr / a) * gtilde.transpose();
        if (mode == InstrumentMode::riv) {
            // exact derivative: d vec(E) / d a_r = xi^r p / A
            phihat.row(r - 1) = ((-xr / a) * p).conjugate().transpose();
        }
    }
    const cplx base = 1.0 / (std::pow(xi, sub.ell()) * a);
    cplx xr_num = base;
    for (int r = 0; r <= m; ++r) {
        for (Eigen::Index e = 0; e < d; ++e) {
            phi(n + r * d + e, e) = xr_num;
            phihat(n + r * d + e, e) = std::conj(xr_num);
        }
        xr_num *= xi;
    }
    if (mode == InstrumentMode::sk) phihat = phi.conjugate();
}

struct PointTerms {
    CMatrix phi;      // n_beta x d
    CMatrix phihat;   // n_beta x d
    CMatrix upsilon;  // K x d
    CVector e;        // vec(E)
};

PointTerms point_terms(const AdditiveModel& model, const ModelStructure& st, double omega,
                       const CMatrix& g, std::size_t k, InstrumentMode mode) {
    const PointEval ev = evaluate(model, omega, k);
    const cplx xi(0.0, omega);
    const Eigen::Index d = g.size();
    PointTerms t;
    t.phi.resize(st.parameter_count(), d);
    t.phihat.resize(st.parameter_count(), d);
    t.upsilon.resize(static_cast<Eigen::Index>(model.size()), d);
    const CMatrix e = g - ev.total;
    t.e = vec(e);
    for (std::size_t i = 0; i < model.size(); ++i) {
        const CVector p = vec(ev.parts[i]);
        const CVector gtilde = t.e + p;
        const auto off = st.block_offset(i);
        const auto len = st.block_size(i);
        fill_block(model[i], xi, ev.den[i], gtilde, p, mode, t.phi.middleRows(off, len),
                   t.phihat.middleRows(off, len));
        t.upsilon.row(static_cast<Eigen::Index>(i)) = (gtilde / ev.den[i]).transpose();
    }
    return t;
}

double core_cost(const Samples& s, const AdditiveModel& model) {
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const CVector e = vec(s.g(k) - evaluate(model, s.omega[k], k).total);
        if (s.diagonal_q) {
            acc += (s.q[k].diagonal().real().array() * e.array().abs2()).sum();
        } else {
            acc += e.dot(s.q[k] * e).real();
        }
    }
    return acc / (2.0 * static_cast<double>(s.size()));
}

CMatrix apply_q(const Samples& s, std::size_t k, const CMatrix& x) {
    if (s.diagonal_q) return s.q[k].diagonal().asDiagonal() * x;
    return s.q[k] * x;
}

RVector core_gradient(const Samples& s, const AdditiveModel& model) {
    const ModelStructure st = structure_of(model);
    RVector acc = RVector::Zero(st.parameter_count());
    for (std::size_t k = 0; k < s.size(); ++k) {
        const PointTerms t = point_terms(model, st, s.omega[k], s.g(k), k, InstrumentMode::riv);
        acc += (t.phihat * apply_q(s, k, t.e)).real();
    }
    return acc / static_cast<double>(s.size());
}

OptimalityResidual make_residual(RVector v, const AdditiveModel& model) {
    OptimalityResidual r;
    r.norm = v.norm() / (1.0 + pack_parameters(model).values.norm());
    r.vector = std::move(v);
    return r;
}

// Solves S1 X = S2 after symmetric Jacobi equilibration of S1, using a
// column-pivoted QR. Returns X and a condition estimate of the equilibrated
// matrix.
std::pair<RMatrix, double> equilibrated_solve(RMatrix s1, const RMatrix& s2, double ridge,
                                              double max_condition) {
    const Eigen::Index n = s1.rows();
    RVector dscale(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = std::abs(s1(i, i));
        dscale[i] = v > 0.0 ? 1.0 / std::sqrt(v) : 1.0;
    }
    s1 = dscale.asDiagonal() * s1 * dscale.asDiagonal();
    if (ridge > 0.0) s1.diagonal().array() += ridge;
    Eigen::ColPivHouseholderQR<RMatrix> qr(s1);
    const auto& r = qr.matrixR();
    const double rmax = std::abs(r(0, 0));
    const double rmin = std::abs(r(n - 1, n - 1));
    const double condition = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
    if (!(condition <= max_condition)) {
        throw SolverError("normal matrix is singular or ill-conditioned (condition estimate " +
                              std::to_string(condition) + ")",
                          condition);
    }
    RMatrix x = qr.solve(dscale.asDiagonal() * s2);
    x = dscale.asDiagonal() * x;
    return {std::move(x), condition};
}

IterationResult core_iterate(const Samples& s, const AdditiveModel& model,
                             const EstimationOptions& options) {
    const ModelStructure st = structure_of(model);
    const Eigen::Index nb = st.parameter_count();
    const auto kk = static_cast<Eigen::Index>(model.size());
    RMatrix s1 = RMatrix::Zero(nb, nb);
    RMatrix s2 = RMatrix::Zero(nb, kk);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const PointTerms t = point_terms(model, st, s.omega[k], s.g(k), k, options.instrument);
        const CMatrix hw = apply_q(s, k, t.phihat.transpose()).transpose();  // Phi_hat Q
        s1.noalias() += (hw * t.phi.transpose()).real();
        s2.noalias() += (hw * t.upsilon.transpose()).real();
    }
    auto [blocks, condition] = equilibrated_solve(std::move(s1), s2, options.regularization,
                                                  options.max_condition);

    ParameterVector beta{RVector(nb), st};
    double off = 0.0;
    for (Eigen::Index i = 0; i < kk; ++i) {
        const auto o = st.block_offset(static_cast<std::size_t>(i));
        const auto len = st.block_size(static_cast<std::size_t>(i));
        beta.values.segment(o, len) = blocks.col(i).segment(o, len);
        off += blocks.col(i).head(o).squaredNorm() + blocks.col(i).tail(nb - o - len).squaredNorm();
    }
    AdditiveModel next = unpack_parameters(beta);
    if (options.stabilization == Stabilization::reflect) next = stabilize(next);
    return {std::move(next), std::move(blocks), std::sqrt(off), condition};
}

}  // namespace

// --- options ---------------------------------------------------------------

void apply_estimator_config(const nlohmann::json& section, EstimationOptions& o) {
    if (!section.is_object()) throw ParseError("estimator section must be an object");
    for (const auto& [key, value] : section.items()) {
        try {
            if (key == "max_iterations") {
                o.max_iterations = value.get<int>();
            } else if (key == "tol_beta") {
                o.tol_beta = value.get<double>();
            } else if (key == "tol_grad") {
                o.tol_grad = value.get<double>();
            } else if (key == "instrument") {
                const auto v = value.get<std::string>();
                if (v != "riv" && v != "sk") throw ParseError("estimator.instrument must be riv or sk");
                o.instrument = v == "riv" ? InstrumentMode::riv : InstrumentMode::sk;
            } else if (key == "stabilization") {
                const auto v = value.get<std::string>();
                if (v != "none" && v != "reflect") {
                    throw ParseError("estimator.stabilization must be none or reflect");
                }
                o.stabilization = v == "none" ? Stabilization::none : Stabilization::reflect;
            } else if (key == "regularization") {
                o.regularization = value.get<double>();
            } else if (key == "frequency_scaling") {
                o.frequency_scaling = value.get<bool>();
            } else if (key == "divergence_factor") {
                o.divergence_factor = value.get<double>();
            } else if (key == "max_condition") {
                o.max_condition = value.get<double>();
            } else {
                throw ParseError("unknown estimator option '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("estimator." + key + ": " + e.what());
        }
    }
    if (o.max_iterations < 0) throw ParseError("estimator.max_iterations must be >= 0");
    if (!(o.tol_beta > 0.0) || !(o.tol_grad > 0.0)) throw ParseError("estimator tolerances must be > 0");
    if (!(o.regularization >= 0.0)) throw ParseError("estimator.regularization must be >= 0");
}

nlohmann::json to_json(const EstimationOptions& o) {
    return {{"max_iterations", o.max_iterations},
            {"tol_beta", o.tol_beta},
            {"tol_grad", o.tol_grad},
            {"instrument", o.instrument == InstrumentMode::riv ? "riv" : "sk"},
            {"stabilization", o.stabilization == Stabilization::reflect ? "reflect" : "none"},
            {"regularization", o.regularization},
            {"frequency_scaling", o.frequency_scaling},
            {"divergence_factor", o.divergence_factor},
            {"max_condition", o.max_condition}};
}

// --- per-frequency quantities ----------------------------------------------

CMatrix residual(const FrfDataset& data, const AdditiveModel& model, std::size_t k) {
    check_dims(model, data.n_y(), data.n_u());
    return data.response(k) - evaluate(model, data.omega(k), k).total;
}

double cost(const FrfDataset& data, const WeightingScheme& weighting, const AdditiveModel& model) {
    check_dims(model, data.n_y(), data.n_u());
    return core_cost(make_samples(data, 1.0, &weighting), model);
}

CMatrix residual_plant(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                       std::size_t k) {
    check_dims(model, data.n_y(), data.n_u());
    if (i >= model.size()) throw StructureError("submodel index out of range");
    const PointEval ev = evaluate(model, data.omega(k), k);
    CMatrix out = data.response(k);
    for (std::size_t l = 0; l < model.size(); ++l) {
        if (l != i) out -= ev.parts[l];
    }
    return out;
}

CVector filtered_residual_output(const FrfDataset& data, const AdditiveModel& model,
                                 std::size_t i, std::size_t k) {
    const CVector gtilde = vec(residual_plant(data, model, i, k));
    return gtilde / model[i].den()(cplx(0.0, data.omega(k)));
}

namespace {

std::pair<CMatrix, CMatrix> single_block(const FrfDataset& data, const AdditiveModel& model,
                                         std::size_t i, std::size_t k) {
    check_dims(model, data.n_y(), data.n_u());
    if (i >= model.size()) throw StructureError("submodel index out of range");
    const double omega = data.omega(k);
    const PointEval ev = evaluate(model, omega, k);
    const CVector p = vec(ev.parts[i]);
    const CVector gtilde = vec(data.response(k) - ev.total) + p;
    const auto len = model[i].parameter_count();
    CMatrix phi(len, gtilde.size()), phihat(len, gtilde.size());
    fill_block(model[i], cplx(0.0, omega), ev.den[i], gtilde, p, InstrumentMode::riv, phi, phihat);
    return {std::move(phi), std::move(phihat)};
}

}  // namespace

CMatrix regressor_block(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                        std::size_t k) {
    return single_block(data, model, i, k).first;
}

CMatrix instrument_block(const FrfDataset& data, const AdditiveModel& model, std::size_t i,
                         std::size_t k) {
    return single_block(data, model, i, k).second;
}

RegressionWorkspace assemble_stacked(const FrfDataset& data, const AdditiveModel& model,
                                     InstrumentMode mode) {
    check_dims(model, data.n_y(), data.n_u());
    const ModelStructure st = structure_of(model);
    RegressionWorkspace ws;
    for (std::size_t k = 0; k < data.size(); ++k) {
        PointTerms t = point_terms(model, st, data.omega(k), data.response(k), k, mode);
        ws.regressor.push_back(std::move(t.phi));
        ws.instrument.push_back(std::move(t.phihat));
        ws.output.push_back(std::move(t.upsilon));
    }
    return ws;
}

OptimalityResidual optimality_residual(const FrfDataset& data, const WeightingScheme& weighting,
                                       const AdditiveModel& model) {
    check_dims(model, data.n_y(), data.n_u());
    return make_residual(core_gradient(make_samples(data, 1.0, &weighting), model), model);
}

OptimalityResidual normalized_optimality_residual(const FrfDataset& data,
                                                  const WeightingScheme& weighting,
                                                  const AdditiveModel& model, double scale) {
    check_dims(model, data.n_y(), data.n_u());
    const AdditiveModel scaled = rescale_frequency(model, scale);
    return make_residual(core_gradient(make_samples(data, scale, &weighting), scaled), scaled);
}

double median_omega(const FrfDataset& data) {
    std::vector<double> w = data.omegas();
    const auto mid = w.size() / 2;
    if (w.size() % 2 == 1) return w[mid];
    return 0.5 * (w[mid - 1] + w[mid]);
}

// --- initialization ---------------------------------------------------------

AdditiveModel init_numerators(const FrfDataset& data, const WeightingScheme& weighting,
                              const std::vector<FixedDenominator>& denominators,
                              const InitOptions& options) {
    if (denominators.empty()) throw StructureError("init_numerators needs at least one denominator");
    const double scale = options.frequency_scaling ? median_omega(data) : 1.0;
    const Samples s = make_samples(data, scale, options.weighted ? &weighting : nullptr);
    const Eigen::Index d = data.n_u() * data.n_y();
    const auto n = static_cast<Eigen::Index>(data.size());

    // Scalar basis functions xi^r / (xi^ell A(xi)) on the normalized axis.
    std::vector<ScalarDenominator> dens;
    Eigen::Index p = 0;
    for (const auto& fd : denominators) {
        if (fd.ell < 0 || fd.num_degree < 0) throw StructureError("negative degree in denominator list");
        std::vector<double> a = fd.den.coefficients();
        for (std::size_t r = 0; r < a.size(); ++r) a[r] *= std::pow(scale, static_cast<int>(r + 1));
        dens.emplace_back(std::move(a));
        p += fd.num_degree + 1;
    }
    CMatrix basis(n, p);
    for (Eigen::Index k = 0; k < n; ++k) {
        const cplx xi(0.0, s.omega[static_cast<std::size_t>(k)]);
        Eigen::Index col = 0;
        for (std::size_t i = 0; i < denominators.size(); ++i) {
            const cplx a = dens[i](xi);
            if (a == cplx(0.0) || (denominators[i].ell > 0 && xi == cplx(0.0))) {
                throw SingularityError("fixed denominator " + std::to_string(i) +
                                       " has a pole on frequency point " + std::to_string(k));
            }
            cplx v = 1.0 / (std::pow(xi, denominators[i].ell) * a);
            for (int r = 0; r <= denominators[i].num_degree; ++r) {
                basis(k, col++) = v;
                v *= xi;
            }
        }
    }

    // eta(c, e): coefficient c of vec(G) entry e
    RMatrix eta(p, d);
    // normal = true: `a` is already the normal matrix.
    auto solve_ls = [&](const RMatrix& a, const RMatrix& rhs, bool normal) -> RMatrix {
        RVector cs(a.cols());
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            const double nrm = a.col(c).norm();
            cs[c] = nrm > 0.0 ? 1.0 / nrm : 1.0;
        }
        const RMatrix as = a * cs.asDiagonal();
        Eigen::ColPivHouseholderQR<RMatrix> qr(as);
        const auto& r = qr.matrixR();
        const double rmin = std::abs(r(a.cols() - 1, a.cols() - 1));
        const double cond_r = rmin > 0.0 ? std::abs(r(0, 0)) / rmin : std::numeric_limits<double>::infinity();
        const double cond_normal = normal ? cond_r : cond_r * cond_r;
        if (!(cond_normal <= options.max_condition) ||
            a.rows() < a.cols()) {
            throw SolverError("numerator initialization is rank deficient (normal-matrix condition " +
                                  std::to_string(cond_normal) + ")",
                              cond_normal);
        }
        return cs.asDiagonal() * qr.solve(rhs);
    };

    if (!options.weighted || s.diagonal_q) {
        for (Eigen::Index e = 0; e < d; ++e) {
            RMatrix a(2 * n, p);
            RMatrix rhs(2 * n, 1);
            for (Eigen::Index k = 0; k < n; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                const double w = options.weighted ? std::sqrt(std::max(0.0, s.q[ku](e, e).real())) : 1.0;
                const cplx g = s.g(ku)(e % data.n_y(), e / data.n_y());
                a.row(k) = w * basis.row(k).real();
                a.row(n + k) = w * basis.row(k).imag();
                rhs(k, 0) = w * g.real();
                rhs(n + k, 0) = w * g.imag();
            }
            eta.col(e) = solve_ls(a, rhs, false);
        }
    } else {
        // Coupled entries: accumulate the normal equations over all of eta.
        const Eigen::Index ne = p * d;
        RMatrix m = RMatrix::Zero(ne, ne);
        RVector rhs = RVector::Zero(ne);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            CMatrix phi = CMatrix::Zero(ne, d);  // row c*d + e
            for (Eigen::Index c = 0; c < p; ++c)
                for (Eigen::Index e = 0; e < d; ++e) phi(c * d + e, e) = basis(k, c);
            const CMatrix hq = phi.conjugate() * s.q[ku];
            m += (hq * phi.transpose()).real();
            rhs += (hq * vec(s.g(ku))).real();
        }
        const RMatrix sol = solve_ls(m, rhs, true);
        for (Eigen::Index c = 0; c < p; ++c)
            for (Eigen::Index e = 0; e < d; ++e) eta(c, e) = sol(c * d + e, 0);
    }

    std::vector<Submodel> subs;
    Eigen::Index col = 0;
    for (const auto& fd : denominators) {
        std::vector<RMatrix> b;
        for (int r = 0; r <= fd.num_degree; ++r) {
            RVector row = eta.row(col++).transpose();
            RMatrix br = Eigen::Map<const RMatrix>(row.data(), data.n_y(), data.n_u());
            b.push_back(br * std::pow(scale, fd.ell - r));
        }
        subs.emplace_back(fd.ell, fd.den, MatrixNumerator(std::move(b)));
    }
    return AdditiveModel(std::move(subs));
}

// --- iteration -------------------------------------------------------------

AdditiveModel stabilize(const AdditiveModel& model) {
    std::vector<Submodel> subs;
    subs.reserve(model.size());
    for (const auto& sub : model.submodels()) {
        const StabilityResult st = check_stability(sub.den());
        if (st.stable) {
            subs.push_back(sub);
            continue;
        }
        std::vector<cplx> roots = st.roots;
        for (auto& r : roots) {
            if (r.real() >= 0.0) r = -std::conj(r);
        }
        subs.emplace_back(sub.ell(), ScalarDenominator::from_roots(roots), sub.num());
    }
    return AdditiveModel(std::move(subs));
}

IterationResult iterate_once(const FrfDataset& data, const WeightingScheme& weighting,
                             const AdditiveModel& model, const EstimationOptions& options) {
    check_dims(model, data.n_y(), data.n_u());
    const double scale = options.frequency_scaling ? median_omega(data) : 1.0;
    const Samples s = make_samples(data, scale, &weighting);
    IterationResult res = core_iterate(s, rescale_frequency(model, scale), options);
    if (scale != 1.0) {
        res.model = rescale_frequency(res.model, 1.0 / scale);
        // block_parameters stay in normalized units
    }
    return res;
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::parameter_change: return "parameter_change";
        case Termination::stationarity: return "stationarity";
        case Termination::max_iterations: return "max_iterations";
        case Termination::solver_failure: return "solver_failure";
    }
    return "unknown";
}

nlohmann::json EstimationReport::to_json() const {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& b : beta_trajectory) traj.push_back(std::vector<double>(b.data(), b.data() + b.size()));
    nlohmann::json j = {{"iterations", iterations},
                        {"converged", converged},
                        {"reason", addfit::to_string(reason)},
                        {"cost", cost},
                        {"grad_norm", grad_norm},
                        {"off_block_norm", off_block_norm},
                        {"beta_trajectory", std::move(traj)}};
    if (!message.empty()) j["message"] = message;
    return j;
}

EstimationResult estimate(const FrfDataset& data, const WeightingScheme& weighting,
                          const AdditiveModel& initial, const EstimationOptions& options) {
    check_dims(initial, data.n_y(), data.n_u());
    if (options.max_iterations < 0) throw DomainError("max_iterations must be non-negative");
    const double scale = options.frequency_scaling ? median_omega(data) : 1.0;
    const Samples s = make_samples(data, scale, &weighting);

    AdditiveModel current = rescale_frequency(initial, scale);
    EstimationReport rep;
    auto record = [&](const AdditiveModel& scaled) {
        rep.cost.push_back(core_cost(s, scaled));
        rep.grad_norm.push_back(make_residual(core_gradient(s, scaled), scaled).norm);
        rep.beta_trajectory.push_back(pack_parameters(rescale_frequency(scaled, 1.0 / scale)).values);
    };
    record(current);
    const double initial_cost = rep.cost.front();
    // Costs at rounding level relative to the data never count as divergence.
    double data_cost = 0.0;
    const std::vector<CMatrix> q = weighting.quadratic_forms();
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto g = data.response(k).reshaped();
        data_cost += (g.adjoint() * q[k] * g).value().real();
    }
    data_cost /= 2.0 * static_cast<double>(data.size());
    const double divergence_level = options.divergence_factor * std::max(initial_cost, 1e-20 * data_cost);

    if (options.max_iterations == 0 && rep.grad_norm.front() < options.tol_grad) {
        rep.converged = true;
        rep.reason = Termination::stationarity;
    }

    RVector beta = pack_parameters(current).values;
    for (int j = 0; j < options.max_iterations; ++j) {
        IterationResult step{current, {}, 0.0, 0.0};
        try {
            step = core_iterate(s, current, options);
        } catch (const SolverError& e) {
            rep.reason = Termination::solver_failure;
            rep.message = e.what();
            break;
        } catch (const SingularityError& e) {
            rep.reason = Termination::solver_failure;
            rep.message = e.what();
            break;
        }
        current = std::move(step.model);
        rep.iterations = j + 1;
        rep.off_block_norm.push_back(step.off_block_norm);
        record(current);

        if (rep.cost.back() > divergence_level) {
            rep.reason = Termination::max_iterations;
            rep.message = "diverged";
            throw DivergenceError("estimation diverged: cost grew from " + std::to_string(initial_cost) +
                                      " to " + std::to_string(rep.cost.back()),
                                  rep);
        }

        const RVector next = pack_parameters(current).values;
        const double change = (next - beta).norm() / std::max(beta.norm(), 1e-300);
        beta = next;
        const bool stationary = rep.grad_norm.back() < options.tol_grad;
        if (change < options.tol_beta && (options.instrument == InstrumentMode::sk || stationary)) {
            rep.converged = true;
            rep.reason = Termination::parameter_change;
            break;
        }
        if (stationary) {
            rep.converged = true;
            rep.reason = Termination::stationarity;
            break;
        }
    }
    if (rep.iterations == 0) return {initial, std::move(rep)};
    return {rescale_frequency(current, 1.0 / scale), std::move(rep)};
}

}  // namespace addfit
