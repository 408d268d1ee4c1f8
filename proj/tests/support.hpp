#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "addfit/estimator.hpp"
#include "addfit/frf.hpp"
#include "addfit/model.hpp"
#include "addfit/synth.hpp"

namespace testing {

using namespace addfit;

inline RMatrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n;
    RMatrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
    return m;
}

/// Random structurally valid model: an optional integrator block first,
/// then strictly proper blocks with distinct stable roots.
inline AdditiveModel random_model(std::mt19937_64& rng, int max_k = 4, Eigen::Index max_dim = 3) {
    std::uniform_int_distribution<int> kdist(1, max_k);
    std::uniform_int_distribution<Eigen::Index> ddist(1, max_dim);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int k = kdist(rng);
    const Eigen::Index ny = ddist(rng), nu = ddist(rng);

    std::vector<Submodel> subs;
    double wn = 0.4;
    for (int i = 0; i < k; ++i) {
        if (i == 0 && u(rng) < 0.4) {
            const int ell = 1 + static_cast<int>(u(rng) * 2.0);
            subs.emplace_back(ell, ScalarDenominator(), MatrixNumerator({random_matrix(rng, ny, nu)}));
            continue;
        }
        wn *= 1.6 + u(rng);
        std::vector<cplx> roots;
        if (u(rng) < 0.3) {
            roots = {cplx(-wn, 0.0)};
        } else {
            const double zeta = 0.05 + 0.5 * u(rng);
            const double wd = wn * std::sqrt(1.0 - zeta * zeta);
            roots = {cplx(-zeta * wn, wd), cplx(-zeta * wn, -wd)};
        }
        const int n = static_cast<int>(roots.size());
        const int m = static_cast<int>(u(rng) * n);  // 0 .. n-1
        std::vector<RMatrix> b;
        for (int r = 0; r <= m; ++r) b.push_back(random_matrix(rng, ny, nu) * std::pow(wn, -r));
        subs.emplace_back(0, ScalarDenominator::from_roots(roots), MatrixNumerator(std::move(b)));
    }
    return AdditiveModel(std::move(subs));
}

inline std::vector<double> log_grid_hz(double f0, double f1, std::size_t n) {
    std::vector<double> f(n);
    for (std::size_t k = 0; k < n; ++k) f[k] = f0 * std::pow(f1 / f0, static_cast<double>(k) / (n - 1));
    return f;
}

inline FrfDataset random_dataset(std::mt19937_64& rng, Eigen::Index ny, Eigen::Index nu, std::size_t n,
                                 double f0 = 0.02, double f1 = 3.0) {
    std::normal_distribution<double> nd;
    std::vector<CMatrix> g;
    for (std::size_t k = 0; k < n; ++k) {
        CMatrix m(ny, nu);
        for (Eigen::Index c = 0; c < nu; ++c)
            for (Eigen::Index r = 0; r < ny; ++r) m(r, c) = cplx(nd(rng), nd(rng));
        g.push_back(m);
    }
    return FrfDataset(log_grid_hz(f0, f1, n), std::move(g));
}

inline FrfDataset sample_model(const AdditiveModel& model, const std::vector<double>& f_hz) {
    std::vector<CMatrix> g;
    for (double f : f_hz) g.push_back(eval_model(model, 2.0 * std::numbers::pi * f));
    return FrfDataset(f_hz, std::move(g));
}

inline WeightingScheme random_diagonal_weighting(std::mt19937_64& rng, Eigen::Index dim, std::size_t n) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    WeightingScheme w;
    w.kind = WeightKind::custom;
    for (std::size_t k = 0; k < n; ++k) {
        CMatrix m = CMatrix::Zero(dim, dim);
        for (Eigen::Index d = 0; d < dim; ++d) m(d, d) = u(rng);
        w.filters.push_back(m);
    }
    return w;
}

inline double max_relative_error(const RVector& a, const RVector& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(std::abs(b(i)), 1e-300));
    }
    return worst;
}

inline AdditiveModel with_parameters(const AdditiveModel& like, const RVector& beta) {
    return unpack_parameters({beta, structure_of(like)});
}

/// Central-difference gradient of the cost with per-parameter steps.
inline RVector fd_gradient(const FrfDataset& data, const WeightingScheme& w, const AdditiveModel& model) {
    const RVector beta = pack_parameters(model).values;
    RVector g(beta.size());
    for (Eigen::Index p = 0; p < beta.size(); ++p) {
        const double h = 1e-6 * std::max(1.0, std::abs(beta(p)));
        RVector bp = beta, bm = beta;
        bp(p) += h;
        bm(p) -= h;
        g(p) = (cost(data, w, with_parameters(model, bp)) - cost(data, w, with_parameters(model, bm))) / (2 * h);
    }
    return g;
}

/// A refined-IV step for a single block B(s) / (s^ell A(s)) written out
/// from scratch: normal equations built entrywise in complex arithmetic,
/// no frequency scaling, LU solve.
inline AdditiveModel single_block_riv_step(const FrfDataset& data, const WeightingScheme& w,
                                           const AdditiveModel& model) {
    const Submodel& sub = model[0];
    const int n = sub.den().degree();
    const int m = sub.num().degree();
    const int ell = sub.ell();
    const Eigen::Index ny = data.n_y(), nu = data.n_u(), d = ny * nu;
    const Eigen::Index np = n + (m + 1) * d;
    const auto q = w.quadratic_forms();

    RMatrix lhs = RMatrix::Zero(np, np);
    RVector rhs = RVector::Zero(np);
    for (std::size_t k = 0; k < data.size(); ++k) {
        const cplx s(0.0, data.omega(k));
        cplx a = 1.0;
        for (int r = 0; r < n; ++r) a += sub.den().coefficients()[r] * std::pow(s, r + 1);
        CMatrix b = CMatrix::Zero(ny, nu);
        for (int r = 0; r <= m; ++r) b += sub.num().coefficients()[r].cast<cplx>() * std::pow(s, r);
        const CMatrix p = b / (std::pow(s, ell) * a);
        CVector gv(d), pv(d);
        for (Eigen::Index c = 0; c < nu; ++c)
            for (Eigen::Index r = 0; r < ny; ++r) {
                gv(c * ny + r) = data.response(k)(r, c);
                pv(c * ny + r) = p(r, c);
            }

        CMatrix phi = CMatrix::Zero(np, d), inst = CMatrix::Zero(np, d);
        for (int r = 0; r < n; ++r) {
            const cplx f = std::pow(s, r + 1) / a;
            for (Eigen::Index e = 0; e < d; ++e) {
                phi(r, e) = -f * gv(e);
                inst(r, e) = std::conj(-f * pv(e));
            }
        }
        for (int r = 0; r <= m; ++r) {
            const cplx f = std::pow(s, r) / (std::pow(s, ell) * a);
            for (Eigen::Index e = 0; e < d; ++e) {
                phi(n + r * d + e, e) = f;
                inst(n + r * d + e, e) = std::conj(f);
            }
        }
        const CVector y = gv / a;
        lhs += (inst * q[k] * phi.transpose()).real();
        rhs += (inst * q[k] * y).real();
    }
    const RVector theta = lhs.fullPivLu().solve(rhs);

    std::vector<double> den(theta.data(), theta.data() + n);
    std::vector<RMatrix> num;
    for (int r = 0; r <= m; ++r) {
        RMatrix br(ny, nu);
        for (Eigen::Index c = 0; c < nu; ++c)
            for (Eigen::Index rr = 0; rr < ny; ++rr) br(rr, c) = theta(n + r * d + c * ny + rr);
        num.push_back(br);
    }
    return AdditiveModel({Submodel(ell, ScalarDenominator(den), MatrixNumerator(num))});
}

inline double relative_parameter_error(const AdditiveModel& estimate, const AdditiveModel& truth) {
    return max_relative_error(pack_parameters(estimate).values, pack_parameters(truth).values);
}

}  // namespace testing
