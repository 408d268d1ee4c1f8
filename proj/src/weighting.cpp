#include <Eigen/Eigenvalues>

#include "addfit/frf.hpp"

namespace addfit {

std::string to_string(WeightKind k) {
    switch (k) {
        case WeightKind::identity: return "identity";
        case WeightKind::inverse_magnitude: return "inverse-magnitude";
        case WeightKind::custom: return "custom";
    }
    return "custom";
}

WeightKind weight_kind_from_string(const std::string& s) {
    if (s == "identity") return WeightKind::identity;
    if (s == "inverse-magnitude" || s == "inverse_magnitude") return WeightKind::inverse_magnitude;
    if (s == "custom") return WeightKind::custom;
    throw DomainError("unknown weighting kind '" + s + "'");
}

std::vector<CMatrix> WeightingScheme::quadratic_forms() const {
    std::vector<CMatrix> q;
    q.reserve(filters.size());
    for (const auto& w : filters) {
        if (w.isDiagonal(0.0)) {
            q.emplace_back(w.diagonal().cwiseAbs2().cast<cplx>().asDiagonal());
        } else {
            q.emplace_back(w.adjoint() * w);
        }
    }
    return q;
}

void check_weighting(const WeightingScheme& w, std::size_t n, Eigen::Index dim) {
    if (w.filters.size() != n) {
        throw StructureError("weighting has " + std::to_string(w.filters.size()) +
                             " matrices, dataset has " + std::to_string(n) + " points");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& m = w.filters[k];
        if (m.rows() != dim || m.cols() != dim) {
            throw StructureError("weighting matrix " + std::to_string(k) + " has wrong size");
        }
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw DomainError("weighting matrix " + std::to_string(k) + " is not Hermitian");
        }
        if (m.isDiagonal(0.0)) {
            if (m.diagonal().real().minCoeff() < -1e-12 * scale) {
                throw DomainError("weighting matrix " + std::to_string(k) + " is not PSD");
            }
        } else {
            Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
                throw DomainError("weighting matrix " + std::to_string(k) + " is not PSD");
            }
        }
    }
}

WeightingScheme identity_weighting(Eigen::Index n_u, Eigen::Index n_y, std::size_t n) {
    WeightingScheme w;
    w.kind = WeightKind::identity;
    w.filters.assign(n, CMatrix::Identity(n_u * n_y, n_u * n_y));
    return w;
}

WeightingScheme inverse_magnitude_weighting(const FrfDataset& data, double floor) {
    if (!(floor >= 0.0)) throw DomainError("magnitude floor must be non-negative");
    WeightingScheme w;
    w.kind = WeightKind::inverse_magnitude;
    w.filters.reserve(data.size());
    const Eigen::Index dim = data.n_u() * data.n_y();
    for (std::size_t k = 0; k < data.size(); ++k) {
        const CMatrix& g = data.response(k);
        CMatrix m = CMatrix::Zero(dim, dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            // column-major element i is entry i of vec(G)
            const double mag = std::max(std::abs(g(i % g.rows(), i / g.rows())), floor);
            if (mag == 0.0) {
                throw DomainError("zero FRF magnitude at point " + std::to_string(k) +
                                  " with zero floor gives a singular weight");
            }
            m(i, i) = 1.0 / mag;
        }
        w.filters.push_back(std::move(m));
    }
    return w;
}

double default_magnitude_floor(const FrfDataset& data) {
    double mx = 0.0;
    for (const auto& g : data.responses()) mx = std::max(mx, g.cwiseAbs().maxCoeff());
    return 1e-9 * mx;
}

}  // namespace addfit
