#include "addfit/synth.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace addfit {

std::uint64_t CounterRng::mix(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t x = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double CounterRng::uniform(std::uint64_t counter) const {
    return static_cast<double>((mix(seed_, counter) >> 11) + 1) * 0x1.0p-53;
}

std::pair<double, double> CounterRng::normal_pair(std::uint64_t c) const {
    const double u0 = uniform(2 * c);
    const double u1 = uniform(2 * c + 1);
    const double rad = std::sqrt(-2.0 * std::log(u0));
    const double ang = 2.0 * std::numbers::pi * u1;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

SynthSpec benchmark_spec() {
    SynthSpec s;
    s.n_u = 2;
    s.n_y = 2;
    s.rigid_body = RMatrix{{200.0, 50.0}, {40.0, 150.0}};
    s.modes.push_back({2.0 * std::numbers::pi * 30.0, 0.02, RMatrix{{1.0, 0.6}, {-0.5, 0.8}}});
    s.modes.push_back({2.0 * std::numbers::pi * 120.0, 0.01, RMatrix{{0.5, -0.3}, {0.4, 0.7}}});
    s.f_start_hz = 1.0;
    s.f_stop_hz = 500.0;
    s.points = 1000;
    s.spacing = GridSpacing::log;
    return s;
}

void validate_spec(const SynthSpec& spec) {
    if (spec.n_u <= 0 || spec.n_y <= 0) throw StructureError("synth: n_u and n_y must be positive");
    if (!(spec.f_start_hz > 0.0)) throw DomainError("synth: f_start must be positive");
    if (!(spec.f_stop_hz > spec.f_start_hz)) throw DomainError("synth: f_stop must exceed f_start");
    if (spec.points < 2) throw DomainError("synth: grid needs at least 2 points");
    if (spec.noise != NoiseKind::none && !std::isfinite(spec.snr_db)) {
        throw DomainError("synth: snr_db must be finite when noise is enabled");
    }
    if (!std::isfinite(spec.delay)) throw DomainError("synth: delay must be finite");
    if (!spec.rigid_body && spec.modes.empty()) throw StructureError("synth: system has no terms");
    if (spec.rigid_body && (spec.rigid_body->rows() != spec.n_y || spec.rigid_body->cols() != spec.n_u)) {
        throw StructureError("synth: rigid-body residue must be n_y x n_u");
    }
    std::set<double> freqs;
    for (const auto& m : spec.modes) {
        if (m.residue.rows() != spec.n_y || m.residue.cols() != spec.n_u) {
            throw StructureError("synth: mode residue must be n_y x n_u");
        }
        if (!freqs.insert(m.omega).second) {
            throw StructureError("synth: duplicate mode frequency " + std::to_string(m.omega));
        }
    }
}

AdditiveModel build_truth(const SynthSpec& spec) {
    validate_spec(spec);
    std::vector<Submodel> subs;
    if (spec.rigid_body) subs.emplace_back(2, ScalarDenominator(), MatrixNumerator({*spec.rigid_body}));
    for (const auto& m : spec.modes) subs.push_back(modal_to_submodel(m));
    return AdditiveModel(std::move(subs));
}

std::vector<double> frequency_grid_hz(const SynthSpec& spec) {
    std::vector<double> f(spec.points);
    const double last = static_cast<double>(spec.points - 1);
    for (std::size_t k = 0; k < spec.points; ++k) {
        const double t = static_cast<double>(k) / last;
        f[k] = spec.spacing == GridSpacing::log
                   ? spec.f_start_hz * std::pow(spec.f_stop_hz / spec.f_start_hz, t)
                   : spec.f_start_hz + t * (spec.f_stop_hz - spec.f_start_hz);
    }
    f.front() = spec.f_start_hz;
    f.back() = spec.f_stop_hz;
    return f;
}

FrfDataset simulate_frf(const SynthSpec& spec) {
    const AdditiveModel truth = build_truth(spec);
    const std::vector<double> f = frequency_grid_hz(spec);
    std::vector<CMatrix> g;
    g.reserve(f.size());
    for (double fk : f) {
        const double w = 2.0 * std::numbers::pi * fk;
        CMatrix p = eval_model(truth, w);
        if (spec.delay != 0.0) p *= std::polar(1.0, -w * spec.delay);
        g.push_back(std::move(p));
    }

    FrfDataset clean(f, g);
    if (spec.noise == NoiseKind::none) {
        clean.metadata["noise"] = "none";
        clean.metadata["seed"] = std::to_string(spec.seed);
        return clean;
    }

    RMatrix rms = RMatrix::Zero(spec.n_y, spec.n_u);
    for (const auto& gk : g) rms += gk.cwiseAbs2();
    rms = (rms / static_cast<double>(g.size())).cwiseSqrt();
    const double ratio = std::pow(10.0, -spec.snr_db / 20.0);  // noise std / signal rms
    const CounterRng rng(spec.seed);
    for (std::size_t k = 0; k < g.size(); ++k) {
        for (Eigen::Index c = 0; c < spec.n_u; ++c) {
            for (Eigen::Index r = 0; r < spec.n_y; ++r) {
                const auto idx = (static_cast<std::uint64_t>(k) * spec.n_u + c) * spec.n_y + r;
                const auto [a, b] = rng.normal_pair(idx);
                const double sd = rms(r, c) * ratio / std::numbers::sqrt2;
                g[k](r, c) += cplx(sd * a, sd * b);
            }
        }
    }
    FrfDataset noisy(f, std::move(g));
    noisy.metadata["noise"] = "complex-gaussian, per-element SNR relative to noiseless element RMS";
    noisy.metadata["snr_db"] = std::to_string(spec.snr_db);
    noisy.metadata["seed"] = std::to_string(spec.seed);
    return noisy;
}

namespace {

RMatrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) throw ParseError("synth: matrix must be an array of rows");
    RMatrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != m.cols()) throw ParseError("synth: ragged matrix");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const RMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

SynthSpec synth_spec_from_json(const nlohmann::json& j, SynthSpec s) {
    try {
        if (j.contains("n_u")) s.n_u = j.at("n_u").get<Eigen::Index>();
        if (j.contains("n_y")) s.n_y = j.at("n_y").get<Eigen::Index>();
        if (j.contains("rigid_body")) {
            if (j.at("rigid_body").is_null()) {
                s.rigid_body.reset();
            } else {
                s.rigid_body = matrix_from_json(j.at("rigid_body"));
            }
        }
        if (j.contains("modes")) {
            s.modes.clear();
            for (const auto& jm : j.at("modes")) {
                ModalSpec m;
                if (jm.contains("f_hz")) {
                    m.omega = 2.0 * std::numbers::pi * jm.at("f_hz").get<double>();
                } else {
                    m.omega = jm.at("omega").get<double>();
                }
                m.zeta = jm.at("zeta").get<double>();
                m.residue = matrix_from_json(jm.at("residue"));
                s.modes.push_back(std::move(m));
            }
        }
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            if (g.contains("f_start")) s.f_start_hz = g.at("f_start").get<double>();
            if (g.contains("f_stop")) s.f_stop_hz = g.at("f_stop").get<double>();
            if (g.contains("points")) s.points = g.at("points").get<std::size_t>();
            if (g.contains("spacing")) {
                const auto v = g.at("spacing").get<std::string>();
                if (v != "linear" && v != "log") throw ParseError("synth.grid.spacing must be linear or log");
                s.spacing = v == "log" ? GridSpacing::log : GridSpacing::linear;
            }
        }
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            if (n.contains("kind")) {
                const auto v = n.at("kind").get<std::string>();
                if (v != "none" && v != "complex-gaussian") {
                    throw ParseError("synth.noise.kind must be none or complex-gaussian");
                }
                s.noise = v == "none" ? NoiseKind::none : NoiseKind::complex_gaussian;
            }
            if (n.contains("snr_db")) s.snr_db = n.at("snr_db").get<double>();
        }
        if (j.contains("delay")) s.delay = j.at("delay").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("synth section: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const SynthSpec& s) {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : s.modes) {
        modes.push_back({{"omega", m.omega}, {"zeta", m.zeta}, {"residue", matrix_to_json(m.residue)}});
    }
    return {{"n_u", s.n_u},
            {"n_y", s.n_y},
            {"rigid_body", s.rigid_body ? matrix_to_json(*s.rigid_body) : nlohmann::json(nullptr)},
            {"modes", std::move(modes)},
            {"grid",
             {{"f_start", s.f_start_hz},
              {"f_stop", s.f_stop_hz},
              {"points", s.points},
              {"spacing", s.spacing == GridSpacing::log ? "log" : "linear"}}},
            {"noise",
             {{"kind", s.noise == NoiseKind::none ? "none" : "complex-gaussian"}, {"snr_db", s.snr_db}}},
            {"delay", s.delay},
            {"seed", s.seed}};
}

BruteForceResult brute_force_siso_fit(const FrfDataset& data, const WeightingScheme& weighting,
                                      const std::vector<double>& omegas,
                                      const std::vector<double>& zetas, int num_degree, int ell) {
    if (data.n_u() != 1 || data.n_y() != 1) throw StructureError("brute-force oracle needs SISO data");
    if (omegas.empty() || zetas.empty()) throw DomainError("brute-force grid is empty");
    InitOptions init;
    init.weighted = true;
    std::optional<AdditiveModel> best;
    BruteForceResult out{AdditiveModel({Submodel(0, ScalarDenominator(), MatrixNumerator({RMatrix::Zero(1, 1)}))}),
                         std::numeric_limits<double>::infinity(), 0, {}};
    out.surface.assign(omegas.size(), std::vector<double>(zetas.size()));
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        for (std::size_t j = 0; j < zetas.size(); ++j) {
            const ScalarDenominator den({2.0 * zetas[j] / omegas[i], 1.0 / (omegas[i] * omegas[i])});
            const AdditiveModel m = init_numerators(data, weighting, {{ell, den, num_degree}}, init);
            const double c = cost(data, weighting, m);
            out.surface[i][j] = c;
            if (c < out.best_cost) {
                out.best_cost = c;
                out.best_index = i * zetas.size() + j;
                best = m;
            }
        }
    }
    out.best = *best;
    return out;
}

}  // namespace addfit
