// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance <path-to-addfit-binary> <scratch-dir>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "addfit/estimator.hpp"
#include "addfit/model_io.hpp"
#include "support.hpp"

using namespace addfit;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

CVector vec(const CMatrix& m) { return Eigen::Map<const CVector>(m.data(), m.size()); }

std::vector<FixedDenominator> perturbed_denominators(const SynthSpec& spec, std::vector<double> factors,
                                                     double zeta) {
    std::vector<FixedDenominator> dens;
    if (spec.rigid_body) dens.push_back({2, ScalarDenominator(), 0});
    for (std::size_t i = 0; i < spec.modes.size(); ++i) {
        dens.push_back({0, modal_to_submodel({spec.modes[i].omega * factors[i], zeta, spec.modes[i].residue}).den(), 0});
    }
    return dens;
}

Verdict pseudolinear_identity() {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<std::size_t> nd(10, 200);
    double worst = 0.0;
    const int instances = 120;
    for (int t = 0; t < instances; ++t) {
        const AdditiveModel m = testing::random_model(rng, 4, 3);
        const FrfDataset d = testing::random_dataset(rng, m.n_y(), m.n_u(), nd(rng));
        const ModelStructure st = structure_of(m);
        const RVector beta = pack_parameters(m).values;
        for (std::size_t k = 0; k < d.size(); ++k) {
            const CVector e = vec(residual(d, m, k));
            for (std::size_t i = 0; i < m.size(); ++i) {
                const RVector th = beta.segment(st.block_offset(i), st.block_size(i));
                const CVector rhs =
                    filtered_residual_output(d, m, i, k) - regressor_block(d, m, i, k).transpose() * th.cast<cplx>();
                worst = std::max(worst, (rhs - e).norm() / std::max(e.norm(), 1e-300));
            }
        }
    }
    return {worst < 1e-10, std::to_string(instances) + " instances, max rel. deviation " + fmt("%.2e", worst)};
}

Verdict gradient_check() {
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    const int models = 25;
    for (int t = 0; t < models; ++t) {
        const AdditiveModel m = testing::random_model(rng, 4, 3);
        const FrfDataset d = testing::random_dataset(rng, m.n_y(), m.n_u(), 60);
        const WeightingScheme w = testing::random_diagonal_weighting(rng, m.n_y() * m.n_u(), d.size());
        const RVector r = optimality_residual(d, w, m).vector;
        const RVector g = testing::fd_gradient(d, w, m);
        worst = std::max(worst, (r + g).norm() / r.norm());
    }
    return {worst < 1e-6, std::to_string(models) + " models, max rel. error " + fmt("%.2e", worst)};
}

Verdict fixed_point() {
    const SynthSpec spec = benchmark_spec();
    const AdditiveModel truth = build_truth(spec);
    const FrfDataset d = simulate_frf(spec);
    double worst = 0.0;
    for (const WeightingScheme& w :
         {identity_weighting(2, 2, d.size()), inverse_magnitude_weighting(d, default_magnitude_floor(d))}) {
        worst = std::max(worst, testing::relative_parameter_error(iterate_once(d, w, truth).model, truth));
    }
    return {worst < 1e-10, "max rel. parameter error " + fmt("%.2e", worst)};
}

Verdict recovery() {
    const SynthSpec spec = benchmark_spec();
    const AdditiveModel truth = build_truth(spec);
    const FrfDataset d = simulate_frf(spec);
    const WeightingScheme w = inverse_magnitude_weighting(d, default_magnitude_floor(d));
    const AdditiveModel init = init_numerators(d, w, perturbed_denominators(spec, {1.02, 0.98}, 0.01));
    const EstimationResult r = estimate(d, w, init);
    const double err = testing::relative_parameter_error(r.model, truth);
    const double ratio = r.report.cost.back() / r.report.cost.front();
    const bool ok = r.report.converged && r.report.iterations <= 50 && err < 1e-6 && ratio < 1e-12;
    return {ok, std::to_string(r.report.iterations) + " iterations, rel. error " + fmt("%.2e", err) +
                    ", cost ratio " + fmt("%.2e", ratio)};
}

Verdict noisy_recovery() {
    SynthSpec spec = benchmark_spec();
    spec.noise = NoiseKind::complex_gaussian;
    spec.snr_db = 40.0;
    spec.seed = 7;
    const FrfDataset d = simulate_frf(spec);
    const WeightingScheme w = identity_weighting(2, 2, d.size());
    const AdditiveModel init = init_numerators(d, w, perturbed_denominators(spec, {1.02, 0.98}, 0.01));
    const EstimationResult r = estimate(d, w, init);
    const double grad = normalized_optimality_residual(d, w, r.model, median_omega(d)).norm;
    double werr = 0.0, zerr = 0.0;
    for (std::size_t i = 0; i < spec.modes.size(); ++i) {
        const ModalSpec m = submodel_to_modal(r.model[i + 1]);
        werr = std::max(werr, std::abs(m.omega - spec.modes[i].omega) / spec.modes[i].omega);
        zerr = std::max(zerr, std::abs(m.zeta - spec.modes[i].zeta) / spec.modes[i].zeta);
    }
    const bool ok = r.report.converged && grad < 1e-8 && werr < 1e-3 && zerr < 0.1;
    return {ok, std::string(r.report.converged ? "converged" : "not converged") + ", residual " +
                    fmt("%.2e", grad) + ", omega err " + fmt("%.2e", werr) + ", zeta err " + fmt("%.2e", zerr)};
}

Verdict oracle_dominance() {
    SynthSpec spec;
    spec.n_u = spec.n_y = 1;
    spec.modes = {{2 * std::numbers::pi * 20.0, 0.03, RMatrix::Constant(1, 1, 5000.0)}};
    spec.f_start_hz = 2.0;
    spec.f_stop_hz = 200.0;
    spec.points = 400;
    spec.spacing = GridSpacing::log;
    spec.noise = NoiseKind::complex_gaussian;
    spec.snr_db = 30.0;
    spec.seed = 21;
    const FrfDataset d = simulate_frf(spec);
    const WeightingScheme w = inverse_magnitude_weighting(d, default_magnitude_floor(d));

    std::vector<double> ws, zs;
    for (int i = 0; i <= 100; ++i) ws.push_back(spec.modes[0].omega * (0.95 + 0.001 * i));
    for (int j = 0; j <= 100; ++j) zs.push_back(spec.modes[0].zeta * (0.5 + 0.01 * j));
    const BruteForceResult oracle = brute_force_siso_fit(d, w, ws, zs);

    const AdditiveModel init = init_numerators(d, w, perturbed_denominators(spec, {1.03}, 0.01));
    const EstimationResult r = estimate(d, w, init);
    const double c = r.report.cost.back();
    return {c <= oracle.best_cost + 1e-10, "estimate " + fmt("%.6e", c) + " vs grid minimum " +
                                               fmt("%.6e", oracle.best_cost)};
}

Verdict single_block() {
    std::mt19937_64 rng(1007);
    double worst = 0.0;
    int instances = 0;
    while (instances < 10) {
        const AdditiveModel m = testing::random_model(rng, 1, 3);
        if (m[0].den().degree() == 0) continue;
        const FrfDataset clean = testing::sample_model(m, testing::log_grid_hz(0.02, 3.0, 80));
        std::normal_distribution<double> nd(0.0, 0.05);
        std::vector<CMatrix> noisy;
        for (const auto& g : clean.responses()) {
            CMatrix e = g;
            for (Eigen::Index i = 0; i < e.size(); ++i) e(i) += cplx(nd(rng), nd(rng)) * std::abs(g(i));
            noisy.push_back(e);
        }
        const FrfDataset d(clean.frequencies_hz(), noisy);
        const WeightingScheme w = testing::random_diagonal_weighting(rng, m.n_y() * m.n_u(), d.size());
        EstimationOptions opt;
        opt.stabilization = Stabilization::none;
        AdditiveModel cur = m;
        for (int it = 0; it < 5; ++it) {
            const AdditiveModel ref = testing::single_block_riv_step(d, w, cur);
            worst = std::max(worst, testing::relative_parameter_error(iterate_once(d, w, cur, opt).model, ref));
            cur = ref;
        }
        ++instances;
    }
    return {worst < 1e-12, "10 instances x 5 iterations, max rel. deviation " + fmt("%.2e", worst)};
}

Verdict cmif_count() {
    std::string detail;
    bool ok = true;
    const double zeta = 0.01;
    for (int n = 1; n <= 5; ++n) {
        SynthSpec spec;
        spec.n_u = spec.n_y = 1;
        // 800 points per decade starting one decade below the first peak, so
        // every peak lands on a grid point instead of between two.
        spec.f_start_hz = std::sqrt(1.0 - 2.0 * zeta * zeta);
        spec.f_stop_hz = spec.f_start_hz * std::pow(10.0, 3.75);
        spec.points = 3001;
        spec.spacing = GridSpacing::log;
        for (int i = 0; i < n; ++i) {
            const double w = 2 * std::numbers::pi * 10.0 * std::pow(10.0, 0.5 * i);
            spec.modes.push_back({w, zeta, RMatrix::Ones(1, 1)});  // unit static gain
        }
        const FrfDataset d = simulate_frf(spec);
        const auto modes = pick_modes(compute_cmif(d));
        bool match = modes.size() == static_cast<std::size_t>(n);
        for (std::size_t i = 0; match && i < modes.size(); ++i) {
            const double target = spec.modes[i].omega * std::sqrt(1.0 - 2.0 * zeta * zeta);
            std::size_t nearest = 0;
            for (std::size_t k = 1; k < d.size(); ++k) {
                if (std::abs(d.omega(k) - target) < std::abs(d.omega(nearest) - target)) nearest = k;
            }
            match = modes[i].peak.index == nearest;
        }
        ok = ok && match;
        detail += (n > 1 ? ", " : "") + std::to_string(n) + "->" + std::to_string(modes.size()) + (match ? "" : "!");
    }
    return {ok, "modes found " + detail};
}

Verdict weighting_semantics() {
    std::mt19937_64 rng(1009);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const AdditiveModel m = testing::random_model(rng, 3, 3);
        const FrfDataset d = testing::random_dataset(rng, m.n_y(), m.n_u(), 50);
        const double base = cost(d, inverse_magnitude_weighting(d, default_magnitude_floor(d)), m);
        for (double c : {0.1, 10.0}) {
            std::vector<CMatrix> g;
            for (const auto& gk : d.responses()) g.push_back(c * gk);
            const FrfDataset dc(d.frequencies_hz(), g);
            std::vector<Submodel> subs;
            for (const auto& s : m.submodels()) {
                std::vector<RMatrix> b;
                for (const auto& bk : s.num().coefficients()) b.push_back(c * bk);
                subs.emplace_back(s.ell(), s.den(), MatrixNumerator(b));
            }
            const double scaled = cost(dc, inverse_magnitude_weighting(dc, default_magnitude_floor(dc)),
                                       AdditiveModel(subs));
            worst = std::max(worst, std::abs(scaled - base) / base);
        }
    }
    return {worst < 1e-10, "max rel. cost change " + fmt("%.2e", worst)};
}

int shell(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict cli_reproducibility(const std::string& exe, const fs::path& work) {
    fs::remove_all(work);
    fs::create_directories(work);
    std::ofstream(work / "config.json")
        << R"({"synth": {"noise": {"kind": "complex-gaussian", "snr_db": 40}}, "frf": {"weighting": "identity"}})";
    std::vector<std::string> models;
    std::string codes;
    for (const char* run : {"run1", "run2"}) {
        const fs::path dir = work / run;
        const std::string common =
            " --config \"" + (work / "config.json").string() + "\" --seed 42 --out-dir \"" + dir.string() + "\"";
        const std::string q = "\"" + exe + "\"";
        const std::string data = "\"" + (dir / "frf.csv").string() + "\"";
        const std::string quiet = " > \"" + (dir / "log.txt").string() + "\" 2>&1";
        fs::create_directories(dir);
        int rc = shell(q + " simulate" + common + quiet);
        rc = rc == 0 ? shell(q + " cmif " + data + common + quiet) : rc;
        rc = rc == 0 ? shell(q + " identify " + data + " --modes \"" + (dir / "modes.json").string() +
                             "\" --rigid-body" + common + quiet)
                     : rc;
        rc = rc == 0 ? shell(q + " validate \"" + (dir / "model.json").string() + "\" " + data + common + quiet) : rc;
        codes += (codes.empty() ? "" : "/") + std::to_string(rc);
        if (rc != 0) return {false, std::string(run) + " failed, status " + std::to_string(rc)};
        models.push_back(slurp(dir / "model.json"));
    }
    const bool same = !models[0].empty() && models[0] == models[1];
    return {same, std::string(same ? "model.json identical" : "model.json differs") + " (" +
                      std::to_string(models[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <addfit-binary> <scratch-dir>\n";
        return 2;
    }
    const std::string exe = argv[1];
    const fs::path work = argv[2];

    struct Criterion {
        const char* name;
        double budget_s;  // 0 = no runtime bound
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> criteria = {
        {"pseudolinear residual identity", 10, pseudolinear_identity},
        {"stationarity residual equals -gradient", 30, gradient_check},
        {"truth is a fixed point of one iteration", 0, fixed_point},
        {"noiseless 2x2 K=3 recovery", 10, recovery},
        {"noisy 40 dB recovery", 20, noisy_recovery},
        {"dominates brute-force grid oracle", 60, oracle_dominance},
        {"K=1 matches single-block refined IV", 0, single_block},
        {"CMIF mode count 1..5", 0, cmif_count},
        {"inverse-magnitude weighting is scale invariant", 0, weighting_semantics},
        {"CLI pipeline reproducible", 0, [&] { return cli_reproducibility(exe, work); }},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v{false, ""};
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            v.pass = false;
            v.detail += ", over time budget";
        }
        failed += v.pass ? 0 : 1;
        std::printf("%s  %2zu  %-48s %s [%.2fs]\n", v.pass ? "PASS" : "FAIL", i + 1, c.name, v.detail.c_str(), secs);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
