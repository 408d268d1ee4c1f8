#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "addfit/frf.hpp"
#include "support.hpp"

using namespace addfit;

namespace {

FrfDataset constant_siso(const std::vector<double>& f, cplx value) {
    return FrfDataset(f, std::vector<CMatrix>(f.size(), CMatrix::Constant(1, 1, value)));
}

std::vector<double> linear_hz(double f0, double f1, std::size_t n) {
    std::vector<double> f(n);
    for (std::size_t k = 0; k < n; ++k) f[k] = f0 + (f1 - f0) * static_cast<double>(k) / (n - 1);
    return f;
}

}  // namespace

TEST_CASE("FrfDataset invariants") {
    CHECK_THROWS_AS(constant_siso({1.0, 1.0}, 1.0), DomainError);
    CHECK_THROWS_AS(constant_siso({2.0, 1.0}, 1.0), DomainError);
    CHECK_THROWS_AS(constant_siso({0.0, 1.0}, 1.0), DomainError);
    CHECK_THROWS(FrfDataset({1.0, 2.0}, {CMatrix::Ones(1, 1), CMatrix::Ones(2, 1)}));
    const FrfDataset d = constant_siso({1.0, 2.0}, 1.0);
    CHECK(d.omega(1) == doctest::Approx(4.0 * std::numbers::pi));
}

TEST_CASE("CSV: two-point SISO file") {
    const FrfDataset d = parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,1,0\n2,1,1,1,0\n");
    REQUIRE(d.size() == 2);
    CHECK(d.response(0)(0, 0) == cplx(1.0, 0.0));
    CHECK(d.response(1)(0, 0) == cplx(1.0, 0.0));
    CHECK(d.freq_hz(1) == 2.0);
}

TEST_CASE("CSV: duplicate frequency is reported by record") {
    try {
        parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,1,0\n1,1,1,1,0\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("non-increasing frequency at record 2") != std::string::npos);
    }
}

TEST_CASE("CSV: malformed content") {
    CHECK_THROWS_AS(parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,nan,0\n"), ParseError);
    CHECK_THROWS_AS(parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,inf,0\n"), ParseError);
    CHECK_THROWS_AS(parse_frf_csv("f,o,i,r,x\n1,1,1,1,0\n"), ParseError);
    CHECK_THROWS_AS(parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,1\n"), ParseError);
    // second frequency is missing the (2,1) entry
    CHECK_THROWS_AS(parse_frf_csv("freq_hz,out,in,re,im\n1,1,1,1,0\n1,2,1,1,0\n2,1,1,1,0\n"), ParseError);
}

TEST_CASE("CSV and JSON round trips are bit-identical") {
    std::mt19937_64 rng(41);
    const FrfDataset d = testing::random_dataset(rng, 2, 3, 37);
    const auto dir = std::filesystem::temp_directory_path() / "addfit_frf_io";
    std::filesystem::create_directories(dir);
    for (FrfFormat fmt : {FrfFormat::csv, FrfFormat::json}) {
        const auto path = dir / (fmt == FrfFormat::csv ? "d.csv" : "d.json");
        save_frf(d, path, fmt);
        const FrfDataset back = load_frf(path, fmt);
        REQUIRE(back.size() == d.size());
        for (std::size_t k = 0; k < d.size(); ++k) {
            CHECK(back.freq_hz(k) == d.freq_hz(k));
            CHECK(back.response(k) == d.response(k));
        }
        save_frf(back, dir / "again", fmt);
        std::ifstream a(path, std::ios::binary), b(dir / "again", std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
}

TEST_CASE("JSON accepts rad/s input") {
    const std::string doc =
        R"({"unit":"rad/s","n_u":1,"n_y":1,"points":[{"f":6.283185307179586,"G_re":[[1]],"G_im":[[2]]}]})";
    const FrfDataset d = parse_frf_json(doc);
    CHECK(d.freq_hz(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.response(0)(0, 0) == cplx(1.0, 2.0));
    CHECK_THROWS_AS(parse_frf_json(R"({"unit":"rpm","n_u":1,"n_y":1,"points":[]})"), ParseError);
}

TEST_CASE("delay_compensate") {
    std::mt19937_64 rng(43);
    const FrfDataset d = testing::random_dataset(rng, 2, 2, 50, 1.0, 200.0);
    const FrfDataset same = delay_compensate(d, 0.0);
    for (std::size_t k = 0; k < d.size(); ++k) CHECK(same.response(k) == d.response(k));

    std::vector<CMatrix> g;
    const auto f = testing::log_grid_hz(1.0, 1000.0, 200);
    for (double fk : f) g.push_back(CMatrix::Constant(1, 1, std::polar(1.0, -2.0 * std::numbers::pi * fk * 0.001)));
    const FrfDataset delayed(f, g);
    const FrfDataset fixed = delay_compensate(delayed, 0.001);
    for (std::size_t k = 0; k < fixed.size(); ++k) CHECK(std::abs(fixed.response(k)(0, 0) - 1.0) < 1e-12);

    const FrfDataset shifted = delay_compensate(d, 0.0123);
    const FrfDataset back = delay_compensate(shifted, -0.0123);
    for (std::size_t k = 0; k < d.size(); ++k) {
        CHECK((shifted.response(k).cwiseAbs() - d.response(k).cwiseAbs()).norm() < 1e-12);
        CHECK((back.response(k) - d.response(k)).norm() < 1e-12 * d.response(k).norm());
    }
}

TEST_CASE("band_select") {
    const FrfDataset d = constant_siso(linear_hz(1.0, 100.0, 100), 1.0);
    CHECK(band_select(d, 20.0, 100.0).size() == 81);
    CHECK(band_select(d, 0.0).size() == 100);
    CHECK_THROWS_AS(band_select(d, 200.0, 300.0), DomainError);
}

TEST_CASE("CMIF trivial cases") {
    const auto f = linear_hz(1.0, 10.0, 10);
    const FrfDataset eye(f, std::vector<CMatrix>(f.size(), CMatrix::Identity(2, 2)));
    const CmifResult a = compute_cmif(eye);
    CHECK((a.values.array() - 1.0).abs().maxCoeff() < 1e-14);

    std::mt19937_64 rng(47);
    const FrfDataset s = testing::random_dataset(rng, 1, 1, 20);
    const CmifResult b = compute_cmif(s);
    for (std::size_t k = 0; k < s.size(); ++k) {
        CHECK(b.values(k, 0) == doctest::Approx(std::norm(s.response(k)(0, 0))).epsilon(1e-14));
    }

    CVector u(2), v(3);
    u << cplx(0.6, 0.0), cplx(0.0, 0.8);
    v << cplx(1.0, 1.0), cplx(0.5, -0.5), cplx(0.0, 1.0);
    v.normalize();
    const FrfDataset r1(f, std::vector<CMatrix>(f.size(), u * v.adjoint()));
    const CmifResult c = compute_cmif(r1);
    CHECK((c.values.col(0).array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK(c.values.col(1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("CMIF ordering and unitary invariance") {
    std::mt19937_64 rng(53);
    const FrfDataset d = testing::random_dataset(rng, 3, 2, 40);
    const CmifResult a = compute_cmif(d);
    for (Eigen::Index k = 0; k < a.values.rows(); ++k) {
        for (Eigen::Index i = 1; i < a.values.cols(); ++i) CHECK(a.values(k, i) <= a.values(k, i - 1));
        CHECK(a.values(k, a.values.cols() - 1) >= 0.0);
    }
    const CMatrix ul = CMatrix::Random(3, 3).householderQr().householderQ();
    const CMatrix ur = CMatrix::Random(2, 2).householderQr().householderQ();
    std::vector<CMatrix> rotated;
    for (const auto& g : d.responses()) rotated.push_back(ul * g * ur);
    const CmifResult b = compute_cmif(FrfDataset(d.frequencies_hz(), rotated));
    CHECK(((a.values - b.values).array().abs() / a.values.array().abs().max(1e-300)).maxCoeff() < 1e-10);
}

TEST_CASE("pick_modes: single mode peak at the damped resonance") {
    const double w0 = 100.0, zeta = 0.01;
    // grid in Hz that puts w0 exactly on a grid point
    std::vector<double> f;
    for (int k = -300; k <= 300; ++k) f.push_back(w0 / (2 * std::numbers::pi) * (1.0 + 0.001 * k));
    const AdditiveModel m({modal_to_submodel({w0, zeta, RMatrix::Ones(1, 1)})});
    const CmifResult cm = compute_cmif(testing::sample_model(m, f));
    const auto modes = pick_modes(cm);
    REQUIRE(modes.size() == 1);

    const double w_peak = w0 * std::sqrt(1.0 - 2.0 * zeta * zeta);
    std::size_t nearest = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        if (std::abs(2 * std::numbers::pi * f[k] - w_peak) < std::abs(2 * std::numbers::pi * f[nearest] - w_peak)) {
            nearest = k;
        }
    }
    CHECK(modes[0].peak.index == nearest);
    CHECK(modes[0].omega == doctest::Approx(2 * std::numbers::pi * f[nearest]));
    CHECK(modes[0].zeta == 0.01);
}

TEST_CASE("pick_modes: a heavier mode peaks below its natural frequency") {
    const double w0 = 100.0, zeta = 0.1;
    std::vector<double> f;
    for (int k = -300; k <= 300; ++k) f.push_back(w0 / (2 * std::numbers::pi) * (1.0 + 0.001 * k));
    const AdditiveModel m({modal_to_submodel({w0, zeta, RMatrix::Ones(1, 1)})});
    PeakOptions opt;
    opt.prominence_ratio = 2.0;
    const auto modes = pick_modes(compute_cmif(testing::sample_model(m, f)), opt);
    REQUIRE(modes.size() == 1);
    // w0 sqrt(1 - 2 zeta^2) = 98.995 rad/s, ten grid steps below w0
    CHECK(modes[0].peak.index == 290);
}

TEST_CASE("pick_modes: flat data and tiny grids") {
    const auto f = linear_hz(1.0, 100.0, 200);
    CHECK(pick_modes(compute_cmif(constant_siso(f, 1.0))).empty());
    CHECK(pick_modes(compute_cmif(constant_siso({1.0, 2.0}, 1.0))).empty());
}

TEST_CASE("pick_modes: two modes in a 2x2 system on separate tracks") {
    SynthSpec s = benchmark_spec();
    s.rigid_body.reset();
    const CmifResult cm = compute_cmif(simulate_frf(s));
    const auto modes = pick_modes(cm);
    REQUIRE(modes.size() == 2);
    CHECK(modes[0].omega < modes[1].omega);
    CHECK(modes[0].omega == doctest::Approx(2 * std::numbers::pi * 30).epsilon(0.01));
    CHECK(modes[1].omega == doctest::Approx(2 * std::numbers::pi * 120).epsilon(0.01));
}

TEST_CASE("inverse_magnitude_weighting") {
    const FrfDataset d = constant_siso({1.0, 2.0}, cplx(0.0, 2.0));
    const WeightingScheme w = inverse_magnitude_weighting(d, 0.0);
    CHECK(std::abs(w.filters[0](0, 0) - 0.5) < 1e-15);

    const FrfDataset col({1.0}, {CMatrix{{cplx(1.0, 0.0)}, {cplx(0.0, -4.0)}}});
    const WeightingScheme w2 = inverse_magnitude_weighting(col, 0.0);
    CHECK((w2.filters[0] - CMatrix(RVector{{1.0, 0.25}}.asDiagonal().toDenseMatrix().cast<cplx>())).norm() < 1e-15);

    const FrfDataset zero({1.0}, {CMatrix{{cplx(0.0, 0.0)}, {cplx(2.0, 0.0)}}});
    CHECK_THROWS_AS(inverse_magnitude_weighting(zero, 0.0), DomainError);
    const WeightingScheme wf = inverse_magnitude_weighting(zero, 1e-6);
    CHECK(wf.filters[0](0, 0).real() == doctest::Approx(1e6));

    std::mt19937_64 rng(59);
    const FrfDataset r = testing::random_dataset(rng, 2, 3, 30);
    const WeightingScheme wr = inverse_magnitude_weighting(r, default_magnitude_floor(r));
    for (const auto& m : wr.filters) {
        CHECK(m.isDiagonal());
        CHECK(m.diagonal().real().minCoeff() > 0.0);
        CHECK(m.diagonal().imag().cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_NOTHROW(check_weighting(wr, r.size(), 6));
}

TEST_CASE("check_weighting rejects bad filters") {
    WeightingScheme w = identity_weighting(1, 2, 3);
    CHECK_NOTHROW(check_weighting(w, 3, 2));
    CHECK_THROWS_AS(check_weighting(w, 4, 2), StructureError);
    w.filters[1](0, 1) = 0.5;
    CHECK_THROWS_AS(check_weighting(w, 3, 2), DomainError);
    w = identity_weighting(1, 2, 3);
    w.filters[2](1, 1) = -1.0;
    CHECK_THROWS_AS(check_weighting(w, 3, 2), DomainError);
}

TEST_CASE("weight kind names") {
    CHECK(weight_kind_from_string("inverse-magnitude") == WeightKind::inverse_magnitude);
    CHECK(to_string(WeightKind::identity) == "identity");
    CHECK_THROWS(weight_kind_from_string("bogus"));
}
