#include "addfit/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "addfit/model_io.hpp"

namespace addfit::cli {

namespace {

using nlohmann::json;

// Thrown for anything the user can fix: bad files, bad config, bad flags.
class InputError : public Error {
public:
    using Error::Error;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

FrfFormat infer_format(const std::filesystem::path& path, const std::optional<FrfFormat>& forced) {
    if (forced) return *forced;
    return path.extension() == ".json" ? FrfFormat::json : FrfFormat::csv;
}

FrfDataset read_dataset(const std::filesystem::path& path, const std::optional<FrfFormat>& forced) {
    try {
        return load_frf(path, infer_format(path, forced));
    } catch (const Error& e) {
        throw InputError("cannot read dataset " + path.string() + ": " + e.what());
    }
}

std::string dataset_name(FrfFormat f) { return f == FrfFormat::csv ? "frf.csv" : "frf.json"; }

void check_keys(const json& section, const std::string& name, std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : section.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw InputError("unknown key '" + k + "' in section '" + name + "'");
    }
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = text.empty() ? json::object() : json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw InputError("config must be a JSON object");
    check_keys(doc, "config", {"synth", "frf", "cmif", "estimator", "identify", "io"});

    RunConfig cfg;
    try {
        if (doc.contains("synth")) {
            cfg.synth = synth_spec_from_json(doc.at("synth"), cfg.synth);
        } else {
            cfg.defaulted.push_back("synth");
        }
        if (doc.contains("frf")) {
            const auto& f = doc.at("frf");
            check_keys(f, "frf", {"delay", "f_min", "f_max", "weighting", "floor", "weighted_init"});
            cfg.frf.delay = f.value("delay", cfg.frf.delay);
            cfg.frf.f_min = f.value("f_min", cfg.frf.f_min);
            if (f.contains("f_max") && !f.at("f_max").is_null()) cfg.frf.f_max = f.at("f_max").get<double>();
            if (f.contains("weighting")) {
                cfg.frf.weighting = weight_kind_from_string(f.at("weighting").get<std::string>());
                if (cfg.frf.weighting == WeightKind::custom) {
                    throw InputError("frf.weighting must be identity or inverse-magnitude");
                }
            }
            if (f.contains("floor")) cfg.frf.floor = f.at("floor").get<double>();
            cfg.frf.weighted_init = f.value("weighted_init", cfg.frf.weighted_init);
        } else {
            cfg.defaulted.push_back("frf");
        }
        if (doc.contains("cmif")) {
            const auto& c = doc.at("cmif");
            check_keys(c, "cmif", {"window", "prominence_ratio", "default_zeta", "tracks"});
            cfg.cmif.window = c.value("window", cfg.cmif.window);
            cfg.cmif.prominence_ratio = c.value("prominence_ratio", cfg.cmif.prominence_ratio);
            cfg.cmif.default_zeta = c.value("default_zeta", cfg.cmif.default_zeta);
            cfg.cmif.tracks = c.value("tracks", cfg.cmif.tracks);
        } else {
            cfg.defaulted.push_back("cmif");
        }
        if (doc.contains("estimator")) {
            apply_estimator_config(doc.at("estimator"), cfg.estimator);
        } else {
            cfg.defaulted.push_back("estimator");
        }
        if (doc.contains("identify")) {
            const auto& i = doc.at("identify");
            check_keys(i, "identify", {"rigid_body", "num_degree"});
            cfg.identify.rigid_body = i.value("rigid_body", cfg.identify.rigid_body);
            cfg.identify.num_degree = i.value("num_degree", cfg.identify.num_degree);
        } else {
            cfg.defaulted.push_back("identify");
        }
        if (doc.contains("io")) {
            const auto& io = doc.at("io");
            check_keys(io, "io", {"out_dir", "format"});
            if (io.contains("out_dir")) cfg.io.out_dir = io.at("out_dir").get<std::string>();
            if (io.contains("format")) cfg.io.format = frf_format_from_string(io.at("format").get<std::string>());
        } else {
            cfg.defaulted.push_back("io");
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    } catch (const InputError&) {
        throw;
    } catch (const Error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path) {
    if (!path) return parse_config("");
    std::ifstream in(*path, std::ios::binary);
    if (!in) throw InputError("cannot open config " + path->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

FrfDataset preprocess(const FrfDataset& data, const FrfSection& frf) {
    FrfDataset out = frf.delay != 0.0 ? delay_compensate(data, frf.delay) : data;
    if (frf.f_min > 0.0 || std::isfinite(frf.f_max)) out = band_select(out, frf.f_min, frf.f_max);
    return out;
}

WeightingScheme make_weighting(const FrfDataset& data, const FrfSection& frf) {
    if (frf.weighting == WeightKind::identity) return identity_weighting(data.n_u(), data.n_y(), data.size());
    return inverse_magnitude_weighting(data, frf.floor.value_or(default_magnitude_floor(data)));
}

namespace {

struct Globals {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> format;
    std::optional<std::filesystem::path> out_dir;
};

RunConfig resolve(const Globals& g) {
    RunConfig cfg = load_config(g.config);
    if (g.seed) cfg.synth.seed = *g.seed;
    if (g.format) {
        try {
            cfg.io.format = frf_format_from_string(*g.format);
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }
    if (g.out_dir) cfg.io.out_dir = *g.out_dir;
    return cfg;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    AdditiveModel truth = [&] {
        try {
            return build_truth(cfg.synth);
        } catch (const Error& e) {
            throw InputError(std::string("invalid synth spec: ") + e.what());
        }
    }();
    const FrfDataset data = simulate_frf(cfg.synth);
    const FrfFormat fmt = cfg.io.format.value_or(FrfFormat::csv);
    const auto dir = cfg.io.out_dir;
    std::filesystem::create_directories(dir);
    save_frf(data, dir / dataset_name(fmt), fmt);
    save_model(truth, dir / "truth_model.json");

    const json spec = to_json(cfg.synth);
    json manifest = {{"command", "simulate"},
                     {"seed", cfg.synth.seed},
                     {"spec_hash", fnv1a_hex(spec.dump())},
                     {"spec", spec},
                     {"defaults_applied", cfg.defaulted},
                     {"files", {dataset_name(fmt), "truth_model.json"}}};
    write_text(dir / "simulate_manifest.json", dump(manifest));
    out << "wrote " << (dir / dataset_name(fmt)).string() << " (" << data.size() << " points, "
        << data.n_y() << "x" << data.n_u() << ") and " << (dir / "truth_model.json").string() << "\n";
    return kExitOk;
}

std::string cmif_csv(const CmifResult& cmif) {
    std::ostringstream os;
    os << "freq_hz,sv_index,cmif_value\n";
    for (Eigen::Index k = 0; k < cmif.values.rows(); ++k) {
        for (Eigen::Index i = 0; i < cmif.values.cols(); ++i) {
            os << format_double(cmif.freq_hz[static_cast<std::size_t>(k)]) << ',' << i + 1 << ','
               << format_double(cmif.values(k, i)) << '\n';
        }
    }
    os << "# peaks\nfreq_hz,sv_index,cmif_value\n";
    for (const auto& p : cmif.peaks) {
        os << format_double(cmif.freq_hz[p.index]) << ',' << p.track + 1 << ',' << format_double(p.value)
           << '\n';
    }
    return os.str();
}

json modes_json(const std::vector<ModeSeed>& seeds, const CmifResult& cmif) {
    json modes = json::array();
    for (const auto& s : seeds) {
        modes.push_back({{"index", s.peak.index},
                         {"f_hz", cmif.freq_hz[s.peak.index]},
                         {"omega", s.omega},
                         {"zeta", s.zeta},
                         {"cmif", s.peak.value},
                         {"track", s.peak.track + 1}});
    }
    return {{"modes", modes}};
}

std::vector<ModeSeed> read_modes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open mode list " + path.string());
    try {
        const json doc = json::parse(in);
        std::vector<ModeSeed> seeds;
        for (const auto& m : doc.at("modes")) {
            ModeSeed s;
            s.omega = m.contains("omega") ? m.at("omega").get<double>()
                                          : 2.0 * std::numbers::pi * m.at("f_hz").get<double>();
            s.zeta = m.at("zeta").get<double>();
            seeds.push_back(s);
        }
        return seeds;
    } catch (const json::exception& e) {
        throw InputError("mode list " + path.string() + ": " + e.what());
    }
}

int cmd_cmif(const RunConfig& cfg, const std::filesystem::path& dataset_path, std::ostream& out) {
    const FrfDataset data = [&] {
        try {
            return preprocess(read_dataset(dataset_path, cfg.io.format), cfg.frf);
        } catch (const InputError&) {
            throw;
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }();
    CmifResult cmif = compute_cmif(data);
    cmif.peaks = detect_peaks(cmif, cfg.cmif);
    const auto seeds = pick_modes(cmif, cfg.cmif);
    const auto dir = cfg.io.out_dir;
    std::filesystem::create_directories(dir);
    write_text(dir / "cmif.csv", cmif_csv(cmif));
    write_text(dir / "modes.json", dump(modes_json(seeds, cmif)));

    out << seeds.size() << " modes detected\n";
    if (!seeds.empty()) {
        out << std::setw(6) << "index" << std::setw(16) << "f_hz" << std::setw(12) << "zeta_init" << "\n";
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            out << std::setw(6) << i + 1 << std::setw(16) << std::setprecision(8)
                << cmif.freq_hz[seeds[i].peak.index] << std::setw(12) << seeds[i].zeta << "\n";
        }
    }
    return kExitOk;
}

struct IdentifyFlags {
    std::optional<std::filesystem::path> modes;
    std::optional<std::filesystem::path> initial_model;
    bool rigid_body = false;
    std::optional<int> max_iterations;
    std::optional<std::string> instrument;
    std::optional<std::string> weighting;
};

std::string residual_csv(const FrfDataset& data, const AdditiveModel& model) {
    std::ostringstream os;
    os << "freq_hz,out,in,abs_g,abs_model,abs_residual\n";
    for (std::size_t k = 0; k < data.size(); ++k) {
        const CMatrix p = eval_model(model, data.omega(k));
        const CMatrix& g = data.response(k);
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                os << format_double(data.freq_hz(k)) << ',' << r + 1 << ',' << c + 1 << ','
                   << format_double(std::abs(g(r, c))) << ',' << format_double(std::abs(p(r, c))) << ','
                   << format_double(std::abs(g(r, c) - p(r, c))) << '\n';
            }
        }
    }
    return os.str();
}

int cmd_identify(RunConfig cfg, const std::filesystem::path& dataset_path, const IdentifyFlags& flags,
                 std::ostream& out, std::ostream& err) {
    if (flags.max_iterations) {
        if (*flags.max_iterations < 0) throw InputError("--max-iterations must be >= 0");
        cfg.estimator.max_iterations = *flags.max_iterations;
    }
    if (flags.instrument) {
        if (*flags.instrument != "riv" && *flags.instrument != "sk") {
            throw InputError("--instrument must be riv or sk");
        }
        cfg.estimator.instrument = *flags.instrument == "riv" ? InstrumentMode::riv : InstrumentMode::sk;
    }
    if (flags.weighting) {
        try {
            cfg.frf.weighting = weight_kind_from_string(*flags.weighting);
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }

    FrfDataset data = read_dataset(dataset_path, cfg.io.format);
    try {
        data = preprocess(data, cfg.frf);
    } catch (const Error& e) {
        throw InputError(e.what());
    }
    const WeightingScheme weighting = [&] {
        try {
            return make_weighting(data, cfg.frf);
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }();

    std::optional<AdditiveModel> initial;
    if (flags.initial_model) {
        try {
            initial = load_model(*flags.initial_model);
        } catch (const Error& e) {
            throw InputError("cannot read initial model: " + std::string(e.what()));
        }
        if (initial->n_y() != data.n_y() || initial->n_u() != data.n_u()) {
            throw InputError("initial model dimensions do not match the dataset");
        }
    } else {
        std::vector<ModeSeed> seeds;
        if (flags.modes) {
            seeds = read_modes(*flags.modes);
        } else {
            seeds = pick_modes(compute_cmif(data), cfg.cmif);
        }
        std::vector<FixedDenominator> dens;
        if (flags.rigid_body || cfg.identify.rigid_body) dens.push_back({2, ScalarDenominator(), 0});
        for (const auto& s : seeds) {
            try {
                dens.push_back({0, modal_to_submodel({s.omega, s.zeta, RMatrix::Zero(1, 1)}).den(),
                                cfg.identify.num_degree});
            } catch (const Error& e) {
                throw InputError(std::string("invalid mode seed: ") + e.what());
            }
        }
        if (dens.empty()) throw InputError("no modes to initialize from (and no rigid-body term)");
        InitOptions init;
        init.weighted = cfg.frf.weighted_init;
        try {
            initial = init_numerators(data, weighting, dens, init);
        } catch (const Error& e) {
            throw InputError(std::string("initialization failed: ") + e.what());
        }
    }
    const ValidationReport vr = validate_structure(*initial);
    if (!vr.ok()) throw InputError("initial model: " + vr.issues.front().message);

    const auto dir = cfg.io.out_dir;
    std::filesystem::create_directories(dir);
    EstimationReport report;
    AdditiveModel model = *initial;
    try {
        EstimationResult res = estimate(data, weighting, *initial, cfg.estimator);
        model = std::move(res.model);
        report = std::move(res.report);
    } catch (const DivergenceError& e) {
        report = e.report();
        report.message = e.what();
    }
    save_model(model, dir / "model.json");
    write_text(dir / "report.json", dump(report.to_json()));
    write_text(dir / "residuals.csv", residual_csv(data, model));

    out << "identify: " << model.size() << " submodels, " << report.iterations << " iterations, "
        << (report.converged ? "converged" : "not converged") << " (" << to_string(report.reason)
        << "), cost " << std::setprecision(6) << report.cost.back() << "\n";
    if (!report.converged) {
        err << "identify: estimation did not converge";
        if (!report.message.empty()) err << ": " << report.message;
        err << "\n";
        return kExitNotConverged;
    }
    return kExitOk;
}

int cmd_validate(RunConfig cfg, const std::filesystem::path& model_path,
                 const std::filesystem::path& dataset_path, const std::optional<std::string>& weighting_flag,
                 std::ostream& out) {
    if (weighting_flag) {
        try {
            cfg.frf.weighting = weight_kind_from_string(*weighting_flag);
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }
    AdditiveModel model = [&] {
        try {
            return load_model(model_path);
        } catch (const Error& e) {
            throw InputError("cannot read model " + model_path.string() + ": " + e.what());
        }
    }();
    FrfDataset data = read_dataset(dataset_path, cfg.io.format);
    try {
        data = preprocess(data, cfg.frf);
    } catch (const Error& e) {
        throw InputError(e.what());
    }
    if (model.n_y() != data.n_y() || model.n_u() != data.n_u()) {
        throw InputError("model is " + std::to_string(model.n_y()) + "x" + std::to_string(model.n_u()) +
                         " but dataset is " + std::to_string(data.n_y()) + "x" + std::to_string(data.n_u()));
    }
    const WeightingScheme w = [&] {
        try {
            return make_weighting(data, cfg.frf);
        } catch (const Error& e) {
            throw InputError(e.what());
        }
    }();

    const double c = cost(data, w, model);
    RMatrix err2 = RMatrix::Zero(data.n_y(), data.n_u());
    RMatrix sig2 = RMatrix::Zero(data.n_y(), data.n_u());
    for (std::size_t k = 0; k < data.size(); ++k) {
        err2 += residual(data, model, k).cwiseAbs2();
        sig2 += data.response(k).cwiseAbs2();
    }
    json rel = json::array();
    for (Eigen::Index r = 0; r < data.n_y(); ++r) {
        std::vector<double> row;
        for (Eigen::Index col = 0; col < data.n_u(); ++col) {
            row.push_back(sig2(r, col) > 0.0 ? std::sqrt(err2(r, col) / sig2(r, col)) : std::sqrt(err2(r, col)));
        }
        rel.push_back(row);
    }
    json stab = json::array();
    bool all_stable = true;
    for (const auto& sub : model.submodels()) {
        const bool s = check_stability(sub.den()).stable;
        all_stable = all_stable && s;
        stab.push_back(s);
    }
    const ValidationReport vr = validate_structure(model);
    json issues = json::array();
    for (const auto& i : vr.issues) issues.push_back(i.message);
    const json metrics = {{"cost", c},
                          {"weighting", to_string(cfg.frf.weighting)},
                          {"points", data.size()},
                          {"relative_rms_error", rel},
                          {"submodel_stable", stab},
                          {"stable", all_stable},
                          {"structure_issues", issues}};
    const auto dir = cfg.io.out_dir;
    std::filesystem::create_directories(dir);
    write_text(dir / "metrics.json", dump(metrics));
    out << dump(metrics);
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Additive MIMO transfer-function identification from FRF data"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON run configuration");
    app.add_option("--seed", g.seed, "override synth.seed");
    app.add_option("--format", g.format, "FRF file format: csv or json");
    app.add_option("--out-dir", g.out_dir, "output directory (default: io.out_dir or .)");

    auto* sim = app.add_subcommand("simulate", "generate a synthetic FRF dataset and its true model");

    auto* cm = app.add_subcommand("cmif", "compute the CMIF and pick modes");
    std::filesystem::path cmif_data;
    cm->add_option("dataset", cmif_data, "FRF file")->required();

    auto* id = app.add_subcommand("identify", "fit an additive model to an FRF dataset");
    std::filesystem::path id_data;
    IdentifyFlags flags;
    id->add_option("dataset", id_data, "FRF file")->required();
    id->add_option("--modes", flags.modes, "mode list written by `cmif`");
    id->add_option("--initial-model", flags.initial_model, "model JSON used as the starting point");
    id->add_flag("--rigid-body", flags.rigid_body, "add a B0/s^2 rigid-body submodel");
    id->add_option("--max-iterations", flags.max_iterations, "override estimator.max_iterations");
    id->add_option("--instrument", flags.instrument, "riv or sk");
    id->add_option("--weighting", flags.weighting, "identity or inverse-magnitude");

    auto* val = app.add_subcommand("validate", "evaluate a model against an FRF dataset");
    std::filesystem::path val_model, val_data;
    std::optional<std::string> val_weighting;
    val->add_option("model", val_model, "model JSON")->required();
    val->add_option("dataset", val_data, "FRF file")->required();
    val->add_option("--weighting", val_weighting, "identity or inverse-magnitude");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return kExitInputError;
    }

    try {
        const RunConfig cfg = resolve(g);
        if (sim->parsed()) return cmd_simulate(cfg, out);
        if (cm->parsed()) return cmd_cmif(cfg, cmif_data, out);
        if (id->parsed()) return cmd_identify(cfg, id_data, flags, out, err);
        if (val->parsed()) return cmd_validate(cfg, val_model, val_data, val_weighting, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitInputError;
}

}  // namespace addfit::cli
