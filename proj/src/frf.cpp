#include "addfit/frf.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "addfit/model_io.hpp"

namespace addfit {

FrfFormat frf_format_from_string(const std::string& s) {
    if (s == "csv") return FrfFormat::csv;
    if (s == "json") return FrfFormat::json;
    throw DomainError("unknown FRF format '" + s + "' (expected csv or json)");
}

std::string to_string(FrfFormat f) { return f == FrfFormat::csv ? "csv" : "json"; }

FrfDataset::FrfDataset(std::vector<double> freq_hz, std::vector<CMatrix> responses)
    : freq_hz_(std::move(freq_hz)), responses_(std::move(responses)) {
    if (freq_hz_.empty()) throw StructureError("FRF dataset is empty");
    if (freq_hz_.size() != responses_.size()) {
        throw StructureError("FRF dataset has " + std::to_string(freq_hz_.size()) +
                             " frequencies but " + std::to_string(responses_.size()) + " responses");
    }
    for (std::size_t k = 0; k < freq_hz_.size(); ++k) {
        if (!std::isfinite(freq_hz_[k]) || !(freq_hz_[k] > 0.0)) {
            throw DomainError("frequency at point " + std::to_string(k) + " is not positive");
        }
        if (k > 0 && !(freq_hz_[k] > freq_hz_[k - 1])) {
            throw DomainError("non-increasing frequency at point " + std::to_string(k));
        }
        const auto& g = responses_[k];
        if (g.rows() != responses_.front().rows() || g.cols() != responses_.front().cols() ||
            g.size() == 0) {
            throw StructureError("response matrix dimensions differ at point " + std::to_string(k));
        }
        if (!g.allFinite()) throw DomainError("non-finite response at point " + std::to_string(k));
    }
}

double FrfDataset::omega(std::size_t k) const { return 2.0 * std::numbers::pi * freq_hz_[k]; }

std::vector<double> FrfDataset::omegas() const {
    std::vector<double> w(size());
    for (std::size_t k = 0; k < size(); ++k) w[k] = omega(k);
    return w;
}

// --- text formats ----------------------------------------------------------

namespace {

constexpr const char* kCsvHeader = "freq_hz,out,in,re,im";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CsvRecord {
    double f;
    long out, in;
    double re, im;
    std::size_t line;
};

double parse_number(const std::string& field, std::size_t line, const char* what) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw ParseError("line " + std::to_string(line) + ": cannot parse " + what + " '" + field + "'");
    }
    if (!std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line) + ": non-finite " + what);
    }
    return v;
}

long parse_index(const std::string& field, std::size_t line, const char* what) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0' || v < 1) {
        throw ParseError("line " + std::to_string(line) + ": invalid " + what + " index '" + field + "'");
    }
    return v;
}

}  // namespace

FrfDataset parse_frf_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<CsvRecord> records;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kCsvHeader) {
                throw ParseError("line " + std::to_string(lineno) + ": expected header '" +
                                 kCsvHeader + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 5) {
            throw ParseError("line " + std::to_string(lineno) + ": expected 5 fields, got " +
                             std::to_string(fields.size()));
        }
        records.push_back({parse_number(fields[0], lineno, "frequency"),
                           parse_index(fields[1], lineno, "output"),
                           parse_index(fields[2], lineno, "input"),
                           parse_number(fields[3], lineno, "real part"),
                           parse_number(fields[4], lineno, "imaginary part"), lineno});
    }
    if (!header_seen) throw ParseError("missing CSV header");
    if (records.empty()) throw ParseError("FRF file has no records");

    long n_y = 0, n_u = 0;
    for (const auto& r : records) {
        n_y = std::max(n_y, r.out);
        n_u = std::max(n_u, r.in);
    }
    const std::size_t per_point = static_cast<std::size_t>(n_y * n_u);
    if (records.size() % per_point != 0) {
        throw ParseError("record count " + std::to_string(records.size()) +
                         " is not a multiple of n_y*n_u = " + std::to_string(per_point));
    }

    std::vector<double> freqs;
    std::vector<CMatrix> responses;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t pos = r % per_point;
        const std::string where = "record " + std::to_string(r + 1) + " (line " +
                                  std::to_string(rec.line) + ")";
        if (pos == 0) {
            if (!freqs.empty() && !(rec.f > freqs.back())) {
                throw ParseError("non-increasing frequency at " + where);
            }
            if (!(rec.f > 0.0)) throw ParseError("non-positive frequency at " + where);
            freqs.push_back(rec.f);
            responses.emplace_back(CMatrix::Zero(n_y, n_u));
        } else if (rec.f != freqs.back()) {
            throw ParseError("inconsistent matrix dimensions: incomplete frequency block before " + where);
        }
        const long want_in = static_cast<long>(pos) / n_y + 1;
        const long want_out = static_cast<long>(pos) % n_y + 1;
        if (rec.in != want_in || rec.out != want_out) {
            throw ParseError("unexpected entry (out " + std::to_string(rec.out) + ", in " +
                             std::to_string(rec.in) + ") at " + where +
                             "; records must be sorted by (freq, in, out)");
        }
        responses.back()(rec.out - 1, rec.in - 1) = cplx(rec.re, rec.im);
    }
    return FrfDataset(std::move(freqs), std::move(responses));
}

std::string frf_to_csv(const FrfDataset& data) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& g = data.response(k);
        const std::string f = format_double(data.freq_hz(k));
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                out += f + "," + std::to_string(r + 1) + "," + std::to_string(c + 1) + "," +
                       format_double(g(r, c).real()) + "," + format_double(g(r, c).imag()) + "\n";
            }
        }
    }
    return out;
}

FrfDataset parse_frf_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("FRF JSON: ") + e.what());
    }
    try {
        const std::string unit = doc.value("unit", std::string("hz"));
        FrequencyUnit src;
        if (unit == "hz" || unit == "Hz") {
            src = FrequencyUnit::hz;
        } else if (unit == "rad/s" || unit == "rad_per_s") {
            src = FrequencyUnit::rad_per_s;
        } else {
            throw ParseError("FRF JSON: unknown unit '" + unit + "'");
        }
        const auto n_u = doc.at("n_u").get<Eigen::Index>();
        const auto n_y = doc.at("n_y").get<Eigen::Index>();
        if (n_u <= 0 || n_y <= 0) throw ParseError("FRF JSON: n_u and n_y must be positive");
        std::vector<double> freqs;
        std::vector<CMatrix> responses;
        std::size_t idx = 0;
        for (const auto& pt : doc.at("points")) {
            ++idx;
            const std::string where = "point " + std::to_string(idx);
            const auto& re = pt.at("G_re");
            const auto& im = pt.at("G_im");
            if (!re.is_array() || !im.is_array() || static_cast<Eigen::Index>(re.size()) != n_y ||
                static_cast<Eigen::Index>(im.size()) != n_y) {
                throw ParseError("inconsistent matrix dimensions at " + where);
            }
            CMatrix g(n_y, n_u);
            for (Eigen::Index r = 0; r < n_y; ++r) {
                const auto& rr = re[static_cast<std::size_t>(r)];
                const auto& ri = im[static_cast<std::size_t>(r)];
                if (static_cast<Eigen::Index>(rr.size()) != n_u ||
                    static_cast<Eigen::Index>(ri.size()) != n_u) {
                    throw ParseError("inconsistent matrix dimensions at " + where);
                }
                for (Eigen::Index c = 0; c < n_u; ++c) {
                    const auto& vr = rr[static_cast<std::size_t>(c)];
                    const auto& vi = ri[static_cast<std::size_t>(c)];
                    if (!vr.is_number() || !vi.is_number()) {
                        throw ParseError("non-numeric (NaN/Inf?) entry at " + where);
                    }
                    g(r, c) = cplx(vr.get<double>(), vi.get<double>());
                }
            }
            if (!g.allFinite()) throw ParseError("non-finite entry at " + where);
            double f = pt.at("f").get<double>();
            if (src == FrequencyUnit::rad_per_s) f /= 2.0 * std::numbers::pi;
            if (!std::isfinite(f) || !(f > 0.0)) throw ParseError("non-positive frequency at " + where);
            if (!freqs.empty() && !(f > freqs.back())) {
                throw ParseError("non-increasing frequency at " + where);
            }
            freqs.push_back(f);
            responses.push_back(std::move(g));
        }
        if (freqs.empty()) throw ParseError("FRF JSON has no points");
        FrfDataset data(std::move(freqs), std::move(responses));
        data.source_unit = src;
        data.delay_compensated = doc.value("delay_compensated", false);
        if (doc.contains("meta")) {
            for (const auto& [k, v] : doc.at("meta").items()) data.metadata[k] = v.get<std::string>();
        }
        return data;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("FRF JSON: ") + e.what());
    }
}

std::string frf_to_json(const FrfDataset& data) {
    std::ostringstream os;
    os << "{\n  \"unit\": \"hz\",\n  \"n_u\": " << data.n_u() << ",\n  \"n_y\": " << data.n_y()
       << ",\n  \"delay_compensated\": " << (data.delay_compensated ? "true" : "false");
    if (!data.metadata.empty()) {
        nlohmann::json meta(data.metadata);
        os << ",\n  \"meta\": " << meta.dump();
    }
    os << ",\n  \"points\": [";
    auto write = [&os](const CMatrix& g, bool imag) {
        os << '[';
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            os << (r ? ", [" : "[");
            for (Eigen::Index c = 0; c < g.cols(); ++c) {
                os << (c ? ", " : "") << format_double(imag ? g(r, c).imag() : g(r, c).real());
            }
            os << ']';
        }
        os << ']';
    };
    for (std::size_t k = 0; k < data.size(); ++k) {
        os << (k ? ",\n" : "\n") << "    {\"f\": " << format_double(data.freq_hz(k)) << ", \"G_re\": ";
        write(data.response(k), false);
        os << ", \"G_im\": ";
        write(data.response(k), true);
        os << '}';
    }
    os << "\n  ]\n}\n";
    return os.str();
}

FrfDataset load_frf(const std::filesystem::path& path, FrfFormat format) {
    const std::string text = read_file(path);
    return format == FrfFormat::csv ? parse_frf_csv(text) : parse_frf_json(text);
}

void save_frf(const FrfDataset& data, const std::filesystem::path& path, FrfFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << (format == FrfFormat::csv ? frf_to_csv(data) : frf_to_json(data));
}

// --- preprocessing ---------------------------------------------------------

FrfDataset delay_compensate(const FrfDataset& data, double tau) {
    if (!std::isfinite(tau)) throw DomainError("delay must be finite");
    std::vector<CMatrix> g = data.responses();
    if (tau != 0.0) {
        for (std::size_t k = 0; k < g.size(); ++k) g[k] *= std::polar(1.0, data.omega(k) * tau);
    }
    FrfDataset out(data.frequencies_hz(), std::move(g));
    out.source_unit = data.source_unit;
    out.metadata = data.metadata;
    out.delay_compensated = true;
    return out;
}

FrfDataset band_select(const FrfDataset& data, double f_min_hz, double f_max_hz) {
    if (!(f_min_hz < f_max_hz)) throw DomainError("band selection needs f_min < f_max");
    std::vector<double> f;
    std::vector<CMatrix> g;
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (data.freq_hz(k) >= f_min_hz && data.freq_hz(k) <= f_max_hz) {
            f.push_back(data.freq_hz(k));
            g.push_back(data.response(k));
        }
    }
    if (f.empty()) throw DomainError("empty band: no frequency lines in the selected range");
    FrfDataset out(std::move(f), std::move(g));
    out.source_unit = data.source_unit;
    out.metadata = data.metadata;
    out.delay_compensated = data.delay_compensated;
    return out;
}

}  // namespace addfit
