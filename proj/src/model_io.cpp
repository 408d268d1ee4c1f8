#include "addfit/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace addfit {

std::string format_double(double x) {
    if (!std::isfinite(x)) throw DomainError("cannot serialize a non-finite number");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

void write_matrix(std::ostringstream& os, const RMatrix& m) {
    os << '[';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (r) os << ", ";
        os << '[';
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ", ";
            os << format_double(m(r, c));
        }
        os << ']';
    }
    os << ']';
}

RMatrix read_matrix(const nlohmann::json& j) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw ParseError("matrix must be a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    RMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError("ragged matrix row " + std::to_string(r));
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace

std::string model_to_json(const AdditiveModel& model) {
    std::ostringstream os;
    os << "{\n  \"n_u\": " << model.n_u() << ",\n  \"n_y\": " << model.n_y()
       << ",\n  \"submodels\": [";
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto& sub = model[i];
        os << (i ? ",\n" : "\n") << "    {\"ell\": " << sub.ell() << ", \"den\": [";
        const auto& a = sub.den().coefficients();
        for (std::size_t r = 0; r < a.size(); ++r) os << (r ? ", " : "") << format_double(a[r]);
        os << "], \"num\": [";
        const auto& b = sub.num().coefficients();
        for (std::size_t r = 0; r < b.size(); ++r) {
            if (r) os << ", ";
            write_matrix(os, b[r]);
        }
        os << "]}";
    }
    os << "\n  ]\n}\n";
    return os.str();
}

AdditiveModel model_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }
    try {
        const auto n_u = doc.at("n_u").get<Eigen::Index>();
        const auto n_y = doc.at("n_y").get<Eigen::Index>();
        std::vector<Submodel> subs;
        for (const auto& js : doc.at("submodels")) {
            std::vector<RMatrix> num;
            for (const auto& jm : js.at("num")) {
                num.push_back(read_matrix(jm));
                if (num.back().rows() != n_y || num.back().cols() != n_u) {
                    throw StructureError("numerator matrix does not match n_y x n_u");
                }
            }
            subs.emplace_back(js.at("ell").get<int>(),
                              ScalarDenominator(js.at("den").get<std::vector<double>>()),
                              MatrixNumerator(std::move(num)));
        }
        return AdditiveModel(std::move(subs));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }
}

void save_model(const AdditiveModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << model_to_json(model);
}

AdditiveModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace addfit
