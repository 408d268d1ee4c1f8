#include <algorithm>
#include <numbers>

#include <Eigen/SVD>

#include "addfit/frf.hpp"

namespace addfit {

CmifResult compute_cmif(const FrfDataset& data) {
    CmifResult out;
    out.freq_hz = data.frequencies_hz();
    const Eigen::Index r = std::min(data.n_u(), data.n_y());
    out.values.resize(static_cast<Eigen::Index>(data.size()), r);
    for (std::size_t k = 0; k < data.size(); ++k) {
        // JacobiSVD returns singular values sorted in decreasing order
        Eigen::JacobiSVD<CMatrix> svd(data.response(k));
        out.values.row(static_cast<Eigen::Index>(k)) = svd.singularValues().array().square().transpose();
    }
    return out;
}

namespace {

double median(std::vector<double> v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

// Height of the peak above the higher of the two lowest points reached
// before climbing to a higher value (or the grid edge) on either side.
double prominence(const RVector& y, Eigen::Index p) {
    const double v = y[p];
    double left = v;
    for (Eigen::Index i = p - 1; i >= 0 && y[i] <= v; --i) left = std::min(left, y[i]);
    double right = v;
    for (Eigen::Index i = p + 1; i < y.size() && y[i] <= v; ++i) right = std::min(right, y[i]);
    return v - std::max(left, right);
}

}  // namespace

std::vector<CmifPeak> detect_peaks(const CmifResult& cmif, const PeakOptions& options) {
    std::vector<CmifPeak> peaks;
    const Eigen::Index n = cmif.values.rows();
    if (n < 3 || cmif.values.cols() == 0) return peaks;
    const int w = std::max(options.window, 1);
    const RVector first = cmif.values.col(0);
    const double threshold =
        options.prominence_ratio * median(std::vector<double>(first.data(), first.data() + n));
    const Eigen::Index tracks = std::min<Eigen::Index>(std::max(options.tracks, 1), cmif.values.cols());

    for (Eigen::Index t = 0; t < tracks; ++t) {
        const RVector y = cmif.values.col(t);
        for (Eigen::Index p = 1; p + 1 < n; ++p) {
            bool is_max = true;
            for (Eigen::Index q = std::max<Eigen::Index>(0, p - w); q <= std::min(n - 1, p + w); ++q) {
                // first index of a plateau wins
                if ((q < p && y[q] >= y[p]) || (q > p && y[q] > y[p])) {
                    is_max = false;
                    break;
                }
            }
            if (!is_max || prominence(y, p) < threshold) continue;
            const bool duplicate = std::any_of(peaks.begin(), peaks.end(), [&](const CmifPeak& pk) {
                return pk.track != static_cast<std::size_t>(t) &&
                       std::abs(static_cast<Eigen::Index>(pk.index) - p) <= w;
            });
            if (!duplicate) peaks.push_back({static_cast<std::size_t>(p), y[p], static_cast<std::size_t>(t)});
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const CmifPeak& a, const CmifPeak& b) {
        return a.index != b.index ? a.index < b.index : a.track < b.track;
    });
    return peaks;
}

std::vector<ModeSeed> pick_modes(const CmifResult& cmif, const PeakOptions& options) {
    std::vector<ModeSeed> seeds;
    for (const auto& pk : detect_peaks(cmif, options)) {
        seeds.push_back({2.0 * std::numbers::pi * cmif.freq_hz[pk.index], options.default_zeta, pk});
    }
    return seeds;
}

}  // namespace addfit
