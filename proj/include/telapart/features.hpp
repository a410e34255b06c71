#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "telapart/preprocess.hpp"

namespace telapart {

// ---- elementary similarities -----------------------------------------------

// Pearson correlation. Undefined (nullopt) when either side has zero
// variance: a flat series carries no co-movement evidence either way.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw LengthMismatch("pearson: vector sizes differ (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    const std::size_t n = a.size();
    if (n < 2) return std::nullopt;
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
    return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

// Fraction of positions where two binary vectors agree.
inline double hamming_similarity(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size())
        throw LengthMismatch("hamming_similarity: vector sizes differ (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw LengthMismatch("hamming_similarity: vectors must be non-empty");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
    return 1.0 - static_cast<double>(diff) / static_cast<double>(a.size());
}

// ---- windowed feature extraction ----------------------------------------------

namespace detail {

// Points of one channel restricted to the window (placeholders included; they
// keep the alignment honest across coverage holes).
inline std::vector<TelemetryPoint> window_slice(const std::vector<TelemetryPoint>& points,
                                                const TimeWindow& window) {
    auto lo = std::lower_bound(points.begin(), points.end(), window.start_ts,
                               [](const TelemetryPoint& p, double t) { return p.ts <= t; });
    auto hi = std::upper_bound(lo, points.end(), window.end_ts,
                               [](double t, const TelemetryPoint& p) { return t < p.ts; });
    return std::vector<TelemetryPoint>(lo, hi);
}

}  // namespace detail

// Paired metric vectors for two devices inside one look-back window: each
// channel is aligned independently, aligned sample pairs contribute one value
// each, channels are concatenated in ascending index order. Undefined when the
// devices share fewer aligned samples than the overlap floor o.
struct NumericPair {
    std::vector<double> x;
    std::vector<double> y;
};

inline std::optional<NumericPair> extract_numeric_pair(const TelemetrySeries& x,
                                                       const TelemetrySeries& y, Feature feature,
                                                       const TimeWindow& window,
                                                       const HyperParams& hyper) {
    if (feature == Feature::Missing)
        throw InvalidConfig("extract_numeric_pair serves numeric features only");
    const Metric metric = feature == Feature::Snr ? Metric::Snr : Metric::TxPower;
    NumericPair out;
    const std::size_t channels = std::min(x.channels.size(), y.channels.size());
    for (std::size_t ch = 0; ch < channels; ++ch) {
        auto xs = detail::window_slice(x.channels[ch], window);
        auto ys = detail::window_slice(y.channels[ch], window);
        Alignment al = align(xs, ys);
        for (auto [i, j] : al.pairs) {
            out.x.push_back(xs[i].metrics->get(metric));
            out.y.push_back(ys[j].metrics->get(metric));
        }
    }
    if (out.x.size() < hyper.effective_min_overlap()) return std::nullopt;
    return out;
}

// Availability vector over the grid epochs whose centers fall in the window:
// 1 when any channel produced a sample for that epoch, 0 when every channel
// missed it. All devices of an fNode share the same epoch axis, so these
// vectors always have equal length and need no overlap floor.
inline std::vector<bool> missing_vector(const std::vector<std::vector<bool>>& coverage,
                                        const EpochGrid& grid, const TimeWindow& window) {
    std::vector<bool> out;
    for (std::size_t e = 0; e < grid.epochs.size(); ++e) {
        if (!window.contains(grid.epochs[e].center())) continue;
        bool any = false;
        for (const auto& ch : coverage)
            if (e < ch.size() && ch[e]) {
                any = true;
                break;
            }
        out.push_back(any);
    }
    return out;
}

// ---- similarity matrix ----------------------------------------------------------

struct SimilarityMatrix {
    Feature feature = Feature::Snr;
    std::vector<std::string> device_ids;            // sorted ascending
    std::vector<std::optional<double>> cells;       // row-major, size n*n

    std::size_t size() const { return device_ids.size(); }

    std::optional<double>& at(std::size_t i, std::size_t j) { return cells[i * size() + j]; }
    const std::optional<double>& at(std::size_t i, std::size_t j) const {
        return cells[i * size() + j];
    }
};

inline SimilarityMatrix similarity_matrix(const PreparedFNode& fnode, Feature feature,
                                          const TimeWindow& window, const HyperParams& hyper) {
    SimilarityMatrix m;
    m.feature = feature;
    for (const auto& [did, dev] : fnode.data.devices) m.device_ids.push_back(did);
    const std::size_t n = m.device_ids.size();
    m.cells.assign(n * n, std::nullopt);

    if (feature == Feature::Missing) {
        std::vector<std::vector<bool>> vectors(n);
        for (std::size_t i = 0; i < n; ++i)
            vectors[i] = missing_vector(fnode.coverage.at(m.device_ids[i]), fnode.grid, window);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
                if (vectors[i].empty() || vectors[j].empty()) continue;
                double sim = hamming_similarity(vectors[i], vectors[j]);
                m.at(i, j) = sim;
                m.at(j, i) = sim;
            }
        }
        return m;
    }

    // Numeric feature: pre-slice each device's window once, then align pairs.
    std::vector<const TelemetrySeries*> series(n);
    std::vector<TelemetrySeries> sliced(n);
    for (std::size_t i = 0; i < n; ++i) {
        series[i] = &fnode.series(m.device_ids[i]);
        sliced[i].device_id = series[i]->device_id;
        sliced[i].fnode_id = series[i]->fnode_id;
        sliced[i].channels.resize(series[i]->channels.size());
        for (std::size_t ch = 0; ch < series[i]->channels.size(); ++ch)
            sliced[i].channels[ch] = detail::window_slice(series[i]->channels[ch], window);
    }
    TimeWindow everything{-std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            auto pair = extract_numeric_pair(sliced[i], sliced[j], feature, everything, hyper);
            if (!pair) continue;
            auto sim = pearson(pair->x, pair->y);
            if (!sim) continue;
            m.at(i, j) = *sim;
            m.at(j, i) = *sim;
        }
    }
    return m;
}

}  // namespace telapart
