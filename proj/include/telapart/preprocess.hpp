#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "telapart/model.hpp"

namespace telapart {

// ---- deduplication ----------------------------------------------------------
//
// SNMP retries occasionally deliver the same collection round twice, a few
// seconds apart. Within one channel we drop every point closer than L/4 to the
// last kept point, keeping the earliest of each burst. Output spacing is
// therefore at least L/4, which no real collection round violates (rounds are
// L apart with jitter well under L/2).

inline std::vector<TelemetryPoint> dedupe_channel(const std::vector<TelemetryPoint>& points,
                                                  double collection_interval_hours) {
    const double min_gap = hours_to_seconds(collection_interval_hours / 4.0);
    std::vector<TelemetryPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (!out.empty() && p.ts - out.back().ts < min_gap) continue;
        out.push_back(p);
    }
    return out;
}

inline TelemetrySeries dedupe_series(const TelemetrySeries& series, double collection_interval_hours) {
    TelemetrySeries out = series;
    for (auto& ch : out.channels) ch = dedupe_channel(ch, collection_interval_hours);
    return out;
}

// ---- missing-sample inference -----------------------------------------------
//
// Scan a channel left to right. Whenever the gap between the last emitted
// point (real or placeholder) and the next real point reaches the calibrated
// threshold L_missing, emit a placeholder one nominal interval L after the
// last emitted point, and repeat until the gap closes. Placeholders mark
// collection rounds the device should have answered; they carry no metrics.
// Running the scan twice changes nothing: every emitted gap is below the
// threshold, so a second pass finds nothing to fill.

inline std::vector<TelemetryPoint> infer_missing(const std::vector<TelemetryPoint>& points,
                                                 double missing_threshold_hours,
                                                 double collection_interval_hours) {
    const double threshold = hours_to_seconds(missing_threshold_hours);
    const double interval = hours_to_seconds(collection_interval_hours);
    std::vector<TelemetryPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (!out.empty()) {
            while (p.ts - out.back().ts >= threshold)
                out.push_back(TelemetryPoint::gap(out.back().ts + interval));
        }
        out.push_back(p);
    }
    return out;
}

// ---- pairwise alignment -------------------------------------------------------
//
// Two devices rarely sample at identical instants. For series x and y we map
// every x timestamp to its nearest y timestamp and vice versa, and keep only
// the pairs agreeing in both directions. One-directional mappings are pruned:
// they would reuse a point of the shorter series for several points of the
// longer one. Distance ties resolve toward the earlier timestamp so the
// result never depends on evaluation order. Pairs touching a placeholder are
// dropped at the end; placeholders still participate in the nearest-neighbour
// search, which stops real points from pairing across a known coverage hole.

struct Alignment {
    // (index into x, index into y), both sides non-placeholder samples.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

namespace detail {

// For every element of `from`, index of the nearest element of `to`
// (ties toward the earlier timestamp). Both inputs sorted by ts.
inline std::vector<std::size_t> nearest_map(std::span<const TelemetryPoint> from,
                                            std::span<const TelemetryPoint> to) {
    std::vector<std::size_t> out(from.size());
    std::size_t j = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const double t = from[i].ts;
        while (j + 1 < to.size() && to[j + 1].ts < t) ++j;
        // Candidates are to[j] and to[j+1]; strict < keeps the earlier one on ties.
        std::size_t best = j;
        if (j + 1 < to.size() && std::abs(to[j + 1].ts - t) < std::abs(to[j].ts - t)) best = j + 1;
        out[i] = best;
    }
    return out;
}

}  // namespace detail

inline Alignment align(std::span<const TelemetryPoint> x, std::span<const TelemetryPoint> y) {
    Alignment out;
    if (x.empty() || y.empty()) return out;
    auto x_to_y = detail::nearest_map(x, y);
    auto y_to_x = detail::nearest_map(y, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t j = x_to_y[i];
        if (y_to_x[j] != i) continue;            // one-directional, prune
        if (x[i].placeholder() || y[j].placeholder()) continue;
        out.pairs.emplace_back(i, j);
    }
    return out;
}

inline Alignment align(const std::vector<TelemetryPoint>& x, const std::vector<TelemetryPoint>& y) {
    return align(std::span<const TelemetryPoint>(x), std::span<const TelemetryPoint>(y));
}

// ---- collection-epoch detection ------------------------------------------------
//
// An fNode polls all its devices in rounds. Pooling every timestamp of every
// device exposes those rounds as dense 1-d clusters; DBSCAN over the pooled
// multiset recovers them without assuming a phase or an exact period. A
// cluster's earliest timestamp is the epoch start t_i, the spread is the
// jitter delta_i. Noise points (stragglers matching no round) are discarded.

struct Epoch {
    double start_ts = 0.0;  // t_i, seconds
    double span_s = 0.0;    // delta_i, seconds

    double center() const { return start_ts + span_s / 2.0; }
    bool operator==(const Epoch&) const = default;
};

struct EpochGrid {
    std::vector<Epoch> epochs;  // sorted by start_ts
    double collection_interval_hours = 4.0;
};

// Classic DBSCAN specialised to sorted 1-d data: the eps-neighbourhood of a
// point is a contiguous index range, so range bounds come from two pointers.
// A point is core when its neighbourhood (itself included) holds at least
// min_samples points; clusters are the connected unions of core
// neighbourhoods; non-core points inside a core's reach join that cluster.
inline EpochGrid detect_epochs(std::vector<double> timestamps, double eps_hours,
                               std::size_t min_samples, double collection_interval_hours) {
    EpochGrid grid;
    grid.collection_interval_hours = collection_interval_hours;
    if (timestamps.empty()) return grid;
    std::sort(timestamps.begin(), timestamps.end());
    const std::size_t n = timestamps.size();
    const double eps = hours_to_seconds(eps_hours);

    // Neighbourhood ranges [lo[i], hi[i]) via two pointers.
    std::vector<std::size_t> lo(n), hi(n);
    {
        std::size_t a = 0, b = 0;
        for (std::size_t i = 0; i < n; ++i) {
            while (timestamps[i] - timestamps[a] > eps) ++a;
            if (b < i + 1) b = i + 1;
            while (b < n && timestamps[b] - timestamps[i] <= eps) ++b;
            lo[i] = a;
            hi[i] = b;
        }
    }

    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = hi[i] - lo[i] >= min_samples;

    // Sweep in time order; a new cluster starts at each unclaimed core point,
    // and extends while consecutive core points can reach each other.
    std::vector<int> cluster(n, -1);
    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || cluster[i] >= 0) continue;
        int id = next_cluster++;
        // Claim everything this core reaches, then keep expanding through any
        // core point that became part of the cluster.
        std::size_t frontier = lo[i];
        std::size_t end = hi[i];
        for (std::size_t k = frontier; k < end; ++k)
            if (cluster[k] < 0) cluster[k] = id;
        std::size_t scan = i;
        while (true) {
            // Find the furthest reach of any core point currently in cluster.
            std::size_t new_end = end;
            for (; scan < end; ++scan)
                if (core[scan] && cluster[scan] == id) new_end = std::max(new_end, hi[scan]);
            if (new_end == end) break;
            for (std::size_t k = end; k < new_end; ++k)
                if (cluster[k] < 0) cluster[k] = id;
            end = new_end;
        }
    }

    // Collapse labelled runs into epochs.
    for (int id = 0; id < next_cluster; ++id) {
        double mn = std::numeric_limits<double>::infinity();
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (cluster[i] != id) continue;
            mn = std::min(mn, timestamps[i]);
            mx = std::max(mx, timestamps[i]);
        }
        if (mn <= mx) grid.epochs.push_back(Epoch{mn, mx - mn});
    }
    std::sort(grid.epochs.begin(), grid.epochs.end(),
              [](const Epoch& a, const Epoch& b) { return a.start_ts < b.start_ts; });
    return grid;
}

// How far the detected grid is from a clean schedule with period L: sum over
// consecutive epoch centers of the distance between their gap and the nearest
// positive multiple of L. Exactly periodic grids (with any number of whole
// rounds skipped between epochs) score zero. Returned in hours.
inline double epoch_error(const EpochGrid& grid) {
    const double interval = hours_to_seconds(grid.collection_interval_hours);
    if (grid.epochs.size() < 2) return 0.0;
    double err = 0.0;
    for (std::size_t i = 1; i < grid.epochs.size(); ++i) {
        double gap = grid.epochs[i].center() - grid.epochs[i - 1].center();
        double k = std::max(1.0, std::round(gap / interval));
        double dev = std::abs(gap - k * interval);
        // round() can land one multiple off when gap < L/2; check neighbours.
        if (k > 1) dev = std::min(dev, std::abs(gap - (k - 1) * interval));
        dev = std::min(dev, std::abs(gap - (k + 1) * interval));
        err += dev;
    }
    return seconds_to_hours(err);
}

// Pick DBSCAN parameters by sweeping a small grid and keeping the pair whose
// epoch grid deviates least from a periodic schedule. Ties prefer the
// smallest radius, then the smallest density requirement.
struct EpochParams {
    double eps_hours = 0.1;
    std::size_t min_samples = 2;
};

inline EpochParams calibrate_epoch_params(const std::vector<double>& timestamps,
                                          double collection_interval_hours) {
    if (timestamps.size() < 2)
        throw InsufficientData("epoch calibration needs at least two timestamps");
    EpochParams best;
    double best_err = std::numeric_limits<double>::infinity();
    const double max_eps = collection_interval_hours / 2.0;
    for (int step = 1; step * 0.1 <= max_eps + 1e-9; ++step) {
        const double eps = step * 0.1;
        for (std::size_t ms = 2; ms <= 10; ++ms) {
            double err = epoch_error(detect_epochs(timestamps, eps, ms, collection_interval_hours));
            if (err < best_err) {
                best_err = err;
                best = EpochParams{eps, ms};
            }
        }
    }
    return best;
}

// ---- per-channel epoch coverage ---------------------------------------------
//
// A channel covers epoch i when it has at least one real sample inside the
// epoch's collection window, padded by L/4 on both sides to absorb jitter.
// The complement ("misses epoch i") is the ground truth that missing-sample
// inference is calibrated against.

inline std::vector<std::vector<bool>> channel_epoch_coverage(const TelemetrySeries& series,
                                                             const EpochGrid& grid) {
    const double pad = hours_to_seconds(grid.collection_interval_hours / 4.0);
    std::vector<std::vector<bool>> covered(series.channels.size(),
                                           std::vector<bool>(grid.epochs.size(), false));
    for (std::size_t ch = 0; ch < series.channels.size(); ++ch) {
        const auto& points = series.channels[ch];
        std::size_t p = 0;
        for (std::size_t e = 0; e < grid.epochs.size(); ++e) {
            const double lo = grid.epochs[e].start_ts - pad;
            const double hi = grid.epochs[e].start_ts + grid.epochs[e].span_s + pad;
            while (p < points.size() && (points[p].ts < lo || points[p].placeholder())) ++p;
            // p now sits at the first real point with ts >= lo; look ahead for
            // one inside [lo, hi] without consuming points later epochs need.
            std::size_t q = p;
            while (q < points.size() && points[q].ts <= hi) {
                if (!points[q].placeholder()) {
                    covered[ch][e] = true;
                    break;
                }
                ++q;
            }
        }
    }
    return covered;
}

inline std::vector<std::vector<bool>> ground_truth_missing(const TelemetrySeries& series,
                                                           const EpochGrid& grid) {
    auto covered = channel_epoch_coverage(series, grid);
    for (auto& ch : covered)
        for (std::size_t e = 0; e < ch.size(); ++e) ch[e] = !ch[e];
    return covered;
}

// ---- missing-threshold calibration --------------------------------------------
//
// Sweep candidate thresholds between one and two collection intervals. For
// each candidate, run the inference on every channel and compare, between each
// pair of adjacent real samples, the number of inserted placeholders (m)
// against the number of grid epochs the channel actually missed there (n):
//   n == m == 0 -> one true negative          n == m != 0 -> n true positives
//   n > m       -> m TP and n-m false negatives
//   n < m       -> n TP and m-n false positives
// Keep the candidate with the best accuracy; ties keep the smallest.

struct MissingCalibration {
    double threshold_hours = 6.0;
    double accuracy = 0.0;
};

namespace detail {

struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

    double accuracy() const {
        std::uint64_t total = tp + tn + fp + fn;
        return total == 0 ? 1.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
    }
};

// Count placeholders the inference would insert between two real samples.
inline std::uint64_t inferred_gap_count(double prev_ts, double next_ts, double threshold_s,
                                        double interval_s) {
    std::uint64_t m = 0;
    double last = prev_ts;
    while (next_ts - last >= threshold_s) {
        last += interval_s;
        ++m;
    }
    return m;
}

}  // namespace detail

inline MissingCalibration calibrate_missing_threshold(const FNodeDataset& dataset,
                                                      const EpochGrid& grid) {
    const double interval_h = dataset.collection_interval_hours;
    const double interval_s = hours_to_seconds(interval_h);

    // Gather, per channel, the real timestamps and the number of missed grid
    // epochs between each adjacent pair (prefix sums over missed epoch centers).
    struct ChannelTruth {
        std::vector<double> ts;
        std::vector<std::uint64_t> missed_between;  // size ts.size()-1
    };
    std::vector<ChannelTruth> channels;
    bool any_pair = false;
    for (const auto& [did, dev] : dataset.devices) {
        auto missing = ground_truth_missing(dev, grid);
        for (std::size_t ch = 0; ch < dev.channels.size(); ++ch) {
            ChannelTruth ct;
            for (const auto& p : dev.channels[ch])
                if (!p.placeholder()) ct.ts.push_back(p.ts);
            if (ct.ts.size() < 2) continue;
            any_pair = true;
            std::vector<double> missed_centers;
            for (std::size_t e = 0; e < grid.epochs.size(); ++e)
                if (missing[ch][e]) missed_centers.push_back(grid.epochs[e].center());
            ct.missed_between.resize(ct.ts.size() - 1);
            for (std::size_t i = 0; i + 1 < ct.ts.size(); ++i) {
                auto lo = std::upper_bound(missed_centers.begin(), missed_centers.end(), ct.ts[i]);
                auto hi = std::lower_bound(missed_centers.begin(), missed_centers.end(), ct.ts[i + 1]);
                ct.missed_between[i] = static_cast<std::uint64_t>(hi - lo);
            }
            channels.push_back(std::move(ct));
        }
    }
    if (!any_pair)
        throw InsufficientData("missing-threshold calibration needs a channel with two samples");

    MissingCalibration best;
    double best_acc = -1.0;
    for (int step = 1; step <= 39; ++step) {
        const double candidate_h = interval_h + step * (interval_h / 40.0);
        const double candidate_s = hours_to_seconds(candidate_h);
        detail::ConfusionCounts counts;
        for (const auto& ct : channels) {
            for (std::size_t i = 0; i + 1 < ct.ts.size(); ++i) {
                std::uint64_t m =
                    detail::inferred_gap_count(ct.ts[i], ct.ts[i + 1], candidate_s, interval_s);
                std::uint64_t n = ct.missed_between[i];
                if (n == m) {
                    if (n == 0)
                        ++counts.tn;
                    else
                        counts.tp += n;
                } else if (n > m) {
                    counts.tp += m;
                    counts.fn += n - m;
                } else {
                    counts.tp += n;
                    counts.fp += m - n;
                }
            }
        }
        double acc = counts.accuracy();
        if (acc > best_acc) {
            best_acc = acc;
            best = MissingCalibration{candidate_h, acc};
        }
    }
    return best;
}

// ---- uniform resampling (comparison baseline) ----------------------------------
//
// The straw-man preprocessing: linear interpolation of each channel onto the
// exact k*L grid covering its own observed span. No extrapolation beyond the
// first and last samples. Kept for head-to-head comparisons; the production
// pipeline never calls it.

inline std::vector<TelemetryPoint> resample_channel_uniform(const std::vector<TelemetryPoint>& points,
                                                            double collection_interval_hours) {
    std::vector<TelemetryPoint> real;
    for (const auto& p : points)
        if (!p.placeholder()) real.push_back(p);
    if (real.size() < 2)
        throw InsufficientData("uniform resampling needs at least two samples per channel");
    const double interval = hours_to_seconds(collection_interval_hours);
    const double first = real.front().ts;
    const double last = real.back().ts;
    std::vector<TelemetryPoint> out;
    std::size_t seg = 0;
    for (double k = std::ceil(first / interval - 1e-9);; k += 1.0) {
        const double t = k * interval;
        if (t > last + 1e-9) break;
        if (t < first - 1e-9) continue;
        while (seg + 2 < real.size() && real[seg + 1].ts <= t) ++seg;
        const auto& a = real[seg];
        const auto& b = real[seg + 1];
        double w = (b.ts == a.ts) ? 0.0 : (t - a.ts) / (b.ts - a.ts);
        w = std::clamp(w, 0.0, 1.0);
        MetricValues mv;
        mv.snr_db = a.metrics->snr_db + w * (b.metrics->snr_db - a.metrics->snr_db);
        mv.tx_power_dbmv = a.metrics->tx_power_dbmv + w * (b.metrics->tx_power_dbmv - a.metrics->tx_power_dbmv);
        mv.rx_power_dbmv = a.metrics->rx_power_dbmv + w * (b.metrics->rx_power_dbmv - a.metrics->rx_power_dbmv);
        out.push_back(TelemetryPoint{t, mv});
    }
    return out;
}

inline TelemetrySeries resample_series_uniform(const TelemetrySeries& series,
                                               double collection_interval_hours) {
    TelemetrySeries out = series;
    for (auto& ch : out.channels) ch = resample_channel_uniform(ch, collection_interval_hours);
    return out;
}

// ---- prepared fnode -----------------------------------------------------------
//
// Everything downstream (features, detection, diagnosis) works off a prepared
// fNode: channels deduplicated then gap-filled with placeholders, plus the
// epoch grid detected once over the full pooled timeline and each channel's
// epoch coverage bitmap.

struct PreparedFNode {
    FNodeDataset data;  // deduped, placeholders inserted
    EpochGrid grid;
    std::map<std::string, std::vector<std::vector<bool>>> coverage;  // device -> channel -> epoch

    const TelemetrySeries& series(const std::string& device_id) const {
        auto it = data.devices.find(device_id);
        if (it == data.devices.end())
            throw UnknownDevice("unknown device '" + device_id + "' in fnode '" + data.fnode_id + "'");
        return it->second;
    }
};

inline PreparedFNode prepare_fnode(const FNodeDataset& raw, const HyperParams& hyper) {
    PreparedFNode out;
    out.data.fnode_id = raw.fnode_id;
    out.data.collection_interval_hours = raw.collection_interval_hours;
    out.data.channel_count = raw.channel_count;

    std::vector<double> pooled;
    for (const auto& [did, dev] : raw.devices) {
        TelemetrySeries clean = dedupe_series(dev, raw.collection_interval_hours);
        for (const auto& ch : clean.channels)
            for (const auto& p : ch)
                if (!p.placeholder()) pooled.push_back(p.ts);
        out.data.devices.emplace(did, std::move(clean));
    }
    out.grid = detect_epochs(pooled, hyper.epoch_eps_hours, hyper.epoch_min_samples,
                             raw.collection_interval_hours);
    for (auto& [did, dev] : out.data.devices) {
        out.coverage.emplace(did, channel_epoch_coverage(dev, out.grid));
        for (auto& ch : dev.channels)
            ch = infer_missing(ch, hyper.missing_threshold_hours, raw.collection_interval_hours);
    }
    return out;
}

}  // namespace telapart
