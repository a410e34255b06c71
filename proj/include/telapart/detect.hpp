#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "telapart/cluster.hpp"
#include "telapart/preprocess.hpp"

namespace telapart {

// ---- per-device anomaly test ----------------------------------------------------
//
// A metric is anomalous inside a window when at least the configured fraction
// of its real samples (all channels pooled) breach the calibrated threshold.
// A device whose window holds no real sample at all is anomalous on the
// availability dimension instead.

struct DeviceAnomaly {
    std::map<Metric, bool> per_metric;
    bool window_all_missing = false;

    bool metric(Metric m) const {
        auto it = per_metric.find(m);
        return it != per_metric.end() && it->second;
    }

    bool any() const {
        if (window_all_missing) return true;
        for (const auto& [m, v] : per_metric)
            if (v) return true;
        return false;
    }

    // The anomaly evidence relevant to one clustering feature: SNR clusters
    // are judged on SNR breaches, Tx clusters on the statistically coupled
    // Tx/Rx pair, availability clusters on availability loss.
    bool for_feature(Feature f) const {
        switch (f) {
        case Feature::Snr: return metric(Metric::Snr);
        case Feature::TxPower: return metric(Metric::TxPower) || metric(Metric::RxPower);
        case Feature::Missing: return window_all_missing;
        }
        return false;
    }
};

inline DeviceAnomaly device_anomalous(const TelemetrySeries& series, const TimeWindow& window,
                                      const DetectionThresholds& thresholds,
                                      double anomaly_fraction) {
    std::size_t total = 0;
    std::map<Metric, std::size_t> breaches;
    for (const auto& ch : series.channels) {
        for (const auto& p : ch) {
            if (p.placeholder() || !window.contains(p.ts)) continue;
            ++total;
            for (const auto& [metric, thr] : thresholds.per_metric)
                if (thr.breach(p.metrics->get(metric))) ++breaches[metric];
        }
    }
    DeviceAnomaly out;
    out.window_all_missing = total == 0;
    for (const auto& [metric, thr] : thresholds.per_metric) {
        std::size_t b = breaches.count(metric) ? breaches[metric] : 0;
        out.per_metric[metric] =
            total > 0 && static_cast<double>(b) >= anomaly_fraction * static_cast<double>(total);
    }
    return out;
}

// ---- cluster flagging --------------------------------------------------------------

// A cluster is flagged as soon as any member shows the anomaly evidence passed
// in; healthy clusters are those with no anomalous member.
inline std::vector<bool> flag_clusters(const Partition& partition,
                                       const std::map<std::string, bool>& anomalous) {
    std::vector<bool> out(partition.clusters.size(), false);
    for (std::size_t c = 0; c < partition.clusters.size(); ++c) {
        for (const auto& id : partition.clusters[c]) {
            auto it = anomalous.find(id);
            if (it != anomalous.end() && it->second) {
                out[c] = true;
                break;
            }
        }
    }
    return out;
}

// ---- threshold calibration -----------------------------------------------------------
//
// Data-driven stand-in for a single-device detector: for each metric, scan
// 100 candidate thresholds across the 1st..99th percentile of observed values
// in both directions, flag the device-windows whose breach fraction clears
// the anomaly fraction, and keep the candidate that concentrates the most
// trouble tickets per flagged device-hour. Candidates flagging less than 1%
// of total device time are rejected as degenerate (a lucky ticket over a few
// flagged hours would otherwise dominate). Ties prefer the less aggressive
// threshold, i.e. the one flagging less.

namespace detail {

struct DeviceWindowValues {
    const std::string* device_id;
    double start_ts;
    double end_ts;
    std::map<Metric, std::vector<double>> sorted_values;  // ascending
    std::size_t total_points = 0;
    std::size_t tickets = 0;
};

inline double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    double idx = p / 100.0 * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    std::size_t hi = std::min(sorted.size() - 1, lo + 1);
    double w = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - w) + sorted[hi] * w;
}

}  // namespace detail

inline DetectionThresholds calibrate_detection(const std::map<std::string, FNodeDataset>& datasets,
                                               const std::vector<Ticket>& tickets,
                                               double lookback_days, double anomaly_fraction) {
    if (tickets.empty()) throw NoTickets("detection calibration needs at least one ticket");
    const TimeWindow span = dataset_span(datasets);
    const double window_s = hours_to_seconds(lookback_days * 24.0);
    const std::size_t n_windows =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((span.length()) / window_s)));

    // Bucket every real sample and every ticket into tiling device-windows.
    std::vector<detail::DeviceWindowValues> cells;
    std::map<std::pair<std::string, std::size_t>, std::size_t> cell_index;
    std::map<Metric, std::vector<double>> all_values;
    for (const auto& [fid, fnode] : datasets) {
        for (const auto& [did, dev] : fnode.devices) {
            for (std::size_t w = 0; w < n_windows; ++w) {
                detail::DeviceWindowValues cell;
                cell.device_id = &did;
                cell.start_ts = span.start_ts + static_cast<double>(w) * window_s;
                cell.end_ts = std::min(span.end_ts, cell.start_ts + window_s);
                cell_index[{did, w}] = cells.size();
                cells.push_back(std::move(cell));
            }
            for (const auto& ch : dev.channels) {
                for (const auto& p : ch) {
                    if (p.placeholder()) continue;
                    std::size_t w = std::min(
                        n_windows - 1,
                        static_cast<std::size_t>(std::max(0.0, (p.ts - span.start_ts) / window_s -
                                                                    1e-12)));
                    auto& cell = cells[cell_index[{did, w}]];
                    ++cell.total_points;
                    for (Metric m : kAllMetrics) {
                        cell.sorted_values[m].push_back(p.metrics->get(m));
                        all_values[m].push_back(p.metrics->get(m));
                    }
                }
            }
        }
    }
    for (auto& cell : cells)
        for (auto& [m, v] : cell.sorted_values) std::sort(v.begin(), v.end());
    for (auto& [m, v] : all_values) std::sort(v.begin(), v.end());

    for (const auto& t : tickets) {
        if (t.open_ts < span.start_ts || t.open_ts > span.end_ts) continue;
        std::size_t w = std::min(n_windows - 1, static_cast<std::size_t>(std::max(
                                                    0.0, (t.open_ts - span.start_ts) / window_s - 1e-12)));
        auto it = cell_index.find({t.device_id, w});
        if (it != cell_index.end()) ++cells[it->second].tickets;
    }

    double total_hours = 0.0;
    for (const auto& cell : cells) total_hours += seconds_to_hours(cell.end_ts - cell.start_ts);

    DetectionThresholds out;
    for (Metric m : kAllMetrics) {
        const auto& values = all_values[m];
        MetricThreshold best{values.empty() ? 0.0 : values.front(), Direction::Below};
        double best_rate = -1.0;
        double best_flagged_hours = 0.0;
        bool have_best = false;
        if (!values.empty()) {
            const double p1 = detail::percentile(values, 1.0);
            const double p99 = detail::percentile(values, 99.0);
            for (Direction dir : {Direction::Below, Direction::Above}) {
                for (int step = 0; step < 100; ++step) {
                    MetricThreshold cand{p1 + (p99 - p1) * step / 99.0, dir};
                    double flagged_hours = 0.0;
                    std::size_t flagged_tickets = 0;
                    for (const auto& cell : cells) {
                        if (cell.total_points == 0) continue;
                        auto vit = cell.sorted_values.find(m);
                        const auto& sv = vit->second;
                        std::size_t breaches;
                        if (dir == Direction::Below)
                            breaches = static_cast<std::size_t>(
                                std::lower_bound(sv.begin(), sv.end(), cand.value) - sv.begin());
                        else
                            breaches = sv.size() - static_cast<std::size_t>(std::upper_bound(
                                                       sv.begin(), sv.end(), cand.value) -
                                                   sv.begin());
                        if (static_cast<double>(breaches) >=
                            anomaly_fraction * static_cast<double>(cell.total_points)) {
                            flagged_hours += seconds_to_hours(cell.end_ts - cell.start_ts);
                            flagged_tickets += cell.tickets;
                        }
                    }
                    if (flagged_hours < 0.01 * total_hours || flagged_hours <= 0.0) continue;
                    double rate = static_cast<double>(flagged_tickets) / flagged_hours;
                    // Ties keep the candidate flagging the least; between equal
                    // flagged time, the earlier (less aggressive) direction order
                    // and threshold position win.
                    bool take = false;
                    if (!have_best || rate > best_rate) {
                        take = true;
                    } else if (rate == best_rate && flagged_hours < best_flagged_hours) {
                        take = true;
                    }
                    if (take) {
                        best = cand;
                        best_rate = rate;
                        best_flagged_hours = flagged_hours;
                        have_best = true;
                    }
                }
            }
        }
        if (!have_best && !values.empty()) {
            // No candidate cleared the flagged-time floor: fall back to the
            // least aggressive candidate (flags nothing anywhere).
            best = MetricThreshold{detail::percentile(values, 1.0), Direction::Below};
        }
        out.per_metric[m] = best;
    }
    return out;
}

}  // namespace telapart
