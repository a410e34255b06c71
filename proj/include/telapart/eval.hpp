#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "telapart/tune.hpp"

namespace telapart {

// ---- partition agreement ------------------------------------------------------

struct PairConfusion {
    std::uint64_t tp = 0;  // same cluster in both
    std::uint64_t fp = 0;  // same in pred, split in truth
    std::uint64_t fn = 0;  // split in pred, same in truth
    std::uint64_t tn = 0;  // split in both

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

namespace detail {

inline std::map<std::string, std::size_t> cluster_index(const Partition& p) {
    std::map<std::string, std::size_t> out;
    for (std::size_t c = 0; c < p.clusters.size(); ++c)
        for (const auto& id : p.clusters[c]) {
            if (out.count(id))
                throw DeviceSetMismatch("device '" + id + "' appears in two clusters");
            out[id] = c;
        }
    return out;
}

inline std::uint64_t choose2(std::uint64_t n) { return n * (n - 1) / 2; }

}  // namespace detail

inline PairConfusion pair_confusion(const Partition& pred, const Partition& truth) {
    auto pi = detail::cluster_index(pred);
    auto ti = detail::cluster_index(truth);
    if (pi.size() != ti.size())
        throw DeviceSetMismatch("partitions cover different device sets");
    std::vector<std::pair<std::size_t, std::size_t>> labels;
    labels.reserve(pi.size());
    for (const auto& [id, pc] : pi) {
        auto it = ti.find(id);
        if (it == ti.end()) throw DeviceSetMismatch("device '" + id + "' missing from truth partition");
        labels.emplace_back(pc, it->second);
    }
    // Pair counts via the contingency table rather than the quadratic loop.
    std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> joint;
    std::map<std::size_t, std::uint64_t> pred_sz, truth_sz;
    for (auto [a, b] : labels) {
        ++joint[{a, b}];
        ++pred_sz[a];
        ++truth_sz[b];
    }
    std::uint64_t n = labels.size();
    std::uint64_t same_both = 0, same_pred = 0, same_truth = 0;
    for (const auto& [k, c] : joint) same_both += detail::choose2(c);
    for (const auto& [k, c] : pred_sz) same_pred += detail::choose2(c);
    for (const auto& [k, c] : truth_sz) same_truth += detail::choose2(c);
    PairConfusion out;
    out.tp = same_both;
    out.fp = same_pred - same_both;
    out.fn = same_truth - same_both;
    out.tn = detail::choose2(n) - same_pred - same_truth + same_both;
    return out;
}

inline double rand_index(const Partition& pred, const Partition& truth) {
    PairConfusion c = pair_confusion(pred, truth);
    if (c.total() == 0) return 1.0;  // single device: no pairs to disagree on
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

// Chance-adjusted agreement from the contingency table:
//   ARI = (sum_ij C(n_ij,2) - E) / (max - E),  E = sum_i C(a_i,2) sum_j C(b_j,2) / C(n,2)
// Degenerate tables (both all-singletons or both one cluster) make the
// denominator zero; equal partitions then score 1, unequal 0.
inline double adjusted_rand_index(const Partition& pred, const Partition& truth) {
    PairConfusion c = pair_confusion(pred, truth);
    if (c.total() == 0) return 1.0;
    const double n2 = static_cast<double>(c.total());
    const double sum_joint = static_cast<double>(c.tp);
    const double sum_pred = static_cast<double>(c.tp + c.fp);
    const double sum_truth = static_cast<double>(c.tp + c.fn);
    const double expected = sum_pred * sum_truth / n2;
    const double maximum = 0.5 * (sum_pred + sum_truth);
    if (maximum == expected) {
        Partition a = pred, b = truth;
        a.canonicalize();
        b.canonicalize();
        return a == b ? 1.0 : 0.0;
    }
    return (sum_joint - expected) / (maximum - expected);
}

// ---- normalized-rate report ------------------------------------------------------
//
// The four separation checks a sound diagnosis must show: tickets of each kind
// concentrate in the matching diagnosis label, and both labelled states ticket
// above baseline. A check only passes when both sides are defined.

struct RateReport {
    TicketStats stats;
    bool mm_above_sm = false;  // norm R_mM > norm R_sM > 1
    bool mm_above_ms = false;  // norm R_mM > norm R_mS > 1
    bool ss_above_ms = false;  // norm R_sS > norm R_mS > 1
    bool ss_above_sm = false;  // norm R_sS > norm R_sM > 1
    bool healthy_below_baseline = false;  // norm R_mH < 1 and norm R_sH < 1

    bool all_hold() const { return mm_above_sm && mm_above_ms && ss_above_ms && ss_above_sm; }
};

inline RateReport normalized_rate_report(const TicketStats& stats) {
    RateReport out;
    out.stats = stats;
    auto mm = stats.norm_mm();
    auto ms = stats.norm_ms();
    auto sm = stats.norm_sm();
    auto ss = stats.norm_ss();
    auto mh = stats.norm_mh();
    auto sh = stats.norm_sh();
    out.mm_above_sm = mm && sm && *mm > *sm && *sm > 1.0;
    out.mm_above_ms = mm && ms && *mm > *ms && *ms > 1.0;
    out.ss_above_ms = ss && ms && *ss > *ms && *ms > 1.0;
    out.ss_above_sm = ss && sm && *ss > *sm && *sm > 1.0;
    out.healthy_below_baseline = mh && sh && *mh < 1.0 && *sh < 1.0;
    return out;
}

// ---- diagnosed event groups ----------------------------------------------------------
//
// Maintenance diagnoses name a cluster; slices of the same cluster lineage in
// consecutive windows (connected through shared members) form one
// infrastructure event with a member set and a time span. Service diagnoses
// stay per device.

struct EventGroup {
    std::string fnode_id;
    FaultLabel label = FaultLabel::Maintenance;
    double start_ts = 0.0;
    double end_ts = 0.0;
    std::set<std::string> members;
};

inline std::vector<EventGroup> maintenance_event_groups(const BatchResult& batch) {
    struct Slice {
        std::size_t window;
        std::string fnode_id;
        TimeWindow span;
        std::set<std::string> members;
        int group = -1;
    };
    std::vector<Slice> slices;
    for (std::size_t w = 0; w < batch.windows.size(); ++w) {
        for (const auto& [fid, diag] : batch.windows[w]) {
            // Collect the maintenance devices of each (feature, cluster) pair.
            std::map<std::pair<int, std::size_t>, Slice> by_cluster;
            for (const auto& [did, d] : diag.devices) {
                if (d.label != FaultLabel::Maintenance || !d.cluster_id) continue;
                auto key = std::make_pair(static_cast<int>(*d.cluster_feature), *d.cluster_id);
                auto& s = by_cluster[key];
                s.window = w;
                s.fnode_id = fid;
                s.span = diag.window;
                s.members.insert(did);
            }
            for (auto& [k, s] : by_cluster) slices.push_back(std::move(s));
        }
    }

    // Union slices of adjacent windows sharing a member.
    std::vector<int> parent(slices.size());
    for (std::size_t i = 0; i < slices.size(); ++i) parent[i] = static_cast<int>(i);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < slices.size(); ++i) {
        for (std::size_t j = i + 1; j < slices.size(); ++j) {
            if (slices[j].fnode_id != slices[i].fnode_id) continue;
            std::size_t dw = slices[j].window > slices[i].window ? slices[j].window - slices[i].window
                                                                 : slices[i].window - slices[j].window;
            if (dw > 1) continue;
            bool shared = std::any_of(slices[i].members.begin(), slices[i].members.end(),
                                      [&](const std::string& m) { return slices[j].members.count(m); });
            if (shared) parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
        }
    }

    std::map<int, EventGroup> groups;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        int g = find(static_cast<int>(i));
        auto& eg = groups[g];
        if (eg.members.empty()) {
            eg.fnode_id = slices[i].fnode_id;
            eg.label = FaultLabel::Maintenance;
            eg.start_ts = slices[i].span.start_ts;
            eg.end_ts = slices[i].span.end_ts;
        }
        eg.start_ts = std::min(eg.start_ts, slices[i].span.start_ts);
        eg.end_ts = std::max(eg.end_ts, slices[i].span.end_ts);
        eg.members.insert(slices[i].members.begin(), slices[i].members.end());
    }
    std::vector<EventGroup> out;
    for (auto& [g, eg] : groups) out.push_back(std::move(eg));
    std::sort(out.begin(), out.end(), [](const EventGroup& a, const EventGroup& b) {
        if (a.fnode_id != b.fnode_id) return a.fnode_id < b.fnode_id;
        if (a.start_ts != b.start_ts) return a.start_ts < b.start_ts;
        return *a.members.begin() < *b.members.begin();
    });
    return out;
}

// ---- fault statistics -------------------------------------------------------------

struct FaultStatistics {
    std::vector<double> maintenance_durations_hours;  // one per event group
    std::vector<double> service_durations_hours;      // one per device service run
    std::vector<double> reporting_delays_hours;       // maintenance events with tickets
    std::size_t maintenance_events_without_tickets = 0;
    std::vector<double> reporting_fractions;          // ticketing members / event size
};

inline FaultStatistics fault_statistics(const BatchResult& batch, const DeviceTimeline& timeline,
                                        const std::vector<Ticket>& tickets) {
    FaultStatistics out;
    auto groups = maintenance_event_groups(batch);
    for (const auto& g : groups) {
        out.maintenance_durations_hours.push_back(seconds_to_hours(g.end_ts - g.start_ts));
        std::set<std::string> reporters;
        double first_ticket = std::numeric_limits<double>::infinity();
        for (const auto& t : tickets) {
            if (!g.members.count(t.device_id)) continue;
            if (t.open_ts <= g.start_ts || t.open_ts > g.end_ts) continue;
            reporters.insert(t.device_id);
            first_ticket = std::min(first_ticket, t.open_ts);
        }
        if (reporters.empty()) {
            ++out.maintenance_events_without_tickets;
        } else {
            out.reporting_delays_hours.push_back(seconds_to_hours(first_ticket - g.start_ts));
            out.reporting_fractions.push_back(static_cast<double>(reporters.size()) /
                                              static_cast<double>(g.members.size()));
        }
    }
    for (const auto& ev : timeline_events(timeline))
        if (ev.label == FaultLabel::Service)
            out.service_durations_hours.push_back(seconds_to_hours(ev.end_ts - ev.start_ts));
    return out;
}

// ---- reactive confusion matrix --------------------------------------------------------

struct ReactiveConfusion {
    // rows: ticket kind; columns: predicted label
    std::uint64_t maintenance_pred_m = 0, maintenance_pred_s = 0, maintenance_pred_none = 0;
    std::uint64_t service_pred_m = 0, service_pred_s = 0, service_pred_none = 0;

    std::uint64_t total() const {
        return maintenance_pred_m + maintenance_pred_s + maintenance_pred_none + service_pred_m +
               service_pred_s + service_pred_none;
    }
    double maintenance_recall() const {
        std::uint64_t denom = maintenance_pred_m + maintenance_pred_s + maintenance_pred_none;
        return denom == 0 ? 0.0 : static_cast<double>(maintenance_pred_m) / static_cast<double>(denom);
    }
};

inline ReactiveConfusion reactive_confusion(const std::map<std::string, PreparedFNode>& fnodes,
                                            const HyperParams& hyper,
                                            const std::vector<Ticket>& tickets) {
    ReactiveConfusion out;
    for (const auto& t : tickets) {
        FaultLabel pred;
        try {
            pred = run_reactive(fnodes, hyper, t);
        } catch (const UnknownDevice&) {
            continue;  // tickets for devices outside the telemetry set are skipped
        }
        if (t.kind == TicketKind::Maintenance) {
            if (pred == FaultLabel::Maintenance)
                ++out.maintenance_pred_m;
            else if (pred == FaultLabel::Service)
                ++out.maintenance_pred_s;
            else
                ++out.maintenance_pred_none;
        } else {
            if (pred == FaultLabel::Maintenance)
                ++out.service_pred_m;
            else if (pred == FaultLabel::Service)
                ++out.service_pred_s;
            else
                ++out.service_pred_none;
        }
    }
    return out;
}

// ---- helpers for partition-level evaluation ---------------------------------------------

// The diagnosed infrastructure groups of one window as a partition: every
// maintenance device joins its diagnosed cluster, everything else stays a
// singleton. This is the partition the ground-truth event membership is
// compared against.
inline Partition maintenance_partition(const WindowDiagnosis& diag) {
    std::map<std::pair<int, std::size_t>, std::vector<std::string>> groups;
    Partition out;
    for (const auto& [did, d] : diag.devices) {
        if (d.label == FaultLabel::Maintenance && d.cluster_id)
            groups[{static_cast<int>(*d.cluster_feature), *d.cluster_id}].push_back(did);
        else
            out.clusters.push_back({did});
    }
    for (auto& [k, g] : groups) out.clusters.push_back(std::move(g));
    out.canonicalize();
    return out;
}

// Empirical distribution function rows (value ascending, cumulative share).
inline std::vector<std::pair<double, double>> cdf_rows(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out.emplace_back(values[i],
                         static_cast<double>(i + 1) / static_cast<double>(values.size()));
    return out;
}

}  // namespace telapart
