#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "telapart/diagnose.hpp"

namespace telapart {

// ---- ticket-rate bookkeeping ----------------------------------------------------
//
// For a labelled timeline and a ticket log, count tickets of each kind by the
// label active on the ticket's device when it was opened (anything outside a
// Maintenance or Service interval counts as Healthy), measure the device-hours
// spent under each label, and derive per-label ticketing rates plus their
// normalisation against the whole-span baseline rates.

struct TicketStats {
    // counts: k_<kind><label>, kind in {m,s}, label in {M,S,H}
    std::uint64_t k_mm = 0, k_ms = 0, k_mh = 0;
    std::uint64_t k_sm = 0, k_ss = 0, k_sh = 0;
    double t_maintenance_hours = 0.0;
    double t_service_hours = 0.0;
    double t_healthy_hours = 0.0;
    double total_device_hours = 0.0;

    std::uint64_t total_maintenance() const { return k_mm + k_ms + k_mh; }
    std::uint64_t total_service() const { return k_sm + k_ss + k_sh; }

    static std::optional<double> rate(std::uint64_t k, double hours) {
        if (hours <= 0.0) return std::nullopt;
        return static_cast<double>(k) / hours;
    }

    std::optional<double> r_mm() const { return rate(k_mm, t_maintenance_hours); }
    std::optional<double> r_ms() const { return rate(k_ms, t_service_hours); }
    std::optional<double> r_mh() const { return rate(k_mh, t_healthy_hours); }
    std::optional<double> r_sm() const { return rate(k_sm, t_maintenance_hours); }
    std::optional<double> r_ss() const { return rate(k_ss, t_service_hours); }
    std::optional<double> r_sh() const { return rate(k_sh, t_healthy_hours); }
    std::optional<double> r_m() const { return rate(total_maintenance(), total_device_hours); }
    std::optional<double> r_s() const { return rate(total_service(), total_device_hours); }

    static std::optional<double> normalized(std::optional<double> r, std::optional<double> base) {
        if (!r || !base || *base <= 0.0) return std::nullopt;
        return *r / *base;
    }

    std::optional<double> norm_mm() const { return normalized(r_mm(), r_m()); }
    std::optional<double> norm_ms() const { return normalized(r_ms(), r_m()); }
    std::optional<double> norm_mh() const { return normalized(r_mh(), r_m()); }
    std::optional<double> norm_sm() const { return normalized(r_sm(), r_s()); }
    std::optional<double> norm_ss() const { return normalized(r_ss(), r_s()); }
    std::optional<double> norm_sh() const { return normalized(r_sh(), r_s()); }
};

// The tuning objective R_mM / R_mS. When a candidate pushes every maintenance
// ticket out of Service time (R_mS = 0) while still catching some in
// Maintenance time, the ratio is an infinity that outranks every finite
// value; with no usable rates at all it is undefined and ranks below
// everything.
struct TrrValue {
    enum class Kind { Undefined, Finite, PosInfinite } kind = Kind::Undefined;
    double value = 0.0;

    static TrrValue undefined() { return {}; }
    static TrrValue infinite() { return TrrValue{Kind::PosInfinite, 0.0}; }
    static TrrValue finite(double v) { return TrrValue{Kind::Finite, v}; }

    // True when *this ranks strictly above `other`.
    bool better_than(const TrrValue& other) const {
        if (kind == other.kind) return kind == Kind::Finite && value > other.value;
        if (kind == Kind::PosInfinite) return true;
        if (kind == Kind::Undefined) return false;
        return other.kind == Kind::Undefined;
    }

    bool operator==(const TrrValue&) const = default;
};

inline TrrValue trr_m(const TicketStats& s) {
    auto mm = s.r_mm();
    auto ms = s.r_ms();
    if (mm && ms) {
        if (*ms > 0.0) return TrrValue::finite(*mm / *ms);
        return *mm > 0.0 ? TrrValue::infinite() : TrrValue::undefined();
    }
    if (mm && !ms) return *mm > 0.0 ? TrrValue::infinite() : TrrValue::undefined();
    return TrrValue::undefined();
}

// `span` must cover the labelled intervals; its device count fixes the
// baseline denominator (devices with no labelled interval still spend the
// whole span Healthy).
inline TicketStats ticket_stats(const DeviceTimeline& timeline, const std::vector<Ticket>& tickets,
                                const TimeWindow& span, std::size_t device_total) {
    if (span.length() <= 0.0 || device_total == 0)
        throw EmptySpan("ticket_stats needs a positive span and at least one device");
    TicketStats out;
    out.total_device_hours = seconds_to_hours(span.length()) * static_cast<double>(device_total);
    for (const auto& [did, intervals] : timeline) {
        for (const auto& iv : intervals) {
            double h = seconds_to_hours(iv.end_ts - iv.start_ts);
            if (iv.label == FaultLabel::Maintenance)
                out.t_maintenance_hours += h;
            else if (iv.label == FaultLabel::Service)
                out.t_service_hours += h;
        }
    }
    out.t_healthy_hours =
        std::max(0.0, out.total_device_hours - out.t_maintenance_hours - out.t_service_hours);

    for (const auto& t : tickets) {
        if (t.open_ts <= span.start_ts || t.open_ts > span.end_ts) continue;
        FaultLabel label = FaultLabel::Healthy;
        auto it = timeline.find(t.device_id);
        if (it != timeline.end()) {
            for (const auto& iv : it->second) {
                if (t.open_ts > iv.start_ts && t.open_ts <= iv.end_ts) {
                    label = iv.label;
                    break;
                }
            }
        }
        if (t.kind == TicketKind::Maintenance) {
            if (label == FaultLabel::Maintenance)
                ++out.k_mm;
            else if (label == FaultLabel::Service)
                ++out.k_ms;
            else
                ++out.k_mh;
        } else {
            if (label == FaultLabel::Maintenance)
                ++out.k_sm;
            else if (label == FaultLabel::Service)
                ++out.k_ss;
            else
                ++out.k_sh;
        }
    }
    return out;
}

// ---- similarity-threshold search ----------------------------------------------------
//
// For each candidate s_f on a fixed mesh, run the per-feature pipeline over
// the training schedule, label the timeline, and score the candidate by the
// normalised maintenance ticketing ratio trr_m. The winner is the candidate
// with the best score; ties go to the larger threshold (the more conservative
// clustering). Because a window's merge sequence does not depend on s_f, each
// (fNode, window) pair is clustered once and every candidate just cuts the
// recorded dendrogram.

struct SfSearchResult {
    double s_f = 0.0;
    TrrValue score;
    std::vector<std::pair<double, TrrValue>> mesh;  // candidate -> score, ascending
};

namespace detail {

struct WindowMaterial {
    const PreparedFNode* fnode;
    TimeWindow window;
    std::size_t window_index;
    DendrogramTrace trace;
    std::map<std::string, bool> evidence;  // feature-relevant anomaly per device
    bool empty = false;
};

inline std::vector<double> candidate_mesh(Feature feature, double step) {
    const double lo = feature == Feature::Missing ? 0.0 : -1.0;
    const double hi = 1.0;
    std::vector<double> mesh;
    const int count = static_cast<int>(std::round((hi - lo) / step));
    for (int i = 0; i <= count; ++i) mesh.push_back(std::min(hi, lo + i * step));
    return mesh;
}

}  // namespace detail

inline SfSearchResult grid_search_sf(const std::map<std::string, PreparedFNode>& fnodes,
                                     const std::vector<Ticket>& tickets, Feature feature,
                                     const HyperParams& hyper, const std::vector<double>& schedule,
                                     const TimeWindow& span, double mesh_step = 0.01) {
    bool any_maintenance = false;
    for (const auto& t : tickets)
        if (t.kind == TicketKind::Maintenance && t.open_ts > span.start_ts &&
            t.open_ts <= span.end_ts) {
            any_maintenance = true;
            break;
        }
    if (!any_maintenance)
        throw NoMaintenanceTickets("threshold search needs maintenance tickets in the training span");

    std::size_t devices = 0;
    for (const auto& [fid, fnode] : fnodes) devices += fnode.data.devices.size();

    // Stage 1: cluster every (fNode, window) once.
    std::vector<detail::WindowMaterial> material;
    for (const auto& [fid, fnode] : fnodes) {
        for (std::size_t w = 0; w < schedule.size(); ++w) {
            detail::WindowMaterial wm;
            wm.fnode = &fnode;
            wm.window_index = w;
            wm.window = TimeWindow{schedule[w] - hours_to_seconds(hyper.window_hours()), schedule[w]};
            SimilarityMatrix sim = similarity_matrix(fnode, feature, wm.window, hyper);
            wm.trace = agglomerate_trace(sim, Linkage::Average);
            for (const auto& [did, dev] : fnode.data.devices) {
                DeviceAnomaly a =
                    device_anomalous(dev, wm.window, hyper.detection, hyper.anomaly_fraction);
                wm.evidence[did] = a.for_feature(feature);
            }
            material.push_back(std::move(wm));
        }
    }

    // Stage 2: score every candidate from the cached dendrograms.
    SfSearchResult out;
    bool have = false;
    for (double cand : detail::candidate_mesh(feature, mesh_step)) {
        DeviceTimeline timeline;
        for (const auto& wm : material) {
            Partition part = wm.trace.cut(cand);
            std::vector<bool> flagged = flag_clusters(part, wm.evidence);
            for (std::size_t c = 0; c < part.clusters.size(); ++c) {
                FaultLabel label = FaultLabel::Healthy;
                if (flagged[c])
                    label = part.clusters[c].size() >= hyper.cluster_size_threshold
                                ? FaultLabel::Maintenance
                                : FaultLabel::Service;
                if (label == FaultLabel::Healthy) continue;
                for (const auto& id : part.clusters[c]) {
                    auto& tl = timeline[id];
                    double start = wm.window.start_ts;
                    if (!tl.empty() && tl.back().window_index <= wm.window_index)
                        start = std::max(start, tl.back().end_ts);
                    if (start >= wm.window.end_ts) continue;
                    tl.push_back(LabeledInterval{start, wm.window.end_ts, label, wm.window_index});
                }
            }
        }
        TicketStats stats = ticket_stats(timeline, tickets, span, devices);
        TrrValue score = trr_m(stats);
        out.mesh.emplace_back(cand, score);
        // >= keeps the larger candidate on ties (mesh is ascending).
        if (!have || score.better_than(out.score) || score == out.score) {
            out.s_f = cand;
            out.score = score;
            have = true;
        }
    }
    return out;
}

}  // namespace telapart
