#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "telapart/detect.hpp"

namespace telapart {

// ---- one fNode, one window -----------------------------------------------------

struct FeatureDiagnosis {
    Partition partition;
    std::vector<bool> flagged;                     // per cluster
    std::map<std::string, std::size_t> cluster_of;  // device -> cluster index
};

struct DeviceDiagnosis {
    std::string device_id;
    FaultLabel label = FaultLabel::Healthy;                 // combined over features
    std::map<Feature, FaultLabel> per_feature;
    std::vector<Feature> contributing;                      // features voting for `label`
    std::optional<std::size_t> cluster_id;                  // cluster in the first contributing feature
    std::optional<Feature> cluster_feature;
    DeviceAnomaly anomaly;
};

struct WindowDiagnosis {
    std::string fnode_id;
    TimeWindow window;
    std::map<Feature, FeatureDiagnosis> features;
    std::map<std::string, DeviceDiagnosis> devices;
};

// Shared-infrastructure faults hit whole clusters: a flagged cluster at or
// above the size threshold marks its members Maintenance for that feature. A
// flagged cluster below the threshold points at individual premises, so its
// members become Service. Devices in no flagged cluster stay Healthy for the
// feature. The combined label takes Maintenance over Service over Healthy
// across features; an anomalous device is never left Healthy (its own cluster
// is flagged in every feature it appears anomalous on).
inline WindowDiagnosis diagnose_window(const PreparedFNode& fnode, const HyperParams& hyper,
                                       double t) {
    WindowDiagnosis out;
    out.fnode_id = fnode.data.fnode_id;
    out.window = TimeWindow{t - hours_to_seconds(hyper.window_hours()), t};

    bool any_data = false;
    for (const auto& [did, dev] : fnode.data.devices) {
        for (const auto& ch : dev.channels) {
            for (const auto& p : ch)
                if (!p.placeholder() && out.window.contains(p.ts)) {
                    any_data = true;
                    break;
                }
            if (any_data) break;
        }
        if (any_data) break;
    }
    if (!any_data)
        throw EmptyWindow("no telemetry in window ending at " + format_double(t) + " for fnode " +
                          fnode.data.fnode_id);

    std::map<std::string, DeviceAnomaly> anomalies;
    for (const auto& [did, dev] : fnode.data.devices) {
        anomalies.emplace(did,
                          device_anomalous(dev, out.window, hyper.detection, hyper.anomaly_fraction));
        auto& d = out.devices[did];
        d.device_id = did;
        d.anomaly = anomalies[did];
    }

    for (Feature f : kAllFeatures) {
        FeatureDiagnosis fd;
        SimilarityMatrix sim = similarity_matrix(fnode, f, out.window, hyper);
        fd.partition = agglomerate(sim, hyper.s_f(f), Linkage::Average);
        std::map<std::string, bool> evidence;
        for (const auto& [did, a] : anomalies) evidence[did] = a.for_feature(f);
        fd.flagged = flag_clusters(fd.partition, evidence);
        for (std::size_t c = 0; c < fd.partition.clusters.size(); ++c)
            for (const auto& id : fd.partition.clusters[c]) fd.cluster_of[id] = c;

        for (auto& [did, d] : out.devices) {
            std::size_t c = fd.cluster_of.at(did);
            FaultLabel label = FaultLabel::Healthy;
            if (fd.flagged[c])
                label = fd.partition.clusters[c].size() >= hyper.cluster_size_threshold
                            ? FaultLabel::Maintenance
                            : FaultLabel::Service;
            d.per_feature[f] = label;
        }
        out.features.emplace(f, std::move(fd));
    }

    for (auto& [did, d] : out.devices) {
        FaultLabel combined = FaultLabel::Healthy;
        for (Feature f : kAllFeatures) {
            FaultLabel l = d.per_feature[f];
            if (l == FaultLabel::Maintenance)
                combined = FaultLabel::Maintenance;
            else if (l == FaultLabel::Service && combined == FaultLabel::Healthy)
                combined = FaultLabel::Service;
        }
        // An anomalous device always sits in a flagged cluster of the feature
        // its anomaly maps to, so `combined` already covers it; the check stays
        // for clarity of intent.
        if (combined == FaultLabel::Healthy && d.anomaly.any()) combined = FaultLabel::Service;
        d.label = combined;
        for (Feature f : kAllFeatures)
            if (d.per_feature[f] == combined && combined != FaultLabel::Healthy)
                d.contributing.push_back(f);
        if (!d.contributing.empty()) {
            d.cluster_feature = d.contributing.front();
            d.cluster_id = out.features.at(*d.cluster_feature).cluster_of.at(did);
        }
    }
    return out;
}

// ---- batch over a schedule --------------------------------------------------------

struct BatchResult {
    std::vector<double> schedule;
    // window index -> fnode id -> diagnosis (fNodes with an empty window are absent)
    std::vector<std::map<std::string, WindowDiagnosis>> windows;
};

inline BatchResult run_batch(const std::map<std::string, PreparedFNode>& fnodes,
                             const HyperParams& hyper, const std::vector<double>& schedule) {
    for (std::size_t i = 1; i < schedule.size(); ++i)
        if (schedule[i] <= schedule[i - 1])
            throw InvalidConfig("batch schedule must be strictly increasing");
    BatchResult out;
    out.schedule = schedule;
    out.windows.resize(schedule.size());
    for (std::size_t w = 0; w < schedule.size(); ++w) {
        for (const auto& [fid, fnode] : fnodes) {
            try {
                out.windows[w].emplace(fid, diagnose_window(fnode, hyper, schedule[w]));
            } catch (const EmptyWindow&) {
                // Nothing was collected fNode-wide: every device counts Healthy
                // for this window, which an absent entry already encodes.
            }
        }
    }
    return out;
}

// ---- label timeline ----------------------------------------------------------------
//
// Batch windows label stretches of each device's timeline. Consecutive windows
// never overlap when invoked on a tiling schedule; with overlapping windows the
// later window claims the overlap, so the labelled intervals always partition
// the covered span.

struct LabeledInterval {
    double start_ts = 0.0;
    double end_ts = 0.0;
    FaultLabel label = FaultLabel::Healthy;
    std::size_t window_index = 0;
};

using DeviceTimeline = std::map<std::string, std::vector<LabeledInterval>>;

// Timeline of combined labels, or of one feature's labels when `feature` set.
inline DeviceTimeline batch_timeline(const BatchResult& batch,
                                     std::optional<Feature> feature = std::nullopt) {
    DeviceTimeline out;
    for (std::size_t w = 0; w < batch.schedule.size(); ++w) {
        for (const auto& [fid, diag] : batch.windows[w]) {
            for (const auto& [did, d] : diag.devices) {
                double start = diag.window.start_ts;
                auto& tl = out[did];
                if (!tl.empty()) start = std::max(start, tl.back().end_ts);
                if (start >= diag.window.end_ts) continue;
                FaultLabel label = feature ? d.per_feature.at(*feature) : d.label;
                tl.push_back(LabeledInterval{start, diag.window.end_ts, label, w});
            }
        }
    }
    return out;
}

// Maximal runs of adjacent same-label non-Healthy intervals for one device.
struct DeviceEvent {
    std::string device_id;
    FaultLabel label = FaultLabel::Service;
    double start_ts = 0.0;
    double end_ts = 0.0;
    std::size_t first_window = 0;
    std::size_t last_window = 0;
};

inline std::vector<DeviceEvent> timeline_events(const DeviceTimeline& timeline) {
    std::vector<DeviceEvent> out;
    for (const auto& [did, intervals] : timeline) {
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            const auto& iv = intervals[i];
            if (iv.label == FaultLabel::Healthy) continue;
            // Adjacent schedule windows count as consecutive; the one-second
            // slack absorbs float drift in schedule arithmetic (real windows
            // are hours long).
            bool extends = !out.empty() && out.back().device_id == did &&
                           out.back().label == iv.label &&
                           out.back().last_window + 1 == iv.window_index &&
                           iv.start_ts <= out.back().end_ts + 1.0;
            if (extends) {
                out.back().end_ts = iv.end_ts;
                out.back().last_window = iv.window_index;
            } else {
                out.push_back(DeviceEvent{did, iv.label, iv.start_ts, iv.end_ts, iv.window_index,
                                          iv.window_index});
            }
        }
    }
    return out;
}

// ---- reactive mode -------------------------------------------------------------------

// Diagnose the ticket's fNode at the moment the customer called, then answer
// with the calling device's label. Healthy maps to "no issue found".
inline FaultLabel run_reactive(const std::map<std::string, PreparedFNode>& fnodes,
                               const HyperParams& hyper, const Ticket& ticket) {
    auto fit = fnodes.find(ticket.fnode_id);
    if (fit == fnodes.end())
        throw UnknownDevice("ticket " + ticket.ticket_id + " names unknown fnode '" +
                            ticket.fnode_id + "'");
    if (!fit->second.data.devices.count(ticket.device_id))
        throw UnknownDevice("ticket " + ticket.ticket_id + " names unknown device '" +
                            ticket.device_id + "'");
    WindowDiagnosis diag;
    try {
        diag = diagnose_window(fit->second, hyper, ticket.open_ts);
    } catch (const EmptyWindow&) {
        return FaultLabel::Healthy;
    }
    return diag.devices.at(ticket.device_id).label;
}

}  // namespace telapart
