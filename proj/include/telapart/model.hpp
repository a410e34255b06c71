#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "telapart/common.hpp"

namespace telapart {

// ---- telemetry ------------------------------------------------------------

struct MetricValues {
    double snr_db = 0.0;
    double tx_power_dbmv = 0.0;
    double rx_power_dbmv = 0.0;

    double get(Metric m) const {
        switch (m) {
        case Metric::Snr: return snr_db;
        case Metric::TxPower: return tx_power_dbmv;
        case Metric::RxPower: return rx_power_dbmv;
        }
        return 0.0;
    }

    bool operator==(const MetricValues&) const = default;
};

// One collected sample, or a placeholder standing in for a sample the plant
// should have produced but the poller never delivered. Placeholders carry a
// timestamp only; they never carry metric values.
struct TelemetryPoint {
    double ts = 0.0;  // seconds
    std::optional<MetricValues> metrics;

    bool placeholder() const { return !metrics.has_value(); }

    static TelemetryPoint sample(double ts, double snr, double tx, double rx) {
        return TelemetryPoint{ts, MetricValues{snr, tx, rx}};
    }
    static TelemetryPoint gap(double ts) { return TelemetryPoint{ts, std::nullopt}; }

    bool operator==(const TelemetryPoint&) const = default;
};

// Per-device series: one point vector per upstream channel, each sorted by
// timestamp (strictly increasing once deduplicated).
struct TelemetrySeries {
    std::string device_id;
    std::string fnode_id;
    std::vector<std::vector<TelemetryPoint>> channels;

    bool operator==(const TelemetrySeries&) const = default;
};

struct FNodeDataset {
    std::string fnode_id;
    double collection_interval_hours = 4.0;  // L
    int channel_count = 3;
    std::map<std::string, TelemetrySeries> devices;  // keyed by device_id

    bool operator==(const FNodeDataset&) const = default;
};

// ---- tickets ---------------------------------------------------------------

struct Ticket {
    std::string ticket_id;
    std::string device_id;
    std::string fnode_id;
    double open_ts = 0.0;
    std::optional<double> close_ts;
    TicketKind kind = TicketKind::Service;
    bool dispatched = false;

    bool operator==(const Ticket&) const = default;
};

// ---- hyper-parameters ------------------------------------------------------

enum class Direction { Below, Above };

inline std::string_view to_string(Direction d) { return d == Direction::Below ? "below" : "above"; }

struct MetricThreshold {
    double value = 0.0;
    Direction direction = Direction::Below;

    bool breach(double v) const { return direction == Direction::Below ? v < value : v > value; }
    bool operator==(const MetricThreshold&) const = default;
};

struct DetectionThresholds {
    std::map<Metric, MetricThreshold> per_metric;
    bool operator==(const DetectionThresholds&) const = default;
};

struct HyperParams {
    double collection_interval_hours = 4.0;         // L
    int channel_count = 3;                          // N_ch
    double lookback_days = 1.0;                     // d
    double missing_threshold_hours = 6.0;           // L_missing, in (L, 2L)
    std::map<Feature, double> similarity_threshold = {
        {Feature::Snr, 0.8}, {Feature::TxPower, 0.8}, {Feature::Missing, 0.8}};  // s_f
    std::size_t cluster_size_threshold = 5;         // C_thr; >= C_thr means shared infrastructure
    std::optional<std::size_t> min_overlap;         // o; empty = ceil(expected/3)+1
    DetectionThresholds detection;
    double anomaly_fraction = 2.0 / 3.0;            // phi
    double epoch_eps_hours = 0.5;                   // DBSCAN radius for epoch detection
    std::size_t epoch_min_samples = 2;

    double window_hours() const { return lookback_days * 24.0; }

    // Expected sample count inside one look-back window across all channels.
    double expected_window_points() const {
        return window_hours() / collection_interval_hours * channel_count;
    }

    std::size_t effective_min_overlap() const {
        if (min_overlap) return *min_overlap;
        return static_cast<std::size_t>(std::ceil(expected_window_points() / 3.0)) + 1;
    }

    double s_f(Feature f) const {
        auto it = similarity_threshold.find(f);
        if (it == similarity_threshold.end())
            throw InvalidConfig("no similarity threshold for feature " + std::string(to_string(f)));
        return it->second;
    }
};

// ---- csv helpers -----------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double require_finite(std::string_view field, std::string_view name, std::size_t line_no) {
    auto v = parse_double(field);
    if (!v || !std::isfinite(*v))
        throw MalformedRow(line_no, "field '" + std::string(name) + "' is not a finite number: '" +
                                        std::string(field) + "'");
    return *v;
}

}  // namespace detail

// ---- pnm telemetry csv -----------------------------------------------------
//
// Schema: ts,device_id,fnode_id,channel,snr_db,tx_power_dbmv,rx_power_dbmv
// Rows may arrive in any order; ingestion sorts each channel by timestamp.
// Duplicate timestamps are kept (deduplication is a preprocessing step).

inline const char* kPnmHeader = "ts,device_id,fnode_id,channel,snr_db,tx_power_dbmv,rx_power_dbmv";

inline std::map<std::string, FNodeDataset> ingest_pnm_rows(
    std::istream& in, double collection_interval_hours, int channel_count) {
    std::map<std::string, FNodeDataset> out;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!saw_header) {
            saw_header = true;
            if (fields.size() == 7 && fields[0] == "ts") continue;  // header row
            throw MalformedRow(line_no, "expected header '" + std::string(kPnmHeader) + "'");
        }
        if (fields.size() != 7) throw MalformedRow(line_no, "expected 7 fields, got " + std::to_string(fields.size()));
        double ts = detail::require_finite(fields[0], "ts", line_no);
        if (ts < 0) throw MalformedRow(line_no, "ts must be non-negative");
        const std::string& device_id = fields[1];
        const std::string& fnode_id = fields[2];
        if (device_id.empty() || fnode_id.empty())
            throw MalformedRow(line_no, "device_id and fnode_id must be non-empty");
        auto channel = parse_long(fields[3]);
        if (!channel) throw MalformedRow(line_no, "channel must be an integer");
        if (*channel < 0 || *channel >= channel_count)
            throw UnknownChannel("line " + std::to_string(line_no) + ": channel " +
                                 std::to_string(*channel) + " outside [0, " +
                                 std::to_string(channel_count) + ")");
        double snr = detail::require_finite(fields[4], "snr_db", line_no);
        double tx = detail::require_finite(fields[5], "tx_power_dbmv", line_no);
        double rx = detail::require_finite(fields[6], "rx_power_dbmv", line_no);

        auto& fnode = out[fnode_id];
        if (fnode.devices.empty()) {
            fnode.fnode_id = fnode_id;
            fnode.collection_interval_hours = collection_interval_hours;
            fnode.channel_count = channel_count;
        }
        auto& dev = fnode.devices[device_id];
        if (dev.channels.empty()) {
            dev.device_id = device_id;
            dev.fnode_id = fnode_id;
            dev.channels.resize(static_cast<std::size_t>(channel_count));
        }
        dev.channels[static_cast<std::size_t>(*channel)].push_back(
            TelemetryPoint::sample(ts, snr, tx, rx));
    }
    // Canonical in-memory order: sort every channel by (ts, metrics) so the
    // result does not depend on row order in the file.
    for (auto& [fid, fnode] : out) {
        for (auto& [did, dev] : fnode.devices) {
            for (auto& ch : dev.channels) {
                std::sort(ch.begin(), ch.end(), [](const TelemetryPoint& a, const TelemetryPoint& b) {
                    if (a.ts != b.ts) return a.ts < b.ts;
                    const auto& ma = *a.metrics;
                    const auto& mb = *b.metrics;
                    if (ma.snr_db != mb.snr_db) return ma.snr_db < mb.snr_db;
                    if (ma.tx_power_dbmv != mb.tx_power_dbmv) return ma.tx_power_dbmv < mb.tx_power_dbmv;
                    return ma.rx_power_dbmv < mb.rx_power_dbmv;
                });
            }
        }
    }
    return out;
}

inline std::map<std::string, FNodeDataset> ingest_pnm_csv(
    const std::string& path, double collection_interval_hours, int channel_count) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open telemetry csv: " + path);
    return ingest_pnm_rows(in, collection_interval_hours, channel_count);
}

inline void write_pnm_rows(std::ostream& out, const std::map<std::string, FNodeDataset>& datasets) {
    out << kPnmHeader << '\n';
    for (const auto& [fid, fnode] : datasets) {
        for (const auto& [did, dev] : fnode.devices) {
            for (std::size_t ch = 0; ch < dev.channels.size(); ++ch) {
                for (const auto& p : dev.channels[ch]) {
                    if (p.placeholder()) continue;  // placeholders are derived, never serialized
                    out << format_double(p.ts) << ',' << did << ',' << fid << ',' << ch << ','
                        << format_double(p.metrics->snr_db) << ','
                        << format_double(p.metrics->tx_power_dbmv) << ','
                        << format_double(p.metrics->rx_power_dbmv) << '\n';
                }
            }
        }
    }
}

inline void write_pnm_csv(const std::string& path, const std::map<std::string, FNodeDataset>& datasets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidConfig("cannot open for writing: " + path);
    write_pnm_rows(out, datasets);
}

// ---- ticket csv -------------------------------------------------------------
//
// Schema: ticket_id,device_id,fnode_id,open_ts,close_ts,kind,dispatched
// close_ts may be empty (still open). kind is case-insensitive.

inline const char* kTicketHeader = "ticket_id,device_id,fnode_id,open_ts,close_ts,kind,dispatched";

inline std::vector<Ticket> ingest_ticket_rows(std::istream& in) {
    std::vector<Ticket> out;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!saw_header) {
            saw_header = true;
            if (fields.size() == 7 && fields[0] == "ticket_id") continue;
            throw MalformedRow(line_no, "expected header '" + std::string(kTicketHeader) + "'");
        }
        if (fields.size() != 7) throw MalformedRow(line_no, "expected 7 fields, got " + std::to_string(fields.size()));
        Ticket t;
        t.ticket_id = fields[0];
        t.device_id = fields[1];
        t.fnode_id = fields[2];
        if (t.ticket_id.empty() || t.device_id.empty() || t.fnode_id.empty())
            throw MalformedRow(line_no, "ids must be non-empty");
        t.open_ts = detail::require_finite(fields[3], "open_ts", line_no);
        if (!fields[4].empty()) t.close_ts = detail::require_finite(fields[4], "close_ts", line_no);
        std::string kind = ascii_lower(fields[5]);
        if (kind == "maintenance")
            t.kind = TicketKind::Maintenance;
        else if (kind == "service")
            t.kind = TicketKind::Service;
        else
            throw UnknownKind("line " + std::to_string(line_no) + ": unknown ticket kind '" + fields[5] + "'");
        if (fields[6] == "0")
            t.dispatched = false;
        else if (fields[6] == "1")
            t.dispatched = true;
        else
            throw MalformedRow(line_no, "dispatched must be 0 or 1");
        out.push_back(std::move(t));
    }
    // Canonical order: by open time, then ticket id.
    std::sort(out.begin(), out.end(), [](const Ticket& a, const Ticket& b) {
        if (a.open_ts != b.open_ts) return a.open_ts < b.open_ts;
        return a.ticket_id < b.ticket_id;
    });
    return out;
}

inline std::vector<Ticket> ingest_ticket_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open ticket csv: " + path);
    return ingest_ticket_rows(in);
}

inline void write_ticket_rows(std::ostream& out, const std::vector<Ticket>& tickets) {
    out << kTicketHeader << '\n';
    for (const auto& t : tickets) {
        out << t.ticket_id << ',' << t.device_id << ',' << t.fnode_id << ','
            << format_double(t.open_ts) << ','
            << (t.close_ts ? format_double(*t.close_ts) : std::string()) << ','
            << to_string(t.kind) << ',' << (t.dispatched ? '1' : '0') << '\n';
    }
}

inline void write_ticket_csv(const std::string& path, const std::vector<Ticket>& tickets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidConfig("cannot open for writing: " + path);
    write_ticket_rows(out, tickets);
}

// ---- dataset span -----------------------------------------------------------

// Smallest interval covering every real sample of every device. Throws
// EmptySpan when the datasets hold no samples at all.
inline TimeWindow dataset_span(const std::map<std::string, FNodeDataset>& datasets) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [fid, fnode] : datasets)
        for (const auto& [did, dev] : fnode.devices)
            for (const auto& ch : dev.channels)
                for (const auto& p : ch)
                    if (!p.placeholder()) {
                        lo = std::min(lo, p.ts);
                        hi = std::max(hi, p.ts);
                    }
    if (!(lo <= hi)) throw EmptySpan("datasets contain no telemetry samples");
    return TimeWindow{lo, hi};
}

inline std::size_t device_count(const std::map<std::string, FNodeDataset>& datasets) {
    std::size_t n = 0;
    for (const auto& [fid, fnode] : datasets) n += fnode.devices.size();
    return n;
}

}  // namespace telapart
