#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace telapart {

inline constexpr double kSecondsPerHour = 3600.0;

inline double hours_to_seconds(double h) { return h * kSecondsPerHour; }
inline double seconds_to_hours(double s) { return s / kSecondsPerHour; }

// Clustering features. Rx power is tracked for detection but is not a
// clustering feature (it is statistically tied to Tx power).
enum class Feature { Snr, TxPower, Missing };

// Metrics available for threshold-based detection.
enum class Metric { Snr, TxPower, RxPower };

enum class TicketKind { Maintenance, Service };

enum class FaultLabel { Healthy, Maintenance, Service };

enum class Linkage { Average, Single, Complete };

inline std::string_view to_string(Feature f) {
    switch (f) {
    case Feature::Snr: return "snr";
    case Feature::TxPower: return "txpower";
    case Feature::Missing: return "missing";
    }
    return "?";
}

inline std::string_view to_string(Metric m) {
    switch (m) {
    case Metric::Snr: return "snr";
    case Metric::TxPower: return "txpower";
    case Metric::RxPower: return "rxpower";
    }
    return "?";
}

inline std::string_view to_string(TicketKind k) {
    return k == TicketKind::Maintenance ? "maintenance" : "service";
}

inline std::string_view to_string(FaultLabel l) {
    switch (l) {
    case FaultLabel::Healthy: return "healthy";
    case FaultLabel::Maintenance: return "maintenance";
    case FaultLabel::Service: return "service";
    }
    return "?";
}

constexpr Feature kAllFeatures[] = {Feature::Snr, Feature::TxPower, Feature::Missing};
constexpr Metric kAllMetrics[] = {Metric::Snr, Metric::TxPower, Metric::RxPower};

// Half-open interval (start, end]; diagnosis windows take the data points
// collected strictly after start and up to (including) end.
struct TimeWindow {
    double start_ts = 0.0;
    double end_ts = 0.0;

    bool contains(double ts) const { return ts > start_ts && ts <= end_ts; }
    double length() const { return end_ts - start_ts; }
};

// ---- error types ----------------------------------------------------------

struct MalformedRow : std::runtime_error {
    std::size_t line;
    explicit MalformedRow(std::size_t line_no, const std::string& what_arg)
        : std::runtime_error("malformed row at line " + std::to_string(line_no) + ": " + what_arg),
          line(line_no) {}
};

struct UnknownChannel : std::runtime_error {
    explicit UnknownChannel(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnknownKind : std::runtime_error {
    explicit UnknownKind(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnknownDevice : std::runtime_error {
    explicit UnknownDevice(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientData : std::runtime_error {
    explicit InsufficientData(const std::string& msg) : std::runtime_error(msg) {}
};

struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoTickets : std::runtime_error {
    explicit NoTickets(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoMaintenanceTickets : std::runtime_error {
    explicit NoMaintenanceTickets(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptySpan : std::runtime_error {
    explicit EmptySpan(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyWindow : std::runtime_error {
    explicit EmptyWindow(const std::string& msg) : std::runtime_error(msg) {}
};

struct DeviceSetMismatch : std::runtime_error {
    explicit DeviceSetMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidConfig : std::runtime_error {
    explicit InvalidConfig(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- numeric text io ------------------------------------------------------
//
// All float formatting goes through to_chars so that write -> parse is
// bit-exact and output bytes never depend on locale or stream state.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    return v;
}

inline std::optional<long> parse_long(std::string_view s) {
    long v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    return v;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

}  // namespace telapart
