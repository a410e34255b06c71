#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "telapart/model.hpp"

namespace telapart {

// ---- deterministic sampling ------------------------------------------------------
//
// The generator carries its own samplers so that a (seed, fnode) pair yields
// identical bytes on every platform and under any worker count. Each fNode,
// device and purpose gets an independent splitmix64 stream derived by key
// mixing, so generation order never matters.

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

    double normal(double mu, double sigma) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return mu + sigma * std::sqrt(-2.0 * std::log(u1)) *
                        std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda > 30.0) return poisson(lambda / 2.0) + poisson(lambda - lambda / 2.0);
        double p = std::exp(-lambda);
        double cum = p;
        double u = uniform();
        std::uint64_t k = 0;
        while (u > cum && k < 1000) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cum += p;
        }
        return k;
    }

    static std::uint64_t derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                                std::uint64_t d = 0) {
        Rng r(a);
        std::uint64_t s = r.next() ^ b;
        Rng r2(s);
        s = r2.next() ^ c;
        Rng r3(s);
        return r3.next() ^ d;
    }

  private:
    std::uint64_t state_;
};

// ---- configuration -----------------------------------------------------------------

enum class FaultShape { Square, Step, Ramp };

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t n_fnodes = 50;
    std::size_t devices_per_fnode = 100;
    double duration_days = 7.0;
    double collection_interval_hours = 4.0;  // L
    int channel_count = 3;
    double jitter_hours = 0.5;  // delta, must stay below L/2
    double p_loss = 0.05;       // i.i.d. per (device, epoch, channel)
    double p_dup = 0.01;        // duplicate delivery per kept sample

    // baselines and noise (dB / dBmV)
    double snr_base_lo = 36.0, snr_base_hi = 36.5;
    double tx_base_lo = 41.0, tx_base_hi = 41.5;
    double rx_base_lo = 0.0, rx_base_hi = 0.25;
    double noise_sigma = 0.5;

    // faults
    std::size_t maintenance_events_per_fnode = 1;
    std::size_t maintenance_size_min = 5;
    std::size_t maintenance_size_max = 20;
    double maintenance_outage_fraction = 0.0;  // share of maintenance events dropping all samples
    std::size_t service_faults_per_fnode = 3;
    std::size_t service_fault_size = 1;  // single premises; 2 models shared drop cables
    double fault_amplitude = 1.5;        // mean added to tx / subtracted from snr during fault
    FaultShape fault_shape = FaultShape::Square;
    double square_period_hours = 16.0;
    double square_swing = 0.4;  // square wave spans amplitude*(1 +/- swing)
    double fault_duration_min_hours = 24.0;
    double fault_duration_max_hours = 72.0;

    // benign whole-device outages (recorded as missing, not as fault events)
    double p_device_gap = 0.0;
    double gap_min_hours = 12.0;
    double gap_max_hours = 36.0;

    // tickets
    double baseline_maintenance_per_day = 0.01;  // per device
    double baseline_service_per_day = 0.01;      // per device
    double maintenance_ticket_multiplier = 10.0;
    double service_ticket_multiplier = 10.0;
    double mislabel_rate = 0.03;  // service->maintenance flip; the reverse flips 3x as often

    void validate() const {
        if (n_fnodes == 0 || devices_per_fnode == 0) throw InvalidConfig("synth: empty topology");
        if (duration_days <= 0) throw InvalidConfig("synth: duration must be positive");
        if (collection_interval_hours <= 0) throw InvalidConfig("synth: interval must be positive");
        if (channel_count <= 0) throw InvalidConfig("synth: need at least one channel");
        if (jitter_hours < 0 || jitter_hours >= collection_interval_hours / 2.0)
            throw InvalidConfig("synth: jitter must sit in [0, L/2)");
        if (p_loss < 0 || p_loss >= 1 || p_dup < 0 || p_dup >= 1)
            throw InvalidConfig("synth: probabilities must sit in [0, 1)");
        if (maintenance_events_per_fnode > 0 && maintenance_size_min < 2)
            throw InvalidConfig("synth: maintenance events span at least two devices");
        if (maintenance_size_max < maintenance_size_min)
            throw InvalidConfig("synth: maintenance size range inverted");
        if (service_fault_size < 1 || service_fault_size > 2)
            throw InvalidConfig("synth: service faults cover one or two devices");
        if (fault_amplitude < 0) throw InvalidConfig("synth: amplitude must be non-negative");
        if (mislabel_rate < 0 || 3.0 * mislabel_rate > 1.0)
            throw InvalidConfig("synth: mislabel rate too high");
        std::size_t fault_devices = maintenance_events_per_fnode * maintenance_size_max +
                                    service_faults_per_fnode * service_fault_size;
        if (fault_devices > devices_per_fnode)
            throw InvalidConfig("synth: fault plan needs more devices than the fnode has");
    }
};

// ---- ground truth --------------------------------------------------------------------

struct FaultEvent {
    std::string event_id;
    std::string fnode_id;
    TicketKind kind = TicketKind::Maintenance;
    double start_ts = 0.0;
    double end_ts = 0.0;
    std::vector<std::string> devices;  // sorted
    bool outage = false;
};

struct TicketTruth {
    TicketKind true_kind = TicketKind::Service;
    std::string event_id;  // empty for baseline tickets
};

struct GroundTruth {
    std::vector<FaultEvent> events;
    // device -> channel -> epoch indices the generator dropped
    std::map<std::string, std::vector<std::set<std::size_t>>> missing;
    std::map<std::string, TicketTruth> tickets;  // keyed by ticket_id
    std::size_t epochs_per_fnode = 0;
};

struct SynthResult {
    std::map<std::string, FNodeDataset> datasets;
    std::vector<Ticket> tickets;
    GroundTruth truth;
};

// ---- generation -------------------------------------------------------------------------

namespace detail {

inline std::string zero_pad(std::size_t v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

struct ActiveFault {
    const FaultEvent* event;
    double period_s;
    double phase_s;
    FaultShape shape;
    double amplitude;
    double swing;

    // Mean-amplitude envelope: square alternates between (1-swing)*A and
    // (1+swing)*A; step holds A; ramp climbs 0 -> 2A (mean A).
    double delta(double ts) const {
        if (ts <= event->start_ts || ts > event->end_ts) return 0.0;
        switch (shape) {
        case FaultShape::Step: return amplitude;
        case FaultShape::Ramp: {
            double w = (ts - event->start_ts) / (event->end_ts - event->start_ts);
            return 2.0 * amplitude * w;
        }
        case FaultShape::Square: {
            double phase = std::fmod(ts - event->start_ts + phase_s, period_s);
            if (phase < 0) phase += period_s;
            bool high = phase < period_s / 2.0;
            return amplitude * (high ? 1.0 + swing : 1.0 - swing);
        }
        }
        return 0.0;
    }
};

}  // namespace detail

inline SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthResult out;
    const double interval_s = hours_to_seconds(cfg.collection_interval_hours);
    const double jitter_s = hours_to_seconds(cfg.jitter_hours);
    const std::size_t n_epochs = static_cast<std::size_t>(
        std::floor(cfg.duration_days * 24.0 / cfg.collection_interval_hours));
    if (n_epochs == 0) throw InvalidConfig("synth: duration shorter than one collection interval");
    out.truth.epochs_per_fnode = n_epochs;
    const double span_s = static_cast<double>(n_epochs) * interval_s;

    enum StreamTag : std::uint64_t {
        kTagPlan = 1,
        kTagTimestamps,
        kTagBaselines,
        kTagLoss,
        kTagNoise,
        kTagTickets,
        kTagGaps,
    };

    for (std::size_t fi = 0; fi < cfg.n_fnodes; ++fi) {
        const std::string fnode_id = "f" + detail::zero_pad(fi, 3);
        FNodeDataset fnode;
        fnode.fnode_id = fnode_id;
        fnode.collection_interval_hours = cfg.collection_interval_hours;
        fnode.channel_count = cfg.channel_count;

        std::vector<std::string> device_ids;
        for (std::size_t di = 0; di < cfg.devices_per_fnode; ++di)
            device_ids.push_back(fnode_id + "-d" + detail::zero_pad(di, 4));

        // --- fault plan -------------------------------------------------------
        Rng plan(Rng::derive(cfg.seed, fi, kTagPlan));
        std::vector<std::size_t> free_devices(cfg.devices_per_fnode);
        for (std::size_t i = 0; i < free_devices.size(); ++i) free_devices[i] = i;
        auto draw_devices = [&](std::size_t count) {
            std::vector<std::size_t> got;
            for (std::size_t i = 0; i < count && !free_devices.empty(); ++i) {
                std::size_t at = plan.below(free_devices.size());
                got.push_back(free_devices[at]);
                free_devices.erase(free_devices.begin() + static_cast<std::ptrdiff_t>(at));
            }
            std::sort(got.begin(), got.end());
            return got;
        };
        auto snap = [&](double s) { return std::floor(s / interval_s) * interval_s; };
        auto draw_interval = [&](double duration_min_h, double duration_max_h) {
            double dur = snap(hours_to_seconds(plan.uniform(duration_min_h, duration_max_h)));
            dur = std::max(interval_s, dur);
            double latest = std::max(0.0, span_s - dur);
            double start = snap(plan.uniform(0.0, latest));
            return std::make_pair(start, start + dur);
        };

        std::vector<detail::ActiveFault> faults;
        std::vector<FaultEvent> events;
        std::size_t event_no = 0;
        auto add_event = [&](TicketKind kind, std::size_t size, bool outage) {
            auto devs = draw_devices(size);
            if (devs.size() < size) return;  // ran out of free devices
            auto [s, e] = draw_interval(cfg.fault_duration_min_hours, cfg.fault_duration_max_hours);
            FaultEvent ev;
            ev.event_id = fnode_id + "-e" + detail::zero_pad(event_no++, 2);
            ev.fnode_id = fnode_id;
            ev.kind = kind;
            ev.start_ts = s;
            ev.end_ts = e;
            ev.outage = outage;
            for (std::size_t d : devs) ev.devices.push_back(device_ids[d]);
            // Shape parameters: maintenance members share them; service faults
            // draw their own so unrelated premises never co-move.
            detail::ActiveFault af;
            af.shape = cfg.fault_shape;
            af.amplitude = cfg.fault_amplitude;
            af.swing = cfg.square_swing;
            double period_choices[] = {cfg.square_period_hours, cfg.square_period_hours + 8.0,
                                       cfg.square_period_hours + 4.0};
            af.period_s = hours_to_seconds(kind == TicketKind::Maintenance
                                               ? cfg.square_period_hours
                                               : period_choices[plan.below(3)]);
            af.phase_s = kind == TicketKind::Maintenance
                             ? 0.0
                             : snap(plan.uniform(0.0, af.period_s));
            events.push_back(ev);
            faults.push_back(af);
        };
        for (std::size_t k = 0; k < cfg.maintenance_events_per_fnode; ++k) {
            std::size_t size = cfg.maintenance_size_min +
                               plan.below(cfg.maintenance_size_max - cfg.maintenance_size_min + 1);
            bool outage = plan.uniform() < cfg.maintenance_outage_fraction;
            add_event(TicketKind::Maintenance, size, outage);
        }
        for (std::size_t k = 0; k < cfg.service_faults_per_fnode; ++k)
            add_event(TicketKind::Service, cfg.service_fault_size, false);
        for (std::size_t i = 0; i < events.size(); ++i) faults[i].event = &events[i];

        // device index -> fault index (at most one per device by construction)
        std::vector<int> fault_of(cfg.devices_per_fnode, -1);
        for (std::size_t i = 0; i < events.size(); ++i)
            for (const auto& did : events[i].devices) {
                auto it = std::lower_bound(device_ids.begin(), device_ids.end(), did);
                fault_of[static_cast<std::size_t>(it - device_ids.begin())] = static_cast<int>(i);
            }

        // --- telemetry ---------------------------------------------------------
        for (std::size_t di = 0; di < cfg.devices_per_fnode; ++di) {
            const std::string& did = device_ids[di];
            Rng ts_rng(Rng::derive(cfg.seed, fi, kTagTimestamps, di));
            Rng base_rng(Rng::derive(cfg.seed, fi, kTagBaselines, di));
            Rng loss_rng(Rng::derive(cfg.seed, fi, kTagLoss, di));
            Rng noise_rng(Rng::derive(cfg.seed, fi, kTagNoise, di));
            Rng gap_rng(Rng::derive(cfg.seed, fi, kTagGaps, di));

            const double mu_snr = base_rng.uniform(cfg.snr_base_lo, cfg.snr_base_hi);
            const double mu_tx = base_rng.uniform(cfg.tx_base_lo, cfg.tx_base_hi);
            const double mu_rx = base_rng.uniform(cfg.rx_base_lo, cfg.rx_base_hi);

            std::optional<TimeWindow> gap;
            if (gap_rng.uniform() < cfg.p_device_gap) {
                double len = hours_to_seconds(gap_rng.uniform(cfg.gap_min_hours, cfg.gap_max_hours));
                double start = gap_rng.uniform(0.0, std::max(0.0, span_s - len));
                gap = TimeWindow{start, start + len};
            }

            const detail::ActiveFault* fault =
                fault_of[di] >= 0 ? &faults[static_cast<std::size_t>(fault_of[di])] : nullptr;

            TelemetrySeries series;
            series.device_id = did;
            series.fnode_id = fnode_id;
            series.channels.resize(static_cast<std::size_t>(cfg.channel_count));
            auto& missing = out.truth.missing[did];
            missing.resize(static_cast<std::size_t>(cfg.channel_count));

            for (std::size_t e = 0; e < n_epochs; ++e) {
                const double epoch_start = static_cast<double>(e) * interval_s;
                const double ts = epoch_start + ts_rng.uniform() * jitter_s;
                const bool in_outage = fault && fault->event->outage && ts > fault->event->start_ts &&
                                       ts <= fault->event->end_ts;
                const bool in_gap = gap && gap->contains(ts);
                const double delta = (fault && !fault->event->outage) ? fault->delta(ts) : 0.0;
                for (int ch = 0; ch < cfg.channel_count; ++ch) {
                    const bool lost = loss_rng.uniform() < cfg.p_loss;
                    const double dup_draw = loss_rng.uniform();  // consumed either way
                    // Noise draws happen unconditionally so that losing a point
                    // never shifts the values of later points.
                    const double snr = mu_snr - delta + noise_rng.normal(0.0, cfg.noise_sigma);
                    const double tx = mu_tx + delta + noise_rng.normal(0.0, cfg.noise_sigma);
                    const double rx = mu_rx + noise_rng.normal(0.0, cfg.noise_sigma);
                    if (lost || in_outage || in_gap) {
                        missing[static_cast<std::size_t>(ch)].insert(e);
                        continue;
                    }
                    auto& channel = series.channels[static_cast<std::size_t>(ch)];
                    channel.push_back(TelemetryPoint::sample(ts, snr, tx, rx));
                    if (dup_draw < cfg.p_dup)
                        channel.push_back(
                            TelemetryPoint::sample(ts + hours_to_seconds(0.01), snr, tx, rx));
                }
            }
            fnode.devices.emplace(did, std::move(series));
        }

        // --- tickets -------------------------------------------------------------
        Rng ticket_rng(Rng::derive(cfg.seed, fi, kTagTickets));
        struct RawTicket {
            double open_ts;
            TicketKind true_kind;
            std::string device_id;
            std::string event_id;
        };
        std::vector<RawTicket> raw;
        for (std::size_t di = 0; di < cfg.devices_per_fnode; ++di) {
            const std::string& did = device_ids[di];
            const FaultEvent* ev =
                fault_of[di] >= 0 ? &events[static_cast<std::size_t>(fault_of[di])] : nullptr;
            // Piecewise-constant rates: baseline outside the fault interval,
            // multiplied inside it (on the matching kind's stream).
            auto emit = [&](TicketKind kind, double base_per_day, double multiplier) {
                std::vector<std::pair<TimeWindow, double>> pieces;
                if (ev && multiplier != 1.0) {
                    if (ev->start_ts > 0)
                        pieces.push_back({TimeWindow{0.0, ev->start_ts}, base_per_day});
                    pieces.push_back(
                        {TimeWindow{ev->start_ts, ev->end_ts}, base_per_day * multiplier});
                    if (ev->end_ts < span_s)
                        pieces.push_back({TimeWindow{ev->end_ts, span_s}, base_per_day});
                } else {
                    pieces.push_back({TimeWindow{0.0, span_s}, base_per_day});
                }
                for (const auto& [win, rate] : pieces) {
                    double days = seconds_to_hours(win.length()) / 24.0;
                    std::uint64_t n = ticket_rng.poisson(rate * days);
                    for (std::uint64_t k = 0; k < n; ++k) {
                        RawTicket t;
                        t.open_ts = win.start_ts + ticket_rng.uniform() * win.length();
                        t.true_kind = kind;
                        t.device_id = did;
                        if (ev && t.open_ts > ev->start_ts && t.open_ts <= ev->end_ts &&
                            kind == ev->kind)
                            t.event_id = ev->event_id;
                        raw.push_back(std::move(t));
                    }
                }
            };
            double m_mult =
                ev && ev->kind == TicketKind::Maintenance ? cfg.maintenance_ticket_multiplier : 1.0;
            double s_mult =
                ev && ev->kind == TicketKind::Service ? cfg.service_ticket_multiplier : 1.0;
            emit(TicketKind::Maintenance, cfg.baseline_maintenance_per_day, m_mult);
            emit(TicketKind::Service, cfg.baseline_service_per_day, s_mult);
        }
        std::sort(raw.begin(), raw.end(), [](const RawTicket& a, const RawTicket& b) {
            if (a.open_ts != b.open_ts) return a.open_ts < b.open_ts;
            return a.device_id < b.device_id;
        });
        std::size_t ticket_no = 0;
        for (const auto& rt : raw) {
            Ticket t;
            t.ticket_id = fnode_id + "-t" + detail::zero_pad(ticket_no++, 5);
            t.device_id = rt.device_id;
            t.fnode_id = fnode_id;
            t.open_ts = rt.open_ts;
            // Resolution time: most tickets close within a couple of days.
            t.close_ts = rt.open_ts + hours_to_seconds(ticket_rng.uniform(4.0, 96.0));
            double flip = ticket_rng.uniform();
            t.kind = rt.true_kind;
            if (rt.true_kind == TicketKind::Maintenance) {
                if (flip < 3.0 * cfg.mislabel_rate) t.kind = TicketKind::Service;
            } else {
                if (flip < cfg.mislabel_rate) t.kind = TicketKind::Maintenance;
            }
            t.dispatched = ticket_rng.uniform() < 0.7;
            out.truth.tickets[t.ticket_id] = TicketTruth{rt.true_kind, rt.event_id};
            out.tickets.push_back(std::move(t));
        }

        for (auto& ev : events) out.truth.events.push_back(std::move(ev));
        out.datasets.emplace(fnode_id, std::move(fnode));
    }

    std::sort(out.tickets.begin(), out.tickets.end(), [](const Ticket& a, const Ticket& b) {
        if (a.open_ts != b.open_ts) return a.open_ts < b.open_ts;
        return a.ticket_id < b.ticket_id;
    });
    return out;
}

// ---- ground-truth serialization ----------------------------------------------------------

inline const char* kGroundTruthHeader = "event_id,fnode_id,kind,start_ts,end_ts,devices";
inline const char* kMissingTruthHeader = "device_id,channel,epoch_index";

inline void write_ground_truth_csv(const std::string& path, const GroundTruth& truth) {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw InvalidConfig("cannot open for writing: " + path);
    outf << kGroundTruthHeader << '\n';
    for (const auto& ev : truth.events) {
        outf << ev.event_id << ',' << ev.fnode_id << ',' << to_string(ev.kind) << ','
             << format_double(ev.start_ts) << ',' << format_double(ev.end_ts) << ',';
        for (std::size_t i = 0; i < ev.devices.size(); ++i) {
            if (i) outf << ';';
            outf << ev.devices[i];
        }
        outf << '\n';
    }
}

inline std::vector<FaultEvent> read_ground_truth_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open ground truth csv: " + path);
    std::vector<FaultEvent> out;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (!saw_header) {
            saw_header = true;
            if (fields.size() == 6 && fields[0] == "event_id") continue;
            throw MalformedRow(line_no, "expected header '" + std::string(kGroundTruthHeader) + "'");
        }
        if (fields.size() != 6) throw MalformedRow(line_no, "expected 6 fields");
        FaultEvent ev;
        ev.event_id = fields[0];
        ev.fnode_id = fields[1];
        std::string kind = ascii_lower(fields[2]);
        if (kind == "maintenance")
            ev.kind = TicketKind::Maintenance;
        else if (kind == "service")
            ev.kind = TicketKind::Service;
        else
            throw UnknownKind("line " + std::to_string(line_no) + ": unknown event kind");
        ev.start_ts = detail::require_finite(fields[3], "start_ts", line_no);
        ev.end_ts = detail::require_finite(fields[4], "end_ts", line_no);
        std::string cur;
        for (char c : fields[5]) {
            if (c == ';') {
                if (!cur.empty()) ev.devices.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) ev.devices.push_back(cur);
        std::sort(ev.devices.begin(), ev.devices.end());
        out.push_back(std::move(ev));
    }
    return out;
}

inline void write_missing_truth_csv(const std::string& path, const GroundTruth& truth) {
    std::ofstream outf(path, std::ios::binary);
    if (!outf) throw InvalidConfig("cannot open for writing: " + path);
    outf << kMissingTruthHeader << '\n';
    for (const auto& [did, channels] : truth.missing)
        for (std::size_t ch = 0; ch < channels.size(); ++ch)
            for (std::size_t e : channels[ch]) outf << did << ',' << ch << ',' << e << '\n';
}

}  // namespace telapart
