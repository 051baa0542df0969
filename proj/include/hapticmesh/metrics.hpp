#pragma once

// Offline report over a recorded trace: message counts, wire sizes, gesture
// pacing and, when a run sidecar is present, achieved rate and latency.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/gestures.hpp"
#include "hapticmesh/session.hpp"
#include "hapticmesh/trace.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

struct GestureRow {
  std::size_t index = 0;
  GestureScript script;
  std::optional<GestureMetrics> metrics;  // empty when the window had no contact
};

struct MetricsReport {
  std::uint64_t records = 0;
  std::uint64_t onsets = 0;
  std::uint64_t ticks_spanned = 0;
  double tick_rate_hz = 0.0;
  std::optional<double> achieved_hz;       // from the run sidecar
  std::optional<LatencySummary> latency;  // from the run sidecar
  std::map<EndpointKey, std::uint64_t> per_endpoint;
  std::map<std::size_t, std::uint64_t> bytes_histogram;  // framed message size -> count
  std::vector<GestureRow> gestures;

  [[nodiscard]] std::size_t max_message_bytes() const {
    return bytes_histogram.empty() ? 0 : bytes_histogram.rbegin()->first;
  }
};

inline MetricsReport compute_metrics(const Trace& trace, const nlohmann::json* run_report = nullptr) {
  MetricsReport m;
  m.tick_rate_hz = trace.header.tick_rate_hz;
  m.records = trace.records.size();
  std::vector<std::uint8_t> framed;
  for (const auto& r : trace.records) {
    m.onsets += r.onset() ? 1 : 0;
    ++m.per_endpoint[{r.user, r.limb}];
    framed.clear();
    wire::append_frame(framed, wire::encode_collision(r.message()));
    ++m.bytes_histogram[framed.size()];
  }
  if (!trace.records.empty()) m.ticks_spanned = trace.records.back().tick - trace.records.front().tick + 1;
  if (m.max_message_bytes() > wire::kMaxMessageBytes) {
    throw Error(ErrorCode::ProtocolError, "a message exceeded the 21-byte bound");
  }

  for (std::size_t i = 0; i < trace.header.gestures.size(); ++i) {
    GestureRow row;
    row.index = i;
    row.script = script_from_json(trace.header.gestures[i]);
    try {
      row.metrics = measure(trace.records, row.script);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoData) throw;
    }
    m.gestures.push_back(std::move(row));
  }

  if (run_report != nullptr) {
    m.achieved_hz = run_report->at("achieved_hz").get<double>();
    const auto& l = run_report->at("latency_ms");
    LatencySummary s;
    s.p50_ms = l.at("p50").get<double>();
    s.p95_ms = l.at("p95").get<double>();
    s.p99_ms = l.at("p99").get<double>();
    s.max_ms = l.at("max").get<double>();
    s.samples = l.at("samples").get<std::size_t>();
    m.latency = s;
  }
  return m;
}

inline void print_metrics(std::ostream& out, const MetricsReport& m) {
  out << "records            " << m.records << "\n";
  out << "onset messages     " << m.onsets << "\n";
  out << "ticks spanned      " << m.ticks_spanned << "\n";
  out << "tick rate (hz)     " << m.tick_rate_hz << "\n";
  if (m.achieved_hz) out << "achieved rate (hz) " << *m.achieved_hz << "\n";
  if (m.latency) {
    out << "latency ms         p50 " << m.latency->p50_ms << "  p95 " << m.latency->p95_ms << "  p99 "
        << m.latency->p99_ms << "\n";
  }
  out << "max message bytes  " << m.max_message_bytes() << "\n";
  for (const auto& [bytes, count] : m.bytes_histogram) out << "  " << bytes << " B: " << count << "\n";
  out << "messages per endpoint\n";
  for (const auto& [key, count] : m.per_endpoint) out << "  " << to_string(key) << ": " << count << "\n";
  if (!m.gestures.empty()) {
    out << "gestures\n";
    for (const auto& g : m.gestures) {
      const auto unit = g.script.kind == GestureKind::Stroke ? "cm/s" : "/s";
      out << "  #" << g.index << " " << to_string(g.script.kind) << " " << to_string(g.script.speed)
          << " configured " << g.script.rate << " " << unit;
      if (g.metrics) {
        out << " measured " << g.metrics->measured() << " " << unit << " onsets " << g.metrics->onsets;
      } else {
        out << " measured n/a";
      }
      out << "\n";
    }
  }
}

inline void write_metrics_csv(std::ostream& out, const MetricsReport& m) {
  out << "section,key,value\n";
  out << "summary,records," << m.records << "\n";
  out << "summary,onsets," << m.onsets << "\n";
  out << "summary,ticks_spanned," << m.ticks_spanned << "\n";
  out << "summary,tick_rate_hz," << m.tick_rate_hz << "\n";
  if (m.achieved_hz) out << "summary,achieved_hz," << *m.achieved_hz << "\n";
  if (m.latency) {
    out << "latency,p50_ms," << m.latency->p50_ms << "\n";
    out << "latency,p95_ms," << m.latency->p95_ms << "\n";
    out << "latency,p99_ms," << m.latency->p99_ms << "\n";
  }
  for (const auto& [bytes, count] : m.bytes_histogram) out << "bytes," << bytes << "," << count << "\n";
  for (const auto& [key, count] : m.per_endpoint) out << "endpoint," << to_string(key) << "," << count << "\n";
  out << "\ngesture,kind,speed,configured,measured,onsets\n";
  for (const auto& g : m.gestures) {
    out << g.index << "," << to_string(g.script.kind) << "," << to_string(g.script.speed) << "," << g.script.rate
        << ",";
    if (g.metrics) {
      out << g.metrics->measured() << "," << g.metrics->onsets;
    } else {
      out << ",0";
    }
    out << "\n";
  }
}

}  // namespace hapticmesh
