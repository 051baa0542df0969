#pragma once

// Trace files are JSON lines. Line 1 is a header object; every following
// line is one TraceRecord, in emission order. Record keys, in order:
//
//   tick   integer tick index
//   t      simulation time in seconds (tick / tick_rate)
//   user   user id
//   limb   "left" | "right"
//   act    actuator id 0..25
//   pdi_q  PDI in 0.1 mm
//   d_q    D in 0.1 mm
//   flags  wire flag byte
//   duty   emitted duty cycle, percent, from the host reference profile
//   cp     counterpart code (object id, or 65536 + 64*user + 32*limb + slot)
//   nq     quantized contact normal [x, y, z]
//   pos    actuator sphere centre in world metres [x, y, z]

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

inline constexpr const char* kTraceSchema = "hapticmesh.trace";
inline constexpr int kTraceVersion = 1;

struct TraceRecord {
  std::uint64_t tick = 0;
  double time_s = 0.0;
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Right;
  std::uint8_t actuator_id = 0;
  std::uint16_t pdi_q = 0;
  std::uint16_t d_q = 0;
  std::uint8_t flags = 0;
  double duty = 0.0;
  std::uint32_t counterpart = 0;
  std::array<std::int8_t, 3> normal_q{};
  Vec3 position = Vec3::Zero();

  [[nodiscard]] bool onset() const { return flags & wire::flag::kOnset; }
  [[nodiscard]] bool grabbed() const { return flags & wire::flag::kGrabbed; }

  [[nodiscard]] wire::CollisionMessage message() const {
    wire::CollisionMessage m;
    m.actuator_id = actuator_id;
    m.onset = flags & wire::flag::kOnset;
    m.grabbed = flags & wire::flag::kGrabbed;
    m.avatar_contact = flags & wire::flag::kAvatar;
    m.pdi_q = pdi_q;
    m.d_q = d_q;
    m.normal_q = normal_q;
    return m;
  }
};

inline nlohmann::ordered_json record_to_json(const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["tick"] = r.tick;
  j["t"] = r.time_s;
  j["user"] = r.user;
  j["limb"] = to_string(r.limb);
  j["act"] = r.actuator_id;
  j["pdi_q"] = r.pdi_q;
  j["d_q"] = r.d_q;
  j["flags"] = r.flags;
  j["duty"] = r.duty;
  j["cp"] = r.counterpart;
  j["nq"] = {r.normal_q[0], r.normal_q[1], r.normal_q[2]};
  j["pos"] = {r.position.x(), r.position.y(), r.position.z()};
  return j;
}

inline TraceRecord record_from_json(const nlohmann::json& j) {
  TraceRecord r;
  r.tick = j.at("tick").get<std::uint64_t>();
  r.time_s = j.at("t").get<double>();
  r.user = j.at("user").get<std::uint16_t>();
  r.limb = limb_side_from_string(j.at("limb").get<std::string>());
  const int act = j.at("act").get<int>();
  check_slot_id(act);
  r.actuator_id = static_cast<std::uint8_t>(act);
  r.pdi_q = j.at("pdi_q").get<std::uint16_t>();
  r.d_q = j.at("d_q").get<std::uint16_t>();
  r.flags = j.at("flags").get<std::uint8_t>();
  r.duty = j.at("duty").get<double>();
  r.counterpart = j.at("cp").get<std::uint32_t>();
  const auto& nq = j.at("nq");
  const auto& pos = j.at("pos");
  if (nq.size() != 3 || pos.size() != 3) throw Error(ErrorCode::TraceCorrupt, "nq/pos must have 3 entries");
  for (std::size_t i = 0; i < 3; ++i) {
    r.normal_q[i] = nq[i].get<std::int8_t>();
    r.position[static_cast<Eigen::Index>(i)] = pos[i].get<double>();
  }
  return r;
}

struct TraceHeader {
  double tick_rate_hz = 120.0;
  std::uint64_t seed = 0;
  nlohmann::json gestures = nlohmann::json::array();
};

inline nlohmann::ordered_json header_to_json(const TraceHeader& h) {
  nlohmann::ordered_json j;
  j["schema"] = kTraceSchema;
  j["version"] = kTraceVersion;
  j["tick_rate_hz"] = h.tick_rate_hz;
  j["seed"] = h.seed;
  j["gestures"] = h.gestures;
  return j;
}

struct Trace {
  TraceHeader header;
  std::vector<TraceRecord> records;
};

inline void write_trace_header(std::ostream& out, const TraceHeader& h) { out << header_to_json(h).dump() << '\n'; }

inline void write_trace_record(std::ostream& out, const TraceRecord& r) { out << record_to_json(r).dump() << '\n'; }

// Reads a whole trace. Errors carry the 1-based line number. An empty stream
// is an empty trace.
inline Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::uint64_t last_tick = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_header) {
        if (j.value("schema", std::string()) != kTraceSchema) throw Error(ErrorCode::TraceCorrupt, "missing trace header");
        if (j.value("version", 0) != kTraceVersion) {
          throw Error(ErrorCode::TraceCorrupt, "trace version " + j.value("version", nlohmann::json()).dump() +
                                                   " is not supported");
        }
        trace.header.tick_rate_hz = j.at("tick_rate_hz").get<double>();
        trace.header.seed = j.at("seed").get<std::uint64_t>();
        trace.header.gestures = j.value("gestures", nlohmann::json::array());
        have_header = true;
        continue;
      }
      auto r = record_from_json(j);
      if (!trace.records.empty() && r.tick < last_tick) throw Error(ErrorCode::TraceCorrupt, "ticks go backwards");
      last_tick = r.tick;
      trace.records.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::TraceCorrupt, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::TraceCorrupt, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace hapticmesh
