#pragma once

// Scripted social-touch gestures. A script drives a few actor spheres along
// deterministic paths; every other actor sphere holds its rest pose.
//
// Stroke moves one fingertip along a line at constant speed, then lifts and
// returns. Pat, poke and squeeze are periodic presses: approach, a contact
// dwell of fixed length, retreat, hover.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/collision.hpp"
#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/trace.hpp"

namespace hapticmesh {

enum class GestureKind { Stroke, Pat, Poke, Squeeze };
enum class SpeedClass { Slow, Medium, Fast, Custom };

constexpr std::string_view to_string(GestureKind k) {
  switch (k) {
    case GestureKind::Stroke: return "stroke";
    case GestureKind::Pat: return "pat";
    case GestureKind::Poke: return "poke";
    case GestureKind::Squeeze: return "squeeze";
  }
  return "unknown";
}

inline GestureKind gesture_kind_from_string(std::string_view s) {
  for (auto k : {GestureKind::Stroke, GestureKind::Pat, GestureKind::Poke, GestureKind::Squeeze}) {
    if (s == to_string(k)) return k;
  }
  throw Error(ErrorCode::SchemaError, "unknown gesture kind \"" + std::string(s) + "\"");
}

constexpr std::string_view to_string(SpeedClass c) {
  switch (c) {
    case SpeedClass::Slow: return "S";
    case SpeedClass::Medium: return "M";
    case SpeedClass::Fast: return "F";
    case SpeedClass::Custom: return "custom";
  }
  return "unknown";
}

inline SpeedClass speed_class_from_string(std::string_view s) {
  for (auto c : {SpeedClass::Slow, SpeedClass::Medium, SpeedClass::Fast, SpeedClass::Custom}) {
    if (s == to_string(c)) return c;
  }
  throw Error(ErrorCode::SchemaError, "unknown speed class \"" + std::string(s) + "\"");
}

// Class defaults: stroke in cm/s, everything else in events per second.
inline double default_rate(GestureKind kind, SpeedClass speed) {
  if (kind == GestureKind::Stroke) {
    switch (speed) {
      case SpeedClass::Slow: return 2.0;
      case SpeedClass::Medium: return 6.0;
      case SpeedClass::Fast: return 20.0;
      case SpeedClass::Custom: break;
    }
  } else {
    switch (speed) {
      case SpeedClass::Slow: return 0.5;
      case SpeedClass::Medium: return 1.5;
      case SpeedClass::Fast: return 3.0;
      case SpeedClass::Custom: break;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "custom speed class needs an explicit rate");
}

inline constexpr double kStrokeDepthFraction = 0.4;
inline constexpr double kStrokeLiftS = 0.2;
inline constexpr double kStrokeReturnS = 0.4;
inline constexpr double kStrokeLift = 0.040;
inline constexpr double kClearance = 0.030;
inline constexpr double kMediumEventRate = 1.5;

struct GestureActor {
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Right;
};

struct GestureTarget {
  bool is_object = false;
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Left;
  Region region = Region::ForearmDorsal;
  std::uint32_t object_id = 0;

  [[nodiscard]] bool matches(std::uint32_t counterpart_code) const {
    const auto cp = Counterpart::from_code(counterpart_code);
    if (is_object) return !cp.is_avatar() && cp.object_id == object_id;
    return cp.is_avatar() && cp.sphere.user == user && cp.sphere.limb == limb;
  }
};

// One actor sphere pressing toward `anchor` along -axis. Height is measured
// from the anchor along axis; contact begins at contact_height.
struct PressTrack {
  int slot = 0;
  Vec3 anchor = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double contact_height = 0.0;
  double depth = 0.0;  // extra travel past contact at the middle of the dwell
};

struct StrokeTrack {
  int slot = 0;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  Vec3 lift_axis = Vec3::UnitZ();
};

// Explicit overrides for anything build_script would otherwise derive.
struct GestureParams {
  std::optional<double> rate;  // cm/s for stroke, events/s otherwise
  int repetitions = 3;
  double start_time_s = 0.0;
  int station = 2;  // forearm row index the press is centred on
  std::optional<Vec3> path_start;
  std::optional<Vec3> path_end;
  std::optional<Vec3> contact_point;
  std::optional<Vec3> approach_axis;
  std::vector<std::pair<int, int>> closure;  // squeeze: (actor slot, target slot)
};

struct GestureScript {
  GestureKind kind = GestureKind::Stroke;
  SpeedClass speed = SpeedClass::Medium;
  double rate = 0.0;  // cm/s for stroke, events/s otherwise
  GestureActor actor;
  GestureTarget target;
  double start_time_s = 0.0;
  int repetitions = 3;
  int primary_slot = slots::kIndexTip;

  // Timing, seconds.
  double period_s = 0.0;
  double approach_s = 0.0;
  double dwell_s = 0.0;
  double ramp_fraction = 0.5;  // share of the dwell spent pressing in / out

  std::optional<StrokeTrack> stroke;
  std::vector<PressTrack> presses;

  [[nodiscard]] double end_time_s() const { return start_time_s + repetitions * period_s; }
  [[nodiscard]] double stroke_pass_s() const {
    return stroke ? (stroke->end - stroke->start).norm() / (rate / 100.0) : 0.0;
  }
};

// World geometry the builder reads default paths from.
struct GestureGeometry {
  const LimbTopology* actor_limb = nullptr;
  const LimbTopology* target_limb = nullptr;
  const WorldObject* target_object = nullptr;
};

namespace detail {

inline double base_dwell_s(GestureKind kind) {
  switch (kind) {
    case GestureKind::Pat: return 0.080;
    case GestureKind::Poke: return 0.050;
    case GestureKind::Squeeze: return 0.400;
    case GestureKind::Stroke: break;
  }
  return 0.0;
}

inline double depth_fraction(GestureKind kind) {
  switch (kind) {
    case GestureKind::Pat: return 0.5;
    case GestureKind::Poke: return 0.8;
    case GestureKind::Squeeze: return 0.6;
    case GestureKind::Stroke: return kStrokeDepthFraction;
  }
  return 0.5;
}

inline int row_base(Region region) {
  return region == Region::ForearmVolar ? slots::kFirstVolar : slots::kFirstDorsal;
}

inline Region opposite_row(Region region) {
  return region == Region::ForearmVolar ? Region::ForearmDorsal : Region::ForearmVolar;
}

}  // namespace detail

inline GestureScript build_script(GestureKind kind, SpeedClass speed, const GestureActor& actor,
                                  const GestureTarget& target, const GestureParams& params,
                                  const GestureGeometry& geometry) {
  if (geometry.actor_limb == nullptr) throw Error(ErrorCode::InvalidConfig, "gesture actor limb missing");
  if (params.repetitions < 1) throw Error(ErrorCode::InvalidConfig, "repetitions must be >= 1");
  if (!(params.start_time_s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "start time must be >= 0");

  GestureScript s;
  s.kind = kind;
  s.speed = speed;
  s.rate = params.rate.value_or(speed == SpeedClass::Custom ? -1.0 : default_rate(kind, speed));
  if (!(s.rate > 0.0) || !std::isfinite(s.rate)) throw Error(ErrorCode::InvalidConfig, "gesture rate must be positive");
  s.actor = actor;
  s.target = target;
  s.start_time_s = params.start_time_s;
  s.repetitions = params.repetitions;

  const LimbTopology& actor_limb = *geometry.actor_limb;
  const bool avatar_target = !target.is_object;
  if (avatar_target) {
    if (geometry.target_limb == nullptr) throw Error(ErrorCode::InvalidConfig, "gesture target limb missing");
    if (is_hand(target.region)) throw Error(ErrorCode::InvalidConfig, "gesture targets must be forearm rows");
  } else if (geometry.target_object == nullptr) {
    throw Error(ErrorCode::InvalidConfig, "gesture target object missing");
  }
  if (params.station < 0 || params.station >= slots::kRowLength) {
    throw Error(ErrorCode::InvalidConfig, "station must lie in 0..5");
  }

  auto actor_radius = [&](int slot) { return actor_limb.slots.at(static_cast<std::size_t>(slot)).sphere_radius; };
  // Reach and D for an actor slot against a target sphere or the target object.
  auto reach_and_d = [&](int actor_slot, int target_slot) -> std::pair<double, double> {
    const double r = actor_radius(actor_slot);
    if (avatar_target) {
      const double big = geometry.target_limb->slots.at(static_cast<std::size_t>(target_slot)).sphere_radius;
      return {r + big, 2.0 * std::min(r, big)};
    }
    return {r, geometry.target_object->max_penetration};
  };
  auto finite = [](const Vec3& v) { return v.allFinite(); };

  if (kind == GestureKind::Stroke) {
    s.primary_slot = slots::kIndexTip;
    StrokeTrack track;
    track.slot = s.primary_slot;
    if (params.path_start && params.path_end) {
      // Explicit surface points; the fingertip rides above them at stroke depth.
      const Vec3 axis = params.approach_axis.value_or(Vec3::UnitZ()).normalized();
      const auto [reach, d] = reach_and_d(track.slot, slots::kFirstDorsal);
      const double h = reach - kStrokeDepthFraction * d;
      track.start = *params.path_start + axis * h;
      track.end = *params.path_end + axis * h;
      track.lift_axis = axis;
    } else {
      if (!avatar_target) throw Error(ErrorCode::InvalidConfig, "stroke on an object needs path_start/path_end");
      const LimbTopology& tl = *geometry.target_limb;
      const int base = detail::row_base(target.region);
      const Vec3 wrist_end = tl.world_position(base);
      const Vec3 elbow_end = tl.world_position(base + slots::kRowLength - 1);
      const Vec3 u = (wrist_end - elbow_end).normalized();
      const Vec3 n = tl.row_outward_normal(target.region);
      const auto [reach, d] = reach_and_d(track.slot, base);
      const double h = reach - kStrokeDepthFraction * d;
      const double margin = reach + 0.005;
      track.start = elbow_end - u * margin + n * h;
      track.end = wrist_end + u * margin + n * h;
      track.lift_axis = n;
    }
    if (!finite(track.start) || !finite(track.end) || (track.end - track.start).norm() <= 0.0) {
      throw Error(ErrorCode::InvalidConfig, "stroke path endpoints must be finite and distinct");
    }
    s.stroke = track;
    s.period_s = s.stroke_pass_s() + 2.0 * kStrokeLiftS + kStrokeReturnS;
    return s;
  }

  // Periodic presses.
  s.period_s = 1.0 / s.rate;
  s.approach_s = std::min(0.15 * s.period_s, 0.1);
  s.dwell_s = detail::base_dwell_s(kind) * (s.rate <= kMediumEventRate ? 1.0 : kMediumEventRate / s.rate);
  s.ramp_fraction = kind == GestureKind::Squeeze ? 0.25 : 0.5;
  if (!(2.0 * s.approach_s + s.dwell_s < s.period_s)) {
    throw Error(ErrorCode::InvalidConfig, "rate too high for the gesture envelope");
  }
  const double frac = detail::depth_fraction(kind);

  auto avatar_press = [&](int actor_slot, int target_slot) {
    const LimbTopology& tl = *geometry.target_limb;
    const auto [reach, d] = reach_and_d(actor_slot, target_slot);
    PressTrack p;
    p.slot = actor_slot;
    p.anchor = tl.world_position(target_slot);
    p.axis = tl.row_outward_normal(region_of_slot(target_slot));
    p.contact_height = reach;
    p.depth = frac * d;
    return p;
  };

  if (!avatar_target || params.contact_point) {
    if (!params.contact_point) throw Error(ErrorCode::InvalidConfig, "press on an object needs contact_point");
    s.primary_slot = kind == GestureKind::Squeeze ? slots::kThumbTip
                     : kind == GestureKind::Pat   ? slots::kMiddleTip
                                                  : slots::kIndexTip;
    const auto [reach, d] = reach_and_d(s.primary_slot, slots::kFirstDorsal);
    PressTrack p;
    p.slot = s.primary_slot;
    p.anchor = *params.contact_point;
    p.axis = params.approach_axis.value_or(Vec3::UnitZ()).normalized();
    p.contact_height = reach;
    p.depth = frac * d;
    if (!finite(p.anchor) || !finite(p.axis)) throw Error(ErrorCode::InvalidConfig, "contact point must be finite");
    s.presses.push_back(p);
    return s;
  }

  const int base = detail::row_base(target.region);
  const int station = params.station;
  switch (kind) {
    case GestureKind::Poke:
      s.primary_slot = slots::kIndexTip;
      s.presses.push_back(avatar_press(slots::kIndexTip, base + station));
      break;
    case GestureKind::Pat: {
      // Index, middle, ring land on neighbouring stations of the row.
      s.primary_slot = slots::kMiddleTip;
      const int centre = std::clamp(station, 1, slots::kRowLength - 2);
      s.presses.push_back(avatar_press(slots::kIndexTip, base + centre - 1));
      s.presses.push_back(avatar_press(slots::kMiddleTip, base + centre));
      s.presses.push_back(avatar_press(slots::kRingTip, base + centre + 1));
      break;
    }
    case GestureKind::Squeeze: {
      s.primary_slot = slots::kThumbTip;
      auto closure = params.closure;
      if (closure.empty()) {
        const int other = detail::row_base(detail::opposite_row(target.region));
        const int next = std::min(station + 1, slots::kRowLength - 1);
        closure = {{slots::kThumbTip, base + station}, {slots::kIndexTip, other + station},
                   {slots::kMiddleTip, other + next}};
      }
      for (const auto& [actor_slot, target_slot] : closure) {
        check_slot_id(actor_slot);
        check_slot_id(target_slot);
        if (is_hand(region_of_slot(target_slot))) {
          throw Error(ErrorCode::InvalidConfig, "squeeze closure must target forearm slots");
        }
        s.presses.push_back(avatar_press(actor_slot, target_slot));
      }
      s.primary_slot = s.presses.front().slot;
      break;
    }
    case GestureKind::Stroke: break;
  }
  return s;
}

struct SlotOverride {
  int slot = 0;
  Vec3 position = Vec3::Zero();
};

namespace detail {

inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

// Press height above the anchor at phase tau within one cycle.
inline double press_height(const GestureScript& s, const PressTrack& p, double tau) {
  const double clear = p.contact_height + kClearance;
  const double a = s.approach_s;
  const double w = s.dwell_s;
  if (tau < a) return clear + (p.contact_height - clear) * (tau / a);
  if (tau < a + w) {
    const double in = tau - a;
    const double ramp = s.ramp_fraction * w;
    const double level = std::min({1.0, in / ramp, (w - in) / ramp});
    return p.contact_height - p.depth * std::max(level, 0.0);
  }
  if (tau < 2.0 * a + w) return p.contact_height + (clear - p.contact_height) * ((tau - a - w) / a);
  return clear;
}

inline Vec3 stroke_position(const GestureScript& s, double tau) {
  const StrokeTrack& k = *s.stroke;
  const double pass = s.stroke_pass_s();
  const Vec3 lift = k.lift_axis * kStrokeLift;
  if (tau < pass) {
    const Vec3 dir = (k.end - k.start).normalized();
    return k.start + dir * (s.rate / 100.0) * tau;
  }
  tau -= pass;
  if (tau < kStrokeLiftS) return lerp(k.end, k.end + lift, tau / kStrokeLiftS);
  tau -= kStrokeLiftS;
  if (tau < kStrokeReturnS) return lerp(k.end + lift, k.start + lift, tau / kStrokeReturnS);
  tau -= kStrokeReturnS;
  return lerp(k.start + lift, k.start, std::min(1.0, tau / kStrokeLiftS));
}

}  // namespace detail

// Overrides for the actor limb at time t; empty outside the script window.
inline std::vector<SlotOverride> sample(const GestureScript& s, double t_s) {
  std::vector<SlotOverride> out;
  if (t_s < s.start_time_s || t_s >= s.end_time_s()) return out;
  const double local = t_s - s.start_time_s;
  const double cycles = std::floor(local / s.period_s);
  const double tau = local - cycles * s.period_s;
  if (s.stroke) {
    out.push_back({s.stroke->slot, detail::stroke_position(s, tau)});
    return out;
  }
  for (const auto& p : s.presses) out.push_back({p.slot, p.anchor + p.axis * detail::press_height(s, p, tau)});
  return out;
}

struct GestureMetrics {
  GestureKind kind = GestureKind::Stroke;
  double configured = 0.0;        // the script's rate, same unit as measured
  double mean_velocity_cm_s = 0.0;  // stroke
  double events_per_s = 0.0;        // pat, poke, squeeze
  std::size_t onsets = 0;
  std::vector<double> repetition_times_s;  // stroke: pass durations; others: inter-onset intervals

  [[nodiscard]] double measured() const { return kind == GestureKind::Stroke ? mean_velocity_cm_s : events_per_s; }
};

// Recovers the gesture's pacing from the actor's own contact records.
inline GestureMetrics measure(std::span<const TraceRecord> trace, const GestureScript& s) {
  GestureMetrics m;
  m.kind = s.kind;
  m.configured = s.rate;
  std::vector<const TraceRecord*> own;
  for (const auto& r : trace) {
    if (r.user != s.actor.user || r.limb != s.actor.limb || r.actuator_id != s.primary_slot) continue;
    if (r.time_s < s.start_time_s - 1e-9 || r.time_s >= s.end_time_s()) continue;
    if (!s.target.matches(r.counterpart)) continue;
    own.push_back(&r);
  }
  for (const auto* r : own) m.onsets += r->onset() ? 1 : 0;
  if (own.empty()) throw Error(ErrorCode::NoData, "no contact records in the gesture window");

  if (s.kind == GestureKind::Stroke) {
    double sum = 0.0;
    std::size_t n = 0;
    double pass_begin = own.front()->time_s;
    for (std::size_t i = 1; i < own.size(); ++i) {
      const auto* a = own[i - 1];
      const auto* b = own[i];
      if (b->tick != a->tick + 1) {
        m.repetition_times_s.push_back(a->time_s - pass_begin);
        pass_begin = b->time_s;
        continue;
      }
      sum += (b->position - a->position).norm() / (b->time_s - a->time_s);
      ++n;
    }
    m.repetition_times_s.push_back(own.back()->time_s - pass_begin);
    if (n == 0) throw Error(ErrorCode::NoData, "stroke never stayed in contact for two ticks");
    m.mean_velocity_cm_s = 100.0 * sum / static_cast<double>(n);
    return m;
  }

  std::vector<double> onset_times;
  for (const auto* r : own) {
    if (r->onset()) onset_times.push_back(r->time_s);
  }
  if (onset_times.empty()) throw Error(ErrorCode::NoData, "no contact onsets in the gesture window");
  for (std::size_t i = 1; i < onset_times.size(); ++i) m.repetition_times_s.push_back(onset_times[i] - onset_times[i - 1]);
  if (m.repetition_times_s.empty()) {
    m.events_per_s = 1.0 / (s.end_time_s() - s.start_time_s);
  } else {
    const double mean = std::accumulate(m.repetition_times_s.begin(), m.repetition_times_s.end(), 0.0) /
                        static_cast<double>(m.repetition_times_s.size());
    m.events_per_s = 1.0 / mean;
  }
  return m;
}

// ---- JSON form of a resolved script (carried in trace headers) ----

namespace detail {
inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline Vec3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::SchemaError, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
}  // namespace detail

inline nlohmann::json script_to_json(const GestureScript& s) {
  nlohmann::json j{{"kind", to_string(s.kind)},
                   {"speed", to_string(s.speed)},
                   {"rate", s.rate},
                   {"actor", {{"user", s.actor.user}, {"limb", to_string(s.actor.limb)}}},
                   {"start_time_s", s.start_time_s},
                   {"end_time_s", s.end_time_s()},
                   {"repetitions", s.repetitions},
                   {"primary_slot", s.primary_slot},
                   {"period_s", s.period_s},
                   {"approach_s", s.approach_s},
                   {"dwell_s", s.dwell_s},
                   {"ramp_fraction", s.ramp_fraction}};
  if (s.target.is_object) {
    j["target"] = {{"object", s.target.object_id}};
  } else {
    j["target"] = {{"user", s.target.user}, {"limb", to_string(s.target.limb)}, {"region", to_string(s.target.region)}};
  }
  if (s.stroke) {
    j["stroke"] = {{"slot", s.stroke->slot},
                   {"start", detail::vec_json(s.stroke->start)},
                   {"end", detail::vec_json(s.stroke->end)},
                   {"lift_axis", detail::vec_json(s.stroke->lift_axis)}};
  }
  auto presses = nlohmann::json::array();
  for (const auto& p : s.presses) {
    presses.push_back({{"slot", p.slot},
                       {"anchor", detail::vec_json(p.anchor)},
                       {"axis", detail::vec_json(p.axis)},
                       {"contact_height", p.contact_height},
                       {"depth", p.depth}});
  }
  j["presses"] = presses;
  return j;
}

inline GestureScript script_from_json(const nlohmann::json& j) {
  try {
    GestureScript s;
    s.kind = gesture_kind_from_string(j.at("kind").get<std::string>());
    s.speed = speed_class_from_string(j.at("speed").get<std::string>());
    s.rate = j.at("rate").get<double>();
    s.actor.user = j.at("actor").at("user").get<std::uint16_t>();
    s.actor.limb = limb_side_from_string(j.at("actor").at("limb").get<std::string>());
    const auto& t = j.at("target");
    if (t.contains("object")) {
      s.target.is_object = true;
      s.target.object_id = t.at("object").get<std::uint32_t>();
    } else {
      s.target.user = t.at("user").get<std::uint16_t>();
      s.target.limb = limb_side_from_string(t.at("limb").get<std::string>());
      s.target.region = region_from_string(t.at("region").get<std::string>());
    }
    s.start_time_s = j.at("start_time_s").get<double>();
    s.repetitions = j.at("repetitions").get<int>();
    s.primary_slot = j.at("primary_slot").get<int>();
    s.period_s = j.at("period_s").get<double>();
    s.approach_s = j.at("approach_s").get<double>();
    s.dwell_s = j.at("dwell_s").get<double>();
    s.ramp_fraction = j.at("ramp_fraction").get<double>();
    if (j.contains("stroke")) {
      const auto& k = j.at("stroke");
      s.stroke = StrokeTrack{k.at("slot").get<int>(), detail::vec_from(k.at("start")), detail::vec_from(k.at("end")),
                             detail::vec_from(k.at("lift_axis"))};
    }
    for (const auto& p : j.at("presses")) {
      s.presses.push_back(PressTrack{p.at("slot").get<int>(), detail::vec_from(p.at("anchor")),
                                     detail::vec_from(p.at("axis")), p.at("contact_height").get<double>(),
                                     p.at("depth").get<double>()});
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("gesture script: ") + e.what());
  }
}

}  // namespace hapticmesh
