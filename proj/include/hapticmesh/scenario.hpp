#pragma once

// Scenario documents: everything needed to build and run a session.
//
//   {"schema": "hapticmesh.scenario", "version": 1,
//    "session":  {tick_rate_hz, seed, real_time, allow_self_contact, position_jitter_mm,
//                 queue_capacity, duration_s},
//    "topology": {..TopologyConfig, millimetres..},
//    "profile":  {..DeviceProfile..},
//    "users":    [{"limbs": {"left": {position, orientation [w,x,y,z], endpoint}, "right": {..}}}],
//    "objects":  [{"shape": {"type": "sphere"|"box"|"plane", ..}, stiffness, grabbable}],
//    "gestures": [{kind, speed, rate, actor, target, start_time_s, repetitions, station,
//                  path_start, path_end, contact_point, approach_axis, closure}],
//    "grab_inputs": [{tick, user, limb, object, grab}]}
//
// Positions are metres in the world frame. A gesture without start_time_s
// starts 0.5 s after the previous one ends.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/collision.hpp"
#include "hapticmesh/gestures.hpp"
#include "hapticmesh/haptics.hpp"
#include "hapticmesh/session.hpp"
#include "hapticmesh/topology.hpp"

namespace hapticmesh {

inline constexpr const char* kScenarioSchema = "hapticmesh.scenario";
inline constexpr int kScenarioVersion = 1;
inline constexpr double kGestureGapS = 0.5;

struct LimbPlacement {
  Pose pose;
  EndpointBinding binding;
};

struct UserSpec {
  std::array<LimbPlacement, kLimbsPerUser> limbs;  // indexed by LimbSide
};

struct ObjectSpec {
  Shape shape;
  double stiffness = 1.0;
  bool grabbable = false;
};

struct GestureSpec {
  GestureKind kind = GestureKind::Stroke;
  SpeedClass speed = SpeedClass::Medium;
  GestureActor actor;
  GestureTarget target;
  GestureParams params;
  bool auto_start = true;
};

struct GrabInputSpec {
  std::uint64_t tick = 0;
  GrabInput input;
};

struct Scenario {
  SessionConfig session;
  std::optional<double> duration_s;
  TopologyConfig topology;
  DeviceProfile profile;
  std::vector<UserSpec> users;
  std::vector<ObjectSpec> objects;
  std::vector<GestureSpec> gestures;
  std::vector<GrabInputSpec> grab_inputs;
};

namespace detail {

template <class F>
decltype(auto) schema_guard(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, where + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    throw Error(ErrorCode::SchemaError, where + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::SchemaError, where + ": unknown key \"" + key + "\"");
  }
}

inline Quat quat_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::SchemaError, "orientation must be [w, x, y, z]");
  Quat q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
  if (!(q.norm() > 0.0)) throw Error(ErrorCode::SchemaError, "orientation must be non-zero");
  return q.normalized();
}

inline EndpointBinding binding_from(const nlohmann::json& j) {
  EndpointBinding b;
  const auto text = j.get<std::string>();
  if (text == "in-process") return b;
  b.kind = EndpointBinding::Kind::Network;
  if (text != "network") b.address = net::parse_endpoint(text);
  return b;
}

inline std::string binding_text(const EndpointBinding& b) {
  if (b.kind == EndpointBinding::Kind::InProcess) return "in-process";
  return b.address.host.empty() || b.address.port == 0 ? "network" : b.address.str();
}

inline Shape shape_from(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "sphere") {
    reject_unknown(j, {"type", "center", "radius"}, "sphere");
    return SphereShape{vec_from(j.at("center")), j.at("radius").get<double>()};
  }
  if (type == "box") {
    reject_unknown(j, {"type", "center", "half_extents", "orientation"}, "box");
    BoxShape b{vec_from(j.at("center")), vec_from(j.at("half_extents")), Quat::Identity()};
    if (j.contains("orientation")) b.orientation = quat_from(j.at("orientation"));
    return b;
  }
  if (type == "plane") {
    reject_unknown(j, {"type", "point", "normal"}, "plane");
    return PlaneShape{vec_from(j.at("point")), vec_from(j.at("normal"))};
  }
  throw Error(ErrorCode::SchemaError, "unknown shape type \"" + type + "\"");
}

inline nlohmann::json shape_to_json(const Shape& shape) {
  return std::visit(
      [](const auto& s) -> nlohmann::json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          return {{"type", "sphere"}, {"center", vec_json(s.center)}, {"radius", s.radius}};
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          const auto& q = s.orientation;
          return {{"type", "box"},
                  {"center", vec_json(s.center)},
                  {"half_extents", vec_json(s.half_extents)},
                  {"orientation", {q.w(), q.x(), q.y(), q.z()}}};
        } else {
          return {{"type", "plane"}, {"point", vec_json(s.point)}, {"normal", vec_json(s.normal)}};
        }
      },
      shape);
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::schema_guard;
  Scenario sc;
  schema_guard("scenario", [&] {
    detail::reject_unknown(j, {"schema", "version", "session", "topology", "profile", "users", "objects", "gestures",
                               "grab_inputs", "description"},
                           "scenario");
    if (j.at("schema").get<std::string>() != kScenarioSchema) {
      throw Error(ErrorCode::SchemaError, "not a scenario document");
    }
    if (j.at("version").get<int>() != kScenarioVersion) {
      throw Error(ErrorCode::SchemaError, "scenario version " + j.at("version").dump() + " is not supported");
    }
  });

  if (j.contains("session")) {
    schema_guard("session", [&] {
      const auto& s = j.at("session");
      detail::reject_unknown(s, {"tick_rate_hz", "seed", "real_time", "allow_self_contact", "position_jitter_mm",
                                 "queue_capacity", "duration_s"},
                             "session");
      sc.session.tick_rate_hz = s.value("tick_rate_hz", sc.session.tick_rate_hz);
      sc.session.seed = s.value("seed", sc.session.seed);
      sc.session.real_time = s.value("real_time", sc.session.real_time);
      sc.session.allow_self_contact = s.value("allow_self_contact", sc.session.allow_self_contact);
      sc.session.position_jitter_mm = s.value("position_jitter_mm", sc.session.position_jitter_mm);
      sc.session.queue_capacity = s.value("queue_capacity", sc.session.queue_capacity);
      if (s.contains("duration_s")) sc.duration_s = s.at("duration_s").get<double>();
      validate(sc.session);
    });
  }
  if (j.contains("topology")) {
    sc.topology = schema_guard("topology", [&] { return topology_config_from_json(j.at("topology")); });
  }
  if (j.contains("profile")) {
    sc.profile = schema_guard("profile", [&] { return profile_from_json(j.at("profile")); });
  }

  const auto& users = j.at("users");
  if (!users.is_array() || users.empty()) throw Error(ErrorCode::SchemaError, "users must be a non-empty array");
  if (users.size() > kMaxUsers) throw Error(ErrorCode::SchemaError, "a scenario may hold at most 16 users");
  for (std::size_t i = 0; i < users.size(); ++i) {
    const std::string where = "users[" + std::to_string(i) + "]";
    sc.users.push_back(schema_guard(where, [&] {
      UserSpec u;
      detail::reject_unknown(users[i], {"limbs"}, where);
      const auto& limbs = users[i].at("limbs");
      for (LimbSide side : {LimbSide::Left, LimbSide::Right}) {
        const auto& l = limbs.at(std::string(to_string(side)));
        detail::reject_unknown(l, {"position", "orientation", "endpoint"}, where + "." + std::string(to_string(side)));
        auto& p = u.limbs[static_cast<std::size_t>(side)];
        p.pose.position = detail::vec_from(l.at("position"));
        if (l.contains("orientation")) p.pose.orientation = detail::quat_from(l.at("orientation"));
        if (l.contains("endpoint")) p.binding = detail::binding_from(l.at("endpoint"));
      }
      return u;
    }));
  }

  if (j.contains("objects")) {
    const auto& objects = j.at("objects");
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const std::string where = "objects[" + std::to_string(i) + "]";
      sc.objects.push_back(schema_guard(where, [&] {
        const auto& o = objects[i];
        detail::reject_unknown(o, {"shape", "stiffness", "grabbable", "name"}, where);
        ObjectSpec spec{detail::shape_from(o.at("shape")), o.value("stiffness", 1.0), o.value("grabbable", false)};
        validate_shape(spec.shape);
        max_penetration_for_stiffness(spec.stiffness);
        return spec;
      }));
    }
  }

  if (j.contains("gestures")) {
    const auto& gestures = j.at("gestures");
    for (std::size_t i = 0; i < gestures.size(); ++i) {
      const std::string where = "gestures[" + std::to_string(i) + "]";
      sc.gestures.push_back(schema_guard(where, [&] {
        const auto& g = gestures[i];
        detail::reject_unknown(g,
                               {"kind", "speed", "rate", "actor", "target", "start_time_s", "repetitions", "station",
                                "path_start", "path_end", "contact_point", "approach_axis", "closure"},
                               where);
        GestureSpec spec;
        spec.kind = gesture_kind_from_string(g.at("kind").get<std::string>());
        spec.speed = speed_class_from_string(g.value("speed", std::string("M")));
        if (g.contains("rate")) spec.params.rate = g.at("rate").get<double>();
        spec.actor.user = g.at("actor").at("user").get<std::uint16_t>();
        spec.actor.limb = limb_side_from_string(g.at("actor").at("limb").get<std::string>());
        const auto& t = g.at("target");
        if (t.contains("object")) {
          spec.target.is_object = true;
          spec.target.object_id = t.at("object").get<std::uint32_t>();
        } else {
          spec.target.user = t.at("user").get<std::uint16_t>();
          spec.target.limb = limb_side_from_string(t.at("limb").get<std::string>());
          spec.target.region = region_from_string(t.value("region", std::string("forearm_dorsal")));
        }
        if (g.contains("start_time_s")) {
          spec.auto_start = false;
          spec.params.start_time_s = g.at("start_time_s").get<double>();
        }
        spec.params.repetitions = g.value("repetitions", 3);
        spec.params.station = g.value("station", 2);
        if (g.contains("path_start")) spec.params.path_start = detail::vec_from(g.at("path_start"));
        if (g.contains("path_end")) spec.params.path_end = detail::vec_from(g.at("path_end"));
        if (g.contains("contact_point")) spec.params.contact_point = detail::vec_from(g.at("contact_point"));
        if (g.contains("approach_axis")) spec.params.approach_axis = detail::vec_from(g.at("approach_axis"));
        if (g.contains("closure")) {
          for (const auto& pair : g.at("closure")) {
            spec.params.closure.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
          }
        }
        if (spec.actor.user >= sc.users.size()) throw Error(ErrorCode::SchemaError, "actor user does not exist");
        if (spec.target.is_object ? spec.target.object_id >= sc.objects.size() : spec.target.user >= sc.users.size()) {
          throw Error(ErrorCode::SchemaError, "gesture target does not exist");
        }
        return spec;
      }));
    }
  }

  if (j.contains("grab_inputs")) {
    for (const auto& g : j.at("grab_inputs")) {
      sc.grab_inputs.push_back(schema_guard("grab_inputs", [&] {
        GrabInputSpec spec;
        spec.tick = g.at("tick").get<std::uint64_t>();
        spec.input.key.user = g.at("user").get<std::uint16_t>();
        spec.input.key.limb = limb_side_from_string(g.at("limb").get<std::string>());
        spec.input.key.object_id = g.at("object").get<std::uint32_t>();
        spec.input.grab = g.value("grab", true);
        if (spec.input.key.user >= sc.users.size() || spec.input.key.object_id >= sc.objects.size()) {
          throw Error(ErrorCode::SchemaError, "grab input references a missing user or object");
        }
        return spec;
      }));
    }
  }
  return sc;
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["schema"] = kScenarioSchema;
  j["version"] = kScenarioVersion;
  j["session"] = {{"tick_rate_hz", sc.session.tick_rate_hz},
                  {"seed", sc.session.seed},
                  {"real_time", sc.session.real_time},
                  {"allow_self_contact", sc.session.allow_self_contact},
                  {"position_jitter_mm", sc.session.position_jitter_mm},
                  {"queue_capacity", sc.session.queue_capacity}};
  if (sc.duration_s) j["session"]["duration_s"] = *sc.duration_s;
  j["topology"] = sc.topology;
  j["profile"] = profile_to_json(sc.profile);
  j["users"] = nlohmann::json::array();
  for (const auto& u : sc.users) {
    nlohmann::json limbs;
    for (LimbSide side : {LimbSide::Left, LimbSide::Right}) {
      const auto& p = u.limbs[static_cast<std::size_t>(side)];
      const auto& q = p.pose.orientation;
      limbs[std::string(to_string(side))] = {{"position", detail::vec_json(p.pose.position)},
                                             {"orientation", {q.w(), q.x(), q.y(), q.z()}},
                                             {"endpoint", detail::binding_text(p.binding)}};
    }
    j["users"].push_back({{"limbs", limbs}});
  }
  j["objects"] = nlohmann::json::array();
  for (const auto& o : sc.objects) {
    j["objects"].push_back({{"shape", detail::shape_to_json(o.shape)}, {"stiffness", o.stiffness}, {"grabbable", o.grabbable}});
  }
  j["gestures"] = nlohmann::json::array();
  for (const auto& g : sc.gestures) {
    nlohmann::json e{{"kind", to_string(g.kind)},
                     {"speed", to_string(g.speed)},
                     {"actor", {{"user", g.actor.user}, {"limb", to_string(g.actor.limb)}}},
                     {"repetitions", g.params.repetitions},
                     {"station", g.params.station}};
    if (g.params.rate) e["rate"] = *g.params.rate;
    if (g.target.is_object) {
      e["target"] = {{"object", g.target.object_id}};
    } else {
      e["target"] = {{"user", g.target.user}, {"limb", to_string(g.target.limb)}, {"region", to_string(g.target.region)}};
    }
    if (!g.auto_start) e["start_time_s"] = g.params.start_time_s;
    if (g.params.path_start) e["path_start"] = detail::vec_json(*g.params.path_start);
    if (g.params.path_end) e["path_end"] = detail::vec_json(*g.params.path_end);
    if (g.params.contact_point) e["contact_point"] = detail::vec_json(*g.params.contact_point);
    if (g.params.approach_axis) e["approach_axis"] = detail::vec_json(*g.params.approach_axis);
    if (!g.params.closure.empty()) e["closure"] = g.params.closure;
    j["gestures"].push_back(e);
  }
  j["grab_inputs"] = nlohmann::json::array();
  for (const auto& g : sc.grab_inputs) {
    j["grab_inputs"].push_back({{"tick", g.tick},
                                {"user", g.input.key.user},
                                {"limb", to_string(g.input.key.limb)},
                                {"object", g.input.key.object_id},
                                {"grab", g.input.grab}});
  }
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SchemaError, "cannot open scenario \"" + path + "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, "scenario \"" + path + "\" is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

// Joins users, attaches objects and resolves gesture scripts in order.
inline Session make_session(const Scenario& sc) {
  Session session(sc.session, sc.profile);
  for (const auto& u : sc.users) {
    const auto& l = u.limbs[static_cast<std::size_t>(LimbSide::Left)];
    const auto& r = u.limbs[static_cast<std::size_t>(LimbSide::Right)];
    session.join(build_limb_topology(LimbSide::Left, sc.topology, l.pose),
                 build_limb_topology(LimbSide::Right, sc.topology, r.pose), {l.binding, r.binding});
  }
  for (const auto& o : sc.objects) session.attach_object(o.shape, o.stiffness, o.grabbable);

  double previous_end = 0.0;
  for (const auto& g : sc.gestures) {
    GestureParams params = g.params;
    if (g.auto_start) params.start_time_s = previous_end + kGestureGapS;
    GestureGeometry geo;
    geo.actor_limb = &session.users().at(g.actor.user).limb(g.actor.limb);
    if (g.target.is_object) {
      geo.target_object = &session.objects().at(g.target.object_id);
    } else {
      geo.target_limb = &session.users().at(g.target.user).limb(g.target.limb);
    }
    auto script = build_script(g.kind, g.speed, g.actor, g.target, params, geo);
    previous_end = script.end_time_s();
    session.add_gesture(std::move(script));
  }
  for (const auto& g : sc.grab_inputs) session.add_grab_input(g.tick, g.input);
  return session;
}

// Ticks to cover every gesture plus a trailing gap, unless a duration is set.
inline std::uint64_t default_ticks(const Scenario& sc, const Session& session) {
  double seconds = sc.duration_s.value_or(0.0);
  if (!sc.duration_s) {
    for (const auto& g : session.gestures()) seconds = std::max(seconds, g.end_time_s() + kGestureGapS);
    if (seconds == 0.0) seconds = 1.0;
  }
  return static_cast<std::uint64_t>(std::llround(seconds * sc.session.tick_rate_hz));
}

}  // namespace hapticmesh
