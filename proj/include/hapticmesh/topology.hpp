#pragma once

// Per-limb actuator/sphere layout: 14 hand slots and 12 forearm slots.
//
// Limb frame: origin at the wrist, +X distal (wrist to fingertips), +Z dorsal.
// The frame is right-handed for both sides; +Y points radially (thumb side)
// on the right limb, so the left limb is the right limb reflected in y.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"

namespace hapticmesh {

inline constexpr int kSlotsPerLimb = 26;
inline constexpr int kLimbsPerUser = 2;
inline constexpr int kHandSlots = 14;
inline constexpr int kForearmSlots = 12;

enum class LimbSide : std::uint8_t { Left = 0, Right = 1 };

constexpr std::string_view to_string(LimbSide side) {
  return side == LimbSide::Left ? "left" : "right";
}

inline LimbSide limb_side_from_string(std::string_view s) {
  if (s == "left") return LimbSide::Left;
  if (s == "right") return LimbSide::Right;
  throw Error(ErrorCode::SchemaError, "limb must be \"left\" or \"right\", got \"" + std::string(s) + "\"");
}

enum class Region : std::uint8_t { HandFinger, HandPalm, ForearmDorsal, ForearmVolar };

constexpr std::string_view to_string(Region region) {
  switch (region) {
    case Region::HandFinger: return "hand_finger";
    case Region::HandPalm: return "hand_palm";
    case Region::ForearmDorsal: return "forearm_dorsal";
    case Region::ForearmVolar: return "forearm_volar";
  }
  return "unknown";
}

inline Region region_from_string(std::string_view s) {
  for (Region r : {Region::HandFinger, Region::HandPalm, Region::ForearmDorsal, Region::ForearmVolar}) {
    if (s == to_string(r)) return r;
  }
  throw Error(ErrorCode::SchemaError, "unknown region \"" + std::string(s) + "\"");
}

constexpr bool is_hand(Region region) {
  return region == Region::HandFinger || region == Region::HandPalm;
}

// Slot id layout. Fingers are thumb..pinky, two slots each (tip, proximal).
namespace slots {
inline constexpr int kThumbTip = 0;
inline constexpr int kThumbProximal = 1;
inline constexpr int kIndexTip = 2;
inline constexpr int kMiddleTip = 4;
inline constexpr int kRingTip = 6;
inline constexpr int kFirstPalm = 10;
inline constexpr int kFirstDorsal = 14;
inline constexpr int kFirstVolar = 20;
inline constexpr int kRowLength = 6;

constexpr bool is_thumb(int id) { return id == kThumbTip || id == kThumbProximal; }
constexpr bool is_finger(int id) { return id >= 0 && id < kFirstPalm; }
constexpr int tip_of_finger(int finger) { return 2 * finger; }
}  // namespace slots

inline void check_slot_id(int slot_id) {
  if (slot_id < 0 || slot_id >= kSlotsPerLimb) {
    throw Error(ErrorCode::OutOfRange, "slot id " + std::to_string(slot_id) + " outside 0..25");
  }
}

constexpr Region region_of_slot(int slot_id) {
  if (slot_id < slots::kFirstPalm) return Region::HandFinger;
  if (slot_id < slots::kFirstDorsal) return Region::HandPalm;
  if (slot_id < slots::kFirstVolar) return Region::ForearmDorsal;
  return Region::ForearmVolar;
}

// Spheres map one-to-one onto actuators; the mapping is the identity.
inline int actuator_for_sphere(int slot_id) {
  check_slot_id(slot_id);
  return slot_id;
}

struct ActuatorSlot {
  int id = 0;
  Region region = Region::HandFinger;
  Vec3 local_position = Vec3::Zero();  // meters, limb frame
  double sphere_radius = 0.0;          // meters
};

// Parametric hand/forearm dimensions. All lengths are millimetres in JSON.
struct TopologyConfig {
  double finger_radius_mm = 8.0;
  double forearm_radius_mm = 20.0;
  double forearm_span_mm = 140.0;
  double forearm_offset_mm = 40.0;  // wrist to the first forearm actuator
  double forearm_half_thickness_mm = 30.0;
  double palm_length_mm = 90.0;  // wrist to the metacarpophalangeal line
  double palm_width_mm = 72.0;
  double palm_half_thickness_mm = 12.0;
  double palm_clearance_mm = 20.0;  // keep-out radius around the palm centre
  std::array<double, 5> finger_length_mm = {60.0, 75.0, 80.0, 75.0, 60.0};
  double proximal_offset_mm = 35.0;  // MCP to the proximal-phalanx actuator
  double tip_inset_mm = 8.0;
  double thumb_base_x_mm = 25.0;
};

inline void to_json(nlohmann::json& j, const TopologyConfig& c) {
  j = nlohmann::json{{"finger_radius_mm", c.finger_radius_mm},
                     {"forearm_radius_mm", c.forearm_radius_mm},
                     {"forearm_span_mm", c.forearm_span_mm},
                     {"forearm_offset_mm", c.forearm_offset_mm},
                     {"forearm_half_thickness_mm", c.forearm_half_thickness_mm},
                     {"palm_length_mm", c.palm_length_mm},
                     {"palm_width_mm", c.palm_width_mm},
                     {"palm_half_thickness_mm", c.palm_half_thickness_mm},
                     {"palm_clearance_mm", c.palm_clearance_mm},
                     {"finger_length_mm", c.finger_length_mm},
                     {"proximal_offset_mm", c.proximal_offset_mm},
                     {"tip_inset_mm", c.tip_inset_mm},
                     {"thumb_base_x_mm", c.thumb_base_x_mm}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline TopologyConfig topology_config_from_json(const nlohmann::json& j) {
  TopologyConfig c;
  if (!j.is_object()) throw Error(ErrorCode::SchemaError, "topology config must be an object");
  auto number = [&](const char* key, double& out) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw Error(ErrorCode::SchemaError, std::string("topology.") + key + " must be a number");
      out = it->get<double>();
    }
  };
  static constexpr std::array<const char*, 13> kKeys = {
      "finger_radius_mm", "forearm_radius_mm", "forearm_span_mm", "forearm_offset_mm",
      "forearm_half_thickness_mm", "palm_length_mm", "palm_width_mm", "palm_half_thickness_mm",
      "palm_clearance_mm", "finger_length_mm", "proximal_offset_mm", "tip_inset_mm", "thumb_base_x_mm"};
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw Error(ErrorCode::SchemaError, "unknown topology key \"" + key + "\"");
  }
  number("finger_radius_mm", c.finger_radius_mm);
  number("forearm_radius_mm", c.forearm_radius_mm);
  number("forearm_span_mm", c.forearm_span_mm);
  number("forearm_offset_mm", c.forearm_offset_mm);
  number("forearm_half_thickness_mm", c.forearm_half_thickness_mm);
  number("palm_length_mm", c.palm_length_mm);
  number("palm_width_mm", c.palm_width_mm);
  number("palm_half_thickness_mm", c.palm_half_thickness_mm);
  number("palm_clearance_mm", c.palm_clearance_mm);
  number("proximal_offset_mm", c.proximal_offset_mm);
  number("tip_inset_mm", c.tip_inset_mm);
  number("thumb_base_x_mm", c.thumb_base_x_mm);
  if (auto it = j.find("finger_length_mm"); it != j.end()) {
    if (!it->is_array() || it->size() != 5) {
      throw Error(ErrorCode::SchemaError, "topology.finger_length_mm must be an array of 5 numbers");
    }
    for (std::size_t i = 0; i < 5; ++i) c.finger_length_mm[i] = (*it)[i].get<double>();
  }
  return c;
}

struct LimbTopology {
  LimbSide side = LimbSide::Right;
  Pose limb_frame_pose;
  std::array<ActuatorSlot, kSlotsPerLimb> slots;

  [[nodiscard]] Vec3 world_position(int slot_id) const {
    return limb_frame_pose.apply(slots.at(static_cast<std::size_t>(slot_id)).local_position);
  }
  // Outward skin normal of a forearm row, in the world frame.
  [[nodiscard]] Vec3 row_outward_normal(Region row) const {
    return limb_frame_pose.rotate(row == Region::ForearmVolar ? Vec3(0, 0, -1) : Vec3(0, 0, 1));
  }
};

namespace detail {

inline void validate(const TopologyConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be positive");
    }
  };
  positive(c.finger_radius_mm, "finger_radius_mm");
  positive(c.forearm_radius_mm, "forearm_radius_mm");
  positive(c.forearm_span_mm, "forearm_span_mm");
  positive(c.forearm_offset_mm, "forearm_offset_mm");
  positive(c.forearm_half_thickness_mm, "forearm_half_thickness_mm");
  positive(c.palm_length_mm, "palm_length_mm");
  positive(c.palm_width_mm, "palm_width_mm");
  positive(c.palm_half_thickness_mm, "palm_half_thickness_mm");
  positive(c.proximal_offset_mm, "proximal_offset_mm");
  positive(c.tip_inset_mm, "tip_inset_mm");
  positive(c.thumb_base_x_mm, "thumb_base_x_mm");
  if (c.palm_clearance_mm < 0.0) throw Error(ErrorCode::InvalidConfig, "palm_clearance_mm must be >= 0");
  for (double len : c.finger_length_mm) {
    if (!(len - c.tip_inset_mm > std::min(c.proximal_offset_mm, 0.5 * len))) {
      throw Error(ErrorCode::InvalidConfig, "finger length too short for its two actuators");
    }
  }
  if (!(c.finger_radius_mm < c.forearm_radius_mm)) {
    throw Error(ErrorCode::InvalidConfig, "finger/palm sphere radius must be smaller than forearm radius");
  }
}

}  // namespace detail

inline LimbTopology build_limb_topology(LimbSide side, const TopologyConfig& config, const Pose& pose = {}) {
  detail::validate(config);
  constexpr double mm = 1e-3;
  const double finger_r = config.finger_radius_mm * mm;
  const double forearm_r = config.forearm_radius_mm * mm;
  const double palm_len = config.palm_length_mm * mm;
  const double column = config.palm_width_mm * mm / 4.0;
  const double palm_z = -config.palm_half_thickness_mm * mm;
  const double inset = config.tip_inset_mm * mm;

  LimbTopology limb;
  limb.side = side;
  limb.limb_frame_pose = pose;
  auto put = [&](int id, Region region, Vec3 p, double radius) {
    limb.slots[static_cast<std::size_t>(id)] = ActuatorSlot{id, region, p, radius};
  };

  // Thumb: from the carpometacarpal joint, angled 45 degrees radially.
  {
    const Vec3 base(config.thumb_base_x_mm * mm, config.palm_width_mm * mm / 2.0, 0.0);
    const Vec3 dir = Vec3(1.0, 1.0, 0.0).normalized();
    const double len = config.finger_length_mm[0] * mm;
    put(slots::kThumbTip, Region::HandFinger, base + dir * (len - inset), finger_r);
    put(slots::kThumbProximal, Region::HandFinger, base + dir * (0.45 * len), finger_r);
  }
  // Index..pinky columns from radial to ulnar.
  for (int finger = 1; finger <= 4; ++finger) {
    const double y = (2.5 - finger) * column;
    const double len = config.finger_length_mm[static_cast<std::size_t>(finger)] * mm;
    const double proximal = std::min(config.proximal_offset_mm * mm, 0.5 * len);
    put(slots::tip_of_finger(finger), Region::HandFinger, Vec3(palm_len + len - inset, y, 0.0), finger_r);
    put(slots::tip_of_finger(finger) + 1, Region::HandFinger, Vec3(palm_len + proximal, y, 0.0), finger_r);
  }
  // Palm: below index and pinky MCPs, near the thumb CMC, just above the wrist.
  {
    const double below_mcp = palm_len - 15.0 * mm;
    put(10, Region::HandPalm, Vec3(below_mcp, 1.5 * column, palm_z), finger_r);
    put(11, Region::HandPalm, Vec3(below_mcp, -1.5 * column, palm_z), finger_r);
    put(12, Region::HandPalm, Vec3(config.thumb_base_x_mm * mm, column, palm_z), finger_r);
    put(13, Region::HandPalm, Vec3(10.0 * mm, -0.5 * column, palm_z), finger_r);
  }
  // Forearm rows, index 0 nearest the wrist.
  const double spacing = config.forearm_span_mm * mm / (slots::kRowLength - 1);
  const double half_thick = config.forearm_half_thickness_mm * mm;
  for (int i = 0; i < slots::kRowLength; ++i) {
    const double x = -config.forearm_offset_mm * mm - i * spacing;
    put(slots::kFirstDorsal + i, Region::ForearmDorsal, Vec3(x, 0.0, half_thick), forearm_r);
    put(slots::kFirstVolar + i, Region::ForearmVolar, Vec3(x, 0.0, -half_thick), forearm_r);
  }

  const Vec3 palm_centroid(palm_len / 2.0, 0.0, palm_z);
  for (const auto& s : limb.slots) {
    if (is_hand(s.region) && (s.local_position - palm_centroid).norm() < config.palm_clearance_mm * mm) {
      throw Error(ErrorCode::InvalidConfig, "slot " + std::to_string(s.id) + " falls inside the palm-centre keep-out");
    }
  }
  for (std::size_t a = 0; a < limb.slots.size(); ++a) {
    for (std::size_t b = a + 1; b < limb.slots.size(); ++b) {
      if ((limb.slots[a].local_position - limb.slots[b].local_position).norm() < 1e-9) {
        throw Error(ErrorCode::InvalidConfig, "slot positions must be distinct");
      }
    }
  }

  if (side == LimbSide::Left) {
    for (auto& s : limb.slots) s.local_position.y() = -s.local_position.y();
  }
  return limb;
}

}  // namespace hapticmesh
