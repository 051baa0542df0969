#pragma once

// Contact detection over sphere colliders and the per-pair contact state
// machine that turns geometric overlap into collision events.
//
// S_p is the depth a sphere has travelled past first surface contact, D is
// the maximum penetrable distance of the pair, and PDI = D - S_p.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/topology.hpp"

namespace hapticmesh {

struct SphereShape {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct BoxShape {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();
  Quat orientation = Quat::Identity();
};

// Half-space bounded by a plane; the normal points out of the solid side.
struct PlaneShape {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

using Shape = std::variant<SphereShape, BoxShape, PlaneShape>;

inline constexpr double kReferencePenetration = 0.010;  // D at stiffness 1
inline constexpr double kMinPenetration = 0.001;
inline constexpr double kMaxPenetration = 0.030;

// Stiffer objects give way less before reaching full drive.
inline double max_penetration_for_stiffness(double stiffness) {
  if (!(stiffness > 0.0) || !std::isfinite(stiffness)) {
    throw Error(ErrorCode::InvalidShape, "stiffness must be positive");
  }
  return std::clamp(kReferencePenetration / stiffness, kMinPenetration, kMaxPenetration);
}

inline void validate_shape(const Shape& shape) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SphereShape>) {
          if (!(s.radius > 0.0)) throw Error(ErrorCode::InvalidShape, "sphere radius must be positive");
        } else if constexpr (std::is_same_v<T, BoxShape>) {
          if (!(s.half_extents.minCoeff() > 0.0)) {
            throw Error(ErrorCode::InvalidShape, "box half-extents must be positive");
          }
          if (std::abs(s.orientation.norm() - 1.0) > 1e-6) {
            throw Error(ErrorCode::InvalidShape, "box orientation must be a unit quaternion");
          }
        } else {
          if (!(s.normal.norm() > 0.0)) throw Error(ErrorCode::InvalidShape, "plane normal must be non-zero");
        }
      },
      shape);
}

struct WorldObject {
  std::uint32_t id = 0;
  Shape shape;
  double stiffness = 1.0;
  bool grabbable = false;
  double max_penetration = kReferencePenetration;
};

inline WorldObject make_world_object(std::uint32_t id, Shape shape, double stiffness, bool grabbable) {
  validate_shape(shape);
  if (auto* plane = std::get_if<PlaneShape>(&shape)) plane->normal.normalize();
  if (auto* box = std::get_if<BoxShape>(&shape)) box->orientation.normalize();
  WorldObject obj;
  obj.id = id;
  obj.shape = std::move(shape);
  obj.stiffness = stiffness;
  obj.grabbable = grabbable;
  obj.max_penetration = max_penetration_for_stiffness(stiffness);
  return obj;
}

struct RawContact {
  double penetration = 0.0;      // S_p, clamped to [0, D]
  double max_penetration = 0.0;  // D
  Vec3 normal = Vec3::UnitZ();   // from the counterpart surface toward the sphere centre
  bool degenerate_normal = false;
};

namespace detail {

// Signed distance from `p` to the shape surface (negative inside) and the
// outward surface normal at the closest point.
struct SurfaceQuery {
  double signed_distance;
  Vec3 normal;
  bool degenerate;
};

inline SurfaceQuery query_surface(const Vec3& p, const SphereShape& s) {
  const Vec3 d = p - s.center;
  const double len = d.norm();
  if (len == 0.0) return {-s.radius, Vec3::UnitZ(), true};
  return {len - s.radius, d / len, false};
}

inline SurfaceQuery query_surface(const Vec3& p, const PlaneShape& s) {
  return {(p - s.point).dot(s.normal), s.normal, false};
}

inline SurfaceQuery query_surface(const Vec3& p, const BoxShape& b) {
  const Vec3 local = b.orientation.conjugate() * (p - b.center);
  const Vec3 clamped = local.cwiseMax(-b.half_extents).cwiseMin(b.half_extents);
  const Vec3 outside = local - clamped;
  const double out_len = outside.norm();
  if (out_len > 0.0) return {out_len, b.orientation * (outside / out_len), false};
  // Inside: exit through the nearest face.
  int axis = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double gap = b.half_extents[i] - std::abs(local[i]);
    if (gap < best) {
      best = gap;
      axis = i;
    }
  }
  Vec3 n = Vec3::Zero();
  n[axis] = local[axis] < 0.0 ? -1.0 : 1.0;
  return {-best, b.orientation * n, false};
}

}  // namespace detail

// None iff the sphere surface is strictly separated from the object surface.
inline std::optional<RawContact> sphere_vs_object(const SphereShape& sphere, const WorldObject& object) {
  const auto q = std::visit([&](const auto& s) { return detail::query_surface(sphere.center, s); }, object.shape);
  const double gap = q.signed_distance - sphere.radius;
  if (gap > 0.0) return std::nullopt;
  RawContact c;
  c.max_penetration = object.max_penetration;
  c.penetration = std::clamp(-gap, 0.0, c.max_penetration);
  c.normal = q.normal;
  c.degenerate_normal = q.degenerate;
  return c;
}

// Tangent spheres count as touching (S_p = 0). D is the smaller diameter.
inline std::optional<RawContact> sphere_vs_sphere(const SphereShape& a, const SphereShape& b) {
  const Vec3 d = a.center - b.center;
  const double dist = d.norm();
  const double reach = a.radius + b.radius;
  if (dist > reach) return std::nullopt;
  RawContact c;
  c.max_penetration = 2.0 * std::min(a.radius, b.radius);
  c.penetration = std::clamp(reach - dist, 0.0, c.max_penetration);
  if (dist > 0.0) {
    c.normal = d / dist;
  } else {
    c.degenerate_normal = true;
  }
  return c;
}

// Identifies one actuator sphere across the whole session.
struct ActuatorRef {
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Right;
  std::uint8_t slot = 0;

  auto operator<=>(const ActuatorRef&) const = default;
};

struct Counterpart {
  enum class Kind : std::uint8_t { Object = 0, AvatarSphere = 1 };
  Kind kind = Kind::Object;
  std::uint32_t object_id = 0;
  ActuatorRef sphere;

  static Counterpart object(std::uint32_t id) { return {Kind::Object, id, {}}; }
  static Counterpart avatar(ActuatorRef ref) { return {Kind::AvatarSphere, 0, ref}; }

  [[nodiscard]] bool is_avatar() const { return kind == Kind::AvatarSphere; }

  // Objects take their id; avatar spheres are packed above 65535.
  [[nodiscard]] std::uint32_t code() const {
    if (kind == Kind::Object) return object_id;
    return 65536u + 64u * sphere.user + 32u * static_cast<std::uint32_t>(sphere.limb) + sphere.slot;
  }

  static Counterpart from_code(std::uint32_t code) {
    if (code < 65536u) return object(code);
    const std::uint32_t v = code - 65536u;
    return avatar({static_cast<std::uint16_t>(v / 64u), static_cast<LimbSide>((v / 32u) % 2u),
                   static_cast<std::uint8_t>(v % 32u)});
  }

  auto operator<=>(const Counterpart&) const = default;
};

struct ContactKey {
  ActuatorRef actuator;
  Counterpart counterpart;

  auto operator<=>(const ContactKey&) const = default;
};

struct PairState {
  bool in_contact = true;
  int ticks_in_contact = 0;
  bool grab_active = false;
  Vec3 last_normal = Vec3::UnitZ();
};

struct GrabKey {
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Right;
  std::uint32_t object_id = 0;

  auto operator<=>(const GrabKey&) const = default;
};

// Explicit grab/release injected by a scenario, independent of detection.
struct GrabInput {
  GrabKey key;
  bool grab = true;
};

inline constexpr int kGrabSustainTicks = 3;
inline constexpr double kGrabOpposingDot = -0.3;

struct ContactState {
  std::map<ContactKey, PairState> pairs;
  std::map<GrabKey, int> grab_streaks;
  std::set<GrabKey> forced_grabs;
};

struct RawContactRecord {
  ContactKey key;
  RawContact contact;
  bool grabbable = false;  // counterpart is a grabbable object
};

struct CollisionEvent {
  ActuatorRef actuator;
  Counterpart counterpart;
  double penetration = 0.0;      // S_p
  double max_penetration = 0.0;  // D
  double pdi = 0.0;
  Vec3 normal = Vec3::UnitZ();
  bool onset = false;
  bool grabbed = false;

  [[nodiscard]] int actuator_id() const { return actuator.slot; }
  [[nodiscard]] double drive_fraction() const { return 1.0 - pdi / max_penetration; }
};

struct ContactStep {
  ContactState next;
  std::vector<CollisionEvent> events;   // ordered by ContactKey
  std::vector<ContactKey> released;     // pairs in contact last tick but not this one
};

namespace detail {

// Thumb plus at least two other fingers pressing from the opposite side.
inline bool opposing_grasp(const std::vector<std::pair<int, Vec3>>& finger_contacts) {
  for (const auto& [thumb_slot, thumb_n] : finger_contacts) {
    if (!slots::is_thumb(thumb_slot)) continue;
    std::set<int> opposing;
    for (const auto& [slot, n] : finger_contacts) {
      if (slots::is_thumb(slot)) continue;
      if (thumb_n.dot(n) < kGrabOpposingDot) opposing.insert(slot);
    }
    if (opposing.size() >= 2) return true;
  }
  return false;
}

}  // namespace detail

inline ContactStep step_contact_state(const ContactState& prev, std::span<const RawContactRecord> raw_contacts,
                                      std::span<const GrabInput> grab_inputs = {}) {
  ContactStep out;
  out.next.forced_grabs = prev.forced_grabs;
  for (const auto& g : grab_inputs) {
    if (g.grab) {
      out.next.forced_grabs.insert(g.key);
    } else {
      out.next.forced_grabs.erase(g.key);
    }
  }

  // Sort by key so event order never depends on detection order.
  std::vector<const RawContactRecord*> sorted;
  sorted.reserve(raw_contacts.size());
  for (const auto& r : raw_contacts) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->key < b->key; });

  std::map<GrabKey, std::vector<std::pair<int, Vec3>>> grasp_candidates;
  for (const RawContactRecord* r : sorted) {
    auto [it, inserted] = out.next.pairs.try_emplace(r->key);
    if (!inserted) continue;  // duplicate record for one pair; first wins
    PairState& st = it->second;
    const auto before = prev.pairs.find(r->key);
    Vec3 normal = r->contact.normal;
    if (r->contact.degenerate_normal) {
      normal = before != prev.pairs.end() ? before->second.last_normal : Vec3::UnitZ();
    }
    st.in_contact = true;
    st.ticks_in_contact = before != prev.pairs.end() ? before->second.ticks_in_contact + 1 : 1;
    st.last_normal = normal;
    if (r->grabbable && slots::is_finger(r->key.actuator.slot)) {
      const GrabKey gk{r->key.actuator.user, r->key.actuator.limb, r->key.counterpart.object_id};
      grasp_candidates[gk].emplace_back(r->key.actuator.slot, normal);
    }
  }

  for (const auto& [gk, contacts] : grasp_candidates) {
    if (!detail::opposing_grasp(contacts)) continue;
    const auto p = prev.grab_streaks.find(gk);
    out.next.grab_streaks[gk] = (p != prev.grab_streaks.end() ? p->second : 0) + 1;
  }

  auto grab_active = [&](const ContactKey& key) {
    if (key.counterpart.kind != Counterpart::Kind::Object) return false;
    const GrabKey gk{key.actuator.user, key.actuator.limb, key.counterpart.object_id};
    if (out.next.forced_grabs.contains(gk)) return true;
    const auto s = out.next.grab_streaks.find(gk);
    return s != out.next.grab_streaks.end() && s->second >= kGrabSustainTicks;
  };

  out.events.reserve(out.next.pairs.size());
  for (const RawContactRecord* r : sorted) {
    auto& st = out.next.pairs.at(r->key);
    if (!out.events.empty() && out.events.back().actuator == r->key.actuator &&
        out.events.back().counterpart == r->key.counterpart) {
      continue;
    }
    st.grab_active = grab_active(r->key);
    CollisionEvent e;
    e.actuator = r->key.actuator;
    e.counterpart = r->key.counterpart;
    e.max_penetration = r->contact.max_penetration;
    e.penetration = r->contact.penetration;
    e.normal = st.last_normal;
    e.onset = st.ticks_in_contact == 1;
    e.pdi = e.onset ? 0.0 : std::clamp(e.max_penetration - e.penetration, 0.0, e.max_penetration);
    e.grabbed = st.grab_active;
    out.events.push_back(e);
  }

  for (const auto& [key, _] : prev.pairs) {
    if (!out.next.pairs.contains(key)) out.released.push_back(key);
  }
  return out;
}

// Keeps the strongest event per actuator. Onset survives the merge.
inline std::vector<CollisionEvent> dedup_per_actuator(std::span<const CollisionEvent> events) {
  std::map<ActuatorRef, CollisionEvent> best;
  std::set<ActuatorRef> any_onset;
  for (const auto& e : events) {
    if (e.onset) any_onset.insert(e.actuator);
    auto [it, inserted] = best.try_emplace(e.actuator, e);
    if (inserted) continue;
    const double f_new = e.drive_fraction();
    const double f_cur = it->second.drive_fraction();
    if (f_new > f_cur || (f_new == f_cur && e.counterpart < it->second.counterpart)) it->second = e;
  }
  std::vector<CollisionEvent> out;
  out.reserve(best.size());
  for (auto& [ref, e] : best) {
    if (any_onset.contains(ref)) {
      e.onset = true;
      e.pdi = 0.0;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace hapticmesh
