#include <gtest/gtest.h>

#include <random>

#include "hapticmesh/collision.hpp"
#include "support.hpp"

using namespace hapticmesh;

namespace {

// Face-by-face reference for a box: signed distance from p to the surface.
double box_signed_distance_oracle(const BoxShape& b, const Vec3& p) {
  const Eigen::Matrix3d R = b.orientation.toRotationMatrix();
  const Vec3 local = R.transpose() * (p - b.center);
  const Vec3& h = b.half_extents;
  bool inside = true;
  for (int i = 0; i < 3; ++i) inside = inside && std::abs(local[i]) <= h[i];
  double best = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    for (double side : {-1.0, 1.0}) {
      Vec3 q = local;
      q[axis] = side * h[axis];
      for (int k = 0; k < 3; ++k) {
        if (k != axis) q[k] = std::clamp(q[k], -h[k], h[k]);
      }
      best = std::min(best, (local - q).norm());
    }
  }
  return inside ? -best : best;
}

RawContactRecord object_record(std::uint8_t slot, std::uint32_t object, double s_p, double d, Vec3 n,
                               bool grabbable = false) {
  RawContactRecord r;
  r.key.actuator = {0, LimbSide::Right, slot};
  r.key.counterpart = Counterpart::object(object);
  r.contact.penetration = s_p;
  r.contact.max_penetration = d;
  r.contact.normal = n;
  r.grabbable = grabbable;
  return r;
}

}  // namespace

TEST(Stiffness, DerivedMaxPenetration) {
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(1.0), 0.010);
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(2.0), 0.005);
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(0.5), 0.020);
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(4.0), 0.0025);
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(0.1), 0.030);
  EXPECT_DOUBLE_EQ(max_penetration_for_stiffness(20.0), 0.001);
  EXPECT_THROW(max_penetration_for_stiffness(0.0), Error);
  EXPECT_THROW(max_penetration_for_stiffness(-1.0), Error);
}

TEST(Stiffness, StifferMeansShallower) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> s(0.01, 50.0);
  for (int i = 0; i < 1000; ++i) {
    double a = s(rng), b = s(rng);
    if (a > b) std::swap(a, b);
    EXPECT_GE(max_penetration_for_stiffness(a), max_penetration_for_stiffness(b));
  }
}

TEST(Shapes, Validation) {
  EXPECT_THROW(make_world_object(0, SphereShape{Vec3::Zero(), 0.0}, 1.0, false), Error);
  EXPECT_THROW(make_world_object(0, BoxShape{Vec3::Zero(), Vec3(1, 0, 1), Quat::Identity()}, 1.0, false), Error);
  EXPECT_THROW(make_world_object(0, PlaneShape{Vec3::Zero(), Vec3::Zero()}, 1.0, false), Error);
  const auto plane = make_world_object(0, PlaneShape{Vec3::Zero(), Vec3(0, 0, 3)}, 2.0, false);
  EXPECT_TRUE(std::get<PlaneShape>(plane.shape).normal.isApprox(Vec3::UnitZ()));
  EXPECT_DOUBLE_EQ(plane.max_penetration, 0.005);
}

TEST(SphereVsObject, PlaneRestingAndSeparated) {
  const auto table = make_world_object(0, PlaneShape{Vec3(0, 0, 1.0), Vec3::UnitZ()}, 1.0, false);
  EXPECT_FALSE(sphere_vs_object({Vec3(0, 0, 1.0081), 0.008}, table));
  // Exact tangency, with values representable in binary.
  const auto floor = make_world_object(1, PlaneShape{Vec3::Zero(), Vec3::UnitZ()}, 1.0, false);
  const auto touching = sphere_vs_object({Vec3(0, 0, 0.25), 0.25}, floor);
  ASSERT_TRUE(touching);
  EXPECT_NEAR(touching->penetration, 0.0, 1e-12);
  const auto pressed = sphere_vs_object({Vec3(0, 0, 1.005), 0.008}, table);
  ASSERT_TRUE(pressed);
  EXPECT_NEAR(pressed->penetration, 0.003, 1e-12);
  EXPECT_TRUE(pressed->normal.isApprox(Vec3::UnitZ()));
  const auto deep = sphere_vs_object({Vec3(0, 0, 0.9), 0.008}, table);
  EXPECT_DOUBLE_EQ(deep->penetration, 0.010);  // clamped to D
}

TEST(SphereVsObject, BoxMatchesFaceOracle) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-0.06, 0.06);
  std::uniform_real_distribution<double> half(0.005, 0.04);
  std::uniform_real_distribution<double> rad(0.004, 0.02);
  int contacts = 0;
  for (int i = 0; i < 20000; ++i) {
    BoxShape box{Vec3(u(rng), u(rng), u(rng)), Vec3(half(rng), half(rng), half(rng)),
                 Quat(testing_support::random_unit(rng).x(), u(rng), u(rng), u(rng)).normalized()};
    const auto obj = make_world_object(0, box, 0.1, false);  // D = 30 mm
    const SphereShape s{Vec3(u(rng), u(rng), u(rng)), rad(rng)};
    const double sd = box_signed_distance_oracle(std::get<BoxShape>(obj.shape), s.center);
    const double gap = sd - s.radius;
    const auto c = sphere_vs_object(s, obj);
    if (gap > 1e-12) {
      ASSERT_FALSE(c) << "gap " << gap;
      continue;
    }
    if (gap > -1e-12) continue;  // numerically tangent; either answer is acceptable
    ASSERT_TRUE(c);
    ++contacts;
    ASSERT_NEAR(c->penetration, std::clamp(-gap, 0.0, 0.030), 1e-4);
    ASSERT_NEAR(c->normal.norm(), 1.0, 1e-9);
  }
  EXPECT_GT(contacts, 1000);
}

TEST(SphereVsSphere, TangencyIsContactAtZeroDepth) {
  const auto c = sphere_vs_sphere({Vec3(0, 0, 0), 0.008}, {Vec3(0.028, 0, 0), 0.020});
  ASSERT_TRUE(c);
  EXPECT_NEAR(c->penetration, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(c->max_penetration, 0.016);
  EXPECT_TRUE(c->normal.isApprox(-Vec3::UnitX()));
  EXPECT_FALSE(sphere_vs_sphere({Vec3(0, 0, 0), 0.008}, {Vec3(0.0281, 0, 0), 0.020}));
}

TEST(SphereVsSphere, FullOverlapAndEnclosureReachD) {
  const auto equal = sphere_vs_sphere({Vec3(0.1, 0, 0), 0.008}, {Vec3(0.1, 0, 0), 0.008});
  ASSERT_TRUE(equal);
  EXPECT_DOUBLE_EQ(equal->penetration, equal->max_penetration);
  EXPECT_DOUBLE_EQ(equal->max_penetration, 0.016);
  EXPECT_TRUE(equal->degenerate_normal);

  const auto enclosed = sphere_vs_sphere({Vec3(0.004, 0, 0), 0.008}, {Vec3(0, 0, 0), 0.020});
  ASSERT_TRUE(enclosed);
  EXPECT_DOUBLE_EQ(enclosed->penetration, 0.016);
  EXPECT_DOUBLE_EQ(enclosed->max_penetration, 0.016);
}

TEST(SphereVsSphere, SymmetricDepth) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  std::uniform_real_distribution<double> r(0.004, 0.02);
  for (int i = 0; i < 5000; ++i) {
    const SphereShape a{Vec3(u(rng), u(rng), u(rng)), r(rng)};
    const SphereShape b{Vec3(u(rng), u(rng), u(rng)), r(rng)};
    const auto ab = sphere_vs_sphere(a, b);
    const auto ba = sphere_vs_sphere(b, a);
    ASSERT_EQ(ab.has_value(), ba.has_value());
    if (!ab) continue;
    EXPECT_DOUBLE_EQ(ab->penetration, ba->penetration);
    EXPECT_DOUBLE_EQ(ab->max_penetration, ba->max_penetration);
    if (!ab->degenerate_normal) {
      EXPECT_TRUE(ab->normal.isApprox(-ba->normal));
    }
  }
}

TEST(CounterpartCode, RoundTrip) {
  const auto obj = Counterpart::object(17);
  EXPECT_EQ(obj.code(), 17u);
  EXPECT_EQ(Counterpart::from_code(17), obj);
  const auto av = Counterpart::avatar({15, LimbSide::Right, 25});
  EXPECT_EQ(av.code(), 65536u + 64u * 15 + 32 + 25);
  EXPECT_EQ(Counterpart::from_code(av.code()), av);
}

TEST(ContactState, TouchReleaseTouch) {
  ContactState st;
  const double d = 0.010;
  std::vector<std::vector<double>> depths = {{0.002}, {0.004}, {0.006}, {}, {}, {0.001}, {0.003}};
  std::vector<bool> expect_onset = {true, false, false, false, false, true, false};
  for (std::size_t t = 0; t < depths.size(); ++t) {
    std::vector<RawContactRecord> raw;
    for (double s : depths[t]) raw.push_back(object_record(4, 0, s, d, Vec3::UnitZ()));
    auto step = step_contact_state(st, raw);
    if (depths[t].empty()) {
      EXPECT_TRUE(step.events.empty());
    } else {
      ASSERT_EQ(step.events.size(), 1u);
      const auto& e = step.events[0];
      EXPECT_EQ(e.onset, expect_onset[t]) << "tick " << t;
      if (e.onset) {
        EXPECT_EQ(e.pdi, 0.0);
      } else {
        EXPECT_DOUBLE_EQ(e.pdi + e.penetration, e.max_penetration);
      }
    }
    EXPECT_EQ(step.released.size(), t == 3 ? 1u : 0u);
    st = step.next;
  }
}

TEST(ContactState, PdiPlusDepthIsDProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dd(0.001, 0.03);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  ContactState st;
  st = step_contact_state(st, std::vector{object_record(3, 1, 0.0, 0.01, Vec3::UnitZ())}).next;
  for (int i = 0; i < 2000; ++i) {
    const double d = dd(rng);
    const double s = frac(rng) * d;
    auto step = step_contact_state(st, std::vector{object_record(3, 1, s, d, Vec3::UnitZ())});
    ASSERT_EQ(step.events.size(), 1u);
    EXPECT_FALSE(step.events[0].onset);
    EXPECT_NEAR(step.events[0].pdi + s, d, 1e-15);
    EXPECT_GE(step.events[0].pdi, 0.0);
    st = step.next;
  }
}

TEST(ContactState, DegenerateNormalKeepsPrevious) {
  ContactState st;
  const Vec3 n = Vec3(1, 1, 0).normalized();
  st = step_contact_state(st, std::vector{object_record(2, 0, 0.001, 0.01, n)}).next;
  auto r = object_record(2, 0, 0.002, 0.01, Vec3::UnitZ());
  r.contact.degenerate_normal = true;
  const auto step = step_contact_state(st, std::vector{r});
  EXPECT_TRUE(step.events[0].normal.isApprox(n));
  ContactState fresh;
  EXPECT_TRUE(step_contact_state(fresh, std::vector{r}).events[0].normal.isApprox(Vec3::UnitZ()));
}

TEST(ContactState, GraspNeedsOpposingThumbSustained) {
  ContactState st;
  auto grasp = [](bool opposing) {
    std::vector<RawContactRecord> raw;
    raw.push_back(object_record(slots::kThumbTip, 5, 0.002, 0.01, Vec3::UnitY(), true));
    const Vec3 other = opposing ? Vec3(-Vec3::UnitY()) : Vec3(Vec3::UnitY());
    raw.push_back(object_record(slots::kIndexTip, 5, 0.002, 0.01, other, true));
    raw.push_back(object_record(slots::kMiddleTip, 5, 0.002, 0.01, other, true));
    return raw;
  };
  for (int t = 0; t < 5; ++t) {
    auto step = step_contact_state(st, grasp(false));
    for (const auto& e : step.events) EXPECT_FALSE(e.grabbed);
    st = step.next;
  }
  st = {};
  for (int t = 1; t <= 5; ++t) {
    auto step = step_contact_state(st, grasp(true));
    for (const auto& e : step.events) EXPECT_EQ(e.grabbed, t >= kGrabSustainTicks) << "tick " << t;
    st = step.next;
  }
  // Breaking the grasp resets the streak.
  auto one = grasp(true);
  one.pop_back();
  auto step = step_contact_state(st, one);
  for (const auto& e : step.events) EXPECT_FALSE(e.grabbed);
}

TEST(ContactState, ForcedGrabInput) {
  ContactState st;
  const GrabInput on{{0, LimbSide::Right, 9}, true};
  auto r = object_record(slots::kFirstPalm, 9, 0.002, 0.01, Vec3::UnitZ(), true);
  auto step = step_contact_state(st, std::vector{r}, std::vector{on});
  EXPECT_TRUE(step.events[0].grabbed);
  step = step_contact_state(step.next, std::vector{r}, std::vector{GrabInput{on.key, false}});
  EXPECT_FALSE(step.events[0].grabbed);
}

TEST(Dedup, StrongestWinsTiesByCounterpartOnsetSurvives) {
  std::vector<CollisionEvent> events;
  CollisionEvent a;
  a.actuator = {0, LimbSide::Left, 3};
  a.counterpart = Counterpart::object(2);
  a.max_penetration = 0.01;
  a.pdi = 0.006;
  CollisionEvent b = a;
  b.counterpart = Counterpart::object(1);
  b.pdi = 0.002;  // stronger
  CollisionEvent c = a;
  c.counterpart = Counterpart::object(0);
  c.pdi = 0.006;
  c.onset = true;
  c.pdi = 0.0;
  events = {a, b};
  auto out = dedup_per_actuator(events);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].counterpart, b.counterpart);

  CollisionEvent tie = a;
  tie.counterpart = Counterpart::object(1);
  events = {a, tie};
  EXPECT_EQ(dedup_per_actuator(events)[0].counterpart, tie.counterpart);

  events = {b, c};
  out = dedup_per_actuator(events);
  EXPECT_TRUE(out[0].onset);
  EXPECT_EQ(out[0].pdi, 0.0);

  CollisionEvent other = a;
  other.actuator.slot = 4;
  events = {a, other};
  EXPECT_EQ(dedup_per_actuator(events).size(), 2u);
}
