#include <gtest/gtest.h>

#include <set>

#include "hapticmesh/topology.hpp"

using namespace hapticmesh;

TEST(Topology, TwentySixSlotsWithFixedRegionCounts) {
  const auto limb = build_limb_topology(LimbSide::Right, {});
  int finger = 0, palm = 0, dorsal = 0, volar = 0;
  for (const auto& s : limb.slots) {
    switch (s.region) {
      case Region::HandFinger: ++finger; break;
      case Region::HandPalm: ++palm; break;
      case Region::ForearmDorsal: ++dorsal; break;
      case Region::ForearmVolar: ++volar; break;
    }
    EXPECT_EQ(s.region, region_of_slot(s.id));
  }
  EXPECT_EQ(finger, 10);
  EXPECT_EQ(palm, 4);
  EXPECT_EQ(dorsal, 6);
  EXPECT_EQ(volar, 6);
  EXPECT_EQ(finger + palm, kHandSlots);
  EXPECT_EQ(dorsal + volar, kForearmSlots);
}

TEST(Topology, SlotIdsAreIdentityAndUnique) {
  const auto limb = build_limb_topology(LimbSide::Left, {});
  std::set<int> ids;
  for (std::size_t i = 0; i < limb.slots.size(); ++i) {
    EXPECT_EQ(limb.slots[i].id, static_cast<int>(i));
    EXPECT_EQ(actuator_for_sphere(static_cast<int>(i)), static_cast<int>(i));
    ids.insert(limb.slots[i].id);
  }
  EXPECT_EQ(ids.size(), 26u);
  EXPECT_THROW(actuator_for_sphere(26), Error);
  EXPECT_THROW(actuator_for_sphere(-1), Error);
}

TEST(Topology, ForearmRowsSpanFourteenCentimetres) {
  const auto limb = build_limb_topology(LimbSide::Right, {});
  for (int base : {slots::kFirstDorsal, slots::kFirstVolar}) {
    const Vec3 first = limb.world_position(base);
    const Vec3 last = limb.world_position(base + 5);
    EXPECT_NEAR((first - last).norm(), 0.140, 1e-12);
    for (int i = 0; i + 1 < 6; ++i) {
      EXPECT_NEAR((limb.world_position(base + i) - limb.world_position(base + i + 1)).norm(), 0.028, 1e-12);
    }
  }
}

TEST(Topology, SphereRadiiByRegion) {
  const auto limb = build_limb_topology(LimbSide::Right, {});
  for (const auto& s : limb.slots) {
    EXPECT_DOUBLE_EQ(s.sphere_radius, is_hand(s.region) ? 0.008 : 0.020);
  }
}

TEST(Topology, LeftIsMirrorOfRight) {
  const auto r = build_limb_topology(LimbSide::Right, {});
  const auto l = build_limb_topology(LimbSide::Left, {});
  for (std::size_t i = 0; i < 26; ++i) {
    EXPECT_DOUBLE_EQ(l.slots[i].local_position.x(), r.slots[i].local_position.x());
    EXPECT_DOUBLE_EQ(l.slots[i].local_position.y(), -r.slots[i].local_position.y());
    EXPECT_DOUBLE_EQ(l.slots[i].local_position.z(), r.slots[i].local_position.z());
    EXPECT_EQ(l.slots[i].region, r.slots[i].region);
  }
  // Thumb on the radial (+y) side of the right hand.
  EXPECT_GT(r.slots[slots::kThumbTip].local_position.y(), 0.0);
}

TEST(Topology, PoseIsApplied) {
  Pose pose;
  pose.position = Vec3(1.0, 2.0, 3.0);
  pose.orientation = Quat(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  const auto limb = build_limb_topology(LimbSide::Right, {}, pose);
  const Vec3 local = limb.slots[slots::kFirstDorsal].local_position;
  const Vec3 expected = Vec3(1.0 - local.y(), 2.0 + local.x(), 3.0 + local.z());
  EXPECT_TRUE(limb.world_position(slots::kFirstDorsal).isApprox(expected, 1e-12));
  EXPECT_TRUE(limb.row_outward_normal(Region::ForearmDorsal).isApprox(Vec3::UnitZ(), 1e-12));
}

TEST(Topology, PalmKeepOutAndDistinctPositions) {
  TopologyConfig c;
  c.palm_clearance_mm = 60.0;
  EXPECT_THROW(build_limb_topology(LimbSide::Right, c), Error);
  TopologyConfig bad;
  bad.finger_radius_mm = 25.0;  // not smaller than the forearm radius
  EXPECT_THROW(build_limb_topology(LimbSide::Right, bad), Error);
  TopologyConfig neg;
  neg.forearm_span_mm = -1.0;
  EXPECT_THROW(build_limb_topology(LimbSide::Right, neg), Error);
}

TEST(Topology, JsonRoundTripAndUnknownKeys) {
  TopologyConfig c;
  c.forearm_span_mm = 150.0;
  c.finger_length_mm[2] = 85.0;
  nlohmann::json j = c;
  const auto back = topology_config_from_json(j);
  EXPECT_DOUBLE_EQ(back.forearm_span_mm, 150.0);
  EXPECT_DOUBLE_EQ(back.finger_length_mm[2], 85.0);
  EXPECT_THROW(topology_config_from_json(nlohmann::json{{"span", 1}}), Error);
  EXPECT_THROW(topology_config_from_json(nlohmann::json{{"finger_length_mm", {1, 2}}}), Error);
}

TEST(Topology, RegionNames) {
  for (Region r : {Region::HandFinger, Region::HandPalm, Region::ForearmDorsal, Region::ForearmVolar}) {
    EXPECT_EQ(region_from_string(to_string(r)), r);
  }
  EXPECT_EQ(limb_side_from_string("left"), LimbSide::Left);
  EXPECT_THROW(limb_side_from_string("middle"), Error);
}
