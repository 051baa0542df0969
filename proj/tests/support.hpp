#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/math.hpp"
#include "hapticmesh/wire.hpp"

namespace testing_support {

inline std::string source_path(const std::string& rel) { return std::string(HAPTICMESH_SOURCE_DIR) + "/" + rel; }

inline nlohmann::json load_json(const std::string& rel) {
  std::ifstream in(source_path(rel));
  return nlohmann::json::parse(in);
}

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  return out;
}

inline hapticmesh::Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    hapticmesh::Vec3 v(n(rng), n(rng), n(rng));
    if (v.norm() > 1e-6) return v.normalized();
  }
}

// A valid collision message with every field drawn at random.
inline hapticmesh::wire::CollisionMessage random_message(std::mt19937_64& rng) {
  using namespace hapticmesh;
  std::uniform_int_distribution<int> act(0, kSlotsPerLimb - 1);
  std::uniform_int_distribution<int> d(1, 65535);
  std::bernoulli_distribution coin(0.5);
  wire::CollisionMessage m;
  m.actuator_id = static_cast<std::uint8_t>(act(rng));
  m.onset = coin(rng);
  m.grabbed = coin(rng);
  m.avatar_contact = coin(rng);
  m.d_q = static_cast<std::uint16_t>(d(rng));
  m.pdi_q = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, m.d_q)(rng));
  m.normal_q = wire::quantize(0.0, 0.001, random_unit(rng)).normal_q;
  return m;
}

}  // namespace testing_support
