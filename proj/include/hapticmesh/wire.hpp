#pragma once

// Binary protocol between the host and limb controllers.
//
// Collision payload (11 bytes, big-endian):
//   0     version (0x01)
//   1     type    (0x01 collision)
//   2     actuator id, 0..25
//   3     flags: bit0 onset, bit1 grabbed, bit2 avatar contact, bits 3-7 zero
//   4-5   PDI in 0.1 mm
//   6-7   D in 0.1 mm
//   8-10  contact normal, signed, component * 127
//
// Discovery datagrams: DISCOVER = {0x01, 0x03};
// ANNOUNCE = {0x01, 0x02, role, 0x00, port_hi, port_lo} with role 0 = left, 1 = right.
// Stream framing: one length byte followed by the payload.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/topology.hpp"

namespace hapticmesh::wire {

inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kCollisionPayloadSize = 11;
inline constexpr std::size_t kMaxMessageBytes = 21;
inline constexpr std::size_t kMaxFramePayload = 255;
inline constexpr double kDepthUnit = 1e-4;  // metres per quantum (0.1 mm)
inline constexpr double kNormalScale = 127.0;

enum class PacketType : std::uint8_t { Collision = 0x01, Announce = 0x02, Discover = 0x03 };

namespace flag {
inline constexpr std::uint8_t kOnset = 0x01;
inline constexpr std::uint8_t kGrabbed = 0x02;
inline constexpr std::uint8_t kAvatar = 0x04;
inline constexpr std::uint8_t kReservedMask = 0xF8;
}  // namespace flag

struct CollisionMessage {
  std::uint8_t version = kVersion;
  std::uint8_t actuator_id = 0;
  bool onset = false;
  bool grabbed = false;
  bool avatar_contact = false;
  std::uint16_t pdi_q = 0;
  std::uint16_t d_q = 0;
  std::array<std::int8_t, 3> normal_q{};

  [[nodiscard]] std::uint8_t flags() const {
    return static_cast<std::uint8_t>((onset ? flag::kOnset : 0) | (grabbed ? flag::kGrabbed : 0) |
                                     (avatar_contact ? flag::kAvatar : 0));
  }
  [[nodiscard]] double pdi_m() const { return pdi_q * kDepthUnit; }
  [[nodiscard]] double d_m() const { return d_q * kDepthUnit; }
  [[nodiscard]] Vec3 normal() const {
    return Vec3(normal_q[0], normal_q[1], normal_q[2]) / kNormalScale;
  }

  bool operator==(const CollisionMessage&) const = default;
};

// Throws `code` with a reason when a message breaks the protocol invariants.
inline void check_invariants(const CollisionMessage& m, ErrorCode code) {
  if (m.version != kVersion) throw Error(code, "unsupported version " + std::to_string(m.version));
  if (m.actuator_id >= kSlotsPerLimb) {
    throw Error(code, "actuator id " + std::to_string(m.actuator_id) + " outside 0..25");
  }
  if (m.d_q == 0) throw Error(code, "zero maximum penetration");
  if (m.pdi_q > m.d_q) throw Error(code, "PDI exceeds D");
  const bool zero_normal = m.normal_q[0] == 0 && m.normal_q[1] == 0 && m.normal_q[2] == 0;
  if (zero_normal) {
    if (!m.onset) throw Error(code, "all-zero normal on a non-onset message");
    return;
  }
  const double n = m.normal().norm();
  if (n < 0.95 || n > 1.05) throw Error(code, "normal is not unit length");
}

struct Quantized {
  std::uint16_t pdi_q = 0;
  std::uint16_t d_q = 0;
  std::array<std::int8_t, 3> normal_q{};
};

inline Quantized quantize(double pdi_m, double d_m, const Vec3& normal) {
  constexpr double kMaxDepth = 65535 * kDepthUnit;
  if (!(pdi_m >= 0.0) || !(d_m >= pdi_m) || !(d_m <= kMaxDepth + 1e-12)) {
    throw Error(ErrorCode::OutOfRange, "depths must satisfy 0 <= PDI <= D <= 6.5535 m");
  }
  Quantized q;
  // lround rounds half away from zero.
  q.pdi_q = static_cast<std::uint16_t>(std::lround(pdi_m / kDepthUnit));
  q.d_q = static_cast<std::uint16_t>(std::min(65535L, std::lround(d_m / kDepthUnit)));
  for (int i = 0; i < 3; ++i) {
    const long c = std::clamp(std::lround(normal[i] * kNormalScale), -127L, 127L);
    q.normal_q[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(c);
  }
  return q;
}

inline std::array<std::uint8_t, kCollisionPayloadSize> encode_collision(const CollisionMessage& m) {
  check_invariants(m, ErrorCode::EncodeError);
  return {m.version,
          static_cast<std::uint8_t>(PacketType::Collision),
          m.actuator_id,
          m.flags(),
          static_cast<std::uint8_t>(m.pdi_q >> 8),
          static_cast<std::uint8_t>(m.pdi_q & 0xFF),
          static_cast<std::uint8_t>(m.d_q >> 8),
          static_cast<std::uint8_t>(m.d_q & 0xFF),
          static_cast<std::uint8_t>(m.normal_q[0]),
          static_cast<std::uint8_t>(m.normal_q[1]),
          static_cast<std::uint8_t>(m.normal_q[2])};
}

inline CollisionMessage decode_collision(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCollisionPayloadSize) {
    throw Error(ErrorCode::ShortBuffer, "collision payload needs 11 bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes[0] != kVersion) throw Error(ErrorCode::BadVersion, "version " + std::to_string(bytes[0]));
  if (bytes[1] != static_cast<std::uint8_t>(PacketType::Collision)) {
    throw Error(ErrorCode::BadType, "type " + std::to_string(bytes[1]));
  }
  if (bytes.size() != kCollisionPayloadSize) {
    throw Error(ErrorCode::ProtocolError, "trailing bytes after collision payload");
  }
  if (bytes[3] & flag::kReservedMask) throw Error(ErrorCode::ProtocolError, "reserved flag bits set");
  CollisionMessage m;
  m.version = bytes[0];
  m.actuator_id = bytes[2];
  m.onset = bytes[3] & flag::kOnset;
  m.grabbed = bytes[3] & flag::kGrabbed;
  m.avatar_contact = bytes[3] & flag::kAvatar;
  m.pdi_q = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
  m.d_q = static_cast<std::uint16_t>((bytes[6] << 8) | bytes[7]);
  for (std::size_t i = 0; i < 3; ++i) m.normal_q[i] = static_cast<std::int8_t>(bytes[8 + i]);
  check_invariants(m, ErrorCode::ProtocolError);
  return m;
}

// ---- discovery datagrams ----

inline constexpr std::uint16_t kDiscoveryPort = 47001;
inline constexpr std::uint16_t kLeftStreamPort = 47002;
inline constexpr std::uint16_t kRightStreamPort = 47003;

struct AnnouncePacket {
  std::uint8_t version = kVersion;
  LimbSide role = LimbSide::Left;
  std::uint16_t stream_listen_port = 0;

  bool operator==(const AnnouncePacket&) const = default;
};

inline std::array<std::uint8_t, 2> encode_discover() {
  return {kVersion, static_cast<std::uint8_t>(PacketType::Discover)};
}

inline bool is_discover(std::span<const std::uint8_t> bytes) {
  return bytes.size() == 2 && bytes[0] == kVersion && bytes[1] == static_cast<std::uint8_t>(PacketType::Discover);
}

inline std::array<std::uint8_t, 6> encode_announce(const AnnouncePacket& a) {
  return {a.version,
          static_cast<std::uint8_t>(PacketType::Announce),
          static_cast<std::uint8_t>(a.role),
          0x00,
          static_cast<std::uint8_t>(a.stream_listen_port >> 8),
          static_cast<std::uint8_t>(a.stream_listen_port & 0xFF)};
}

inline AnnouncePacket decode_announce(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6) throw Error(ErrorCode::ShortBuffer, "announce needs 6 bytes");
  if (bytes[0] != kVersion) throw Error(ErrorCode::BadVersion, "version " + std::to_string(bytes[0]));
  if (bytes[1] != static_cast<std::uint8_t>(PacketType::Announce)) {
    throw Error(ErrorCode::BadType, "type " + std::to_string(bytes[1]));
  }
  if (bytes.size() != 6) throw Error(ErrorCode::ProtocolError, "trailing bytes after announce");
  if (bytes[2] > 1) throw Error(ErrorCode::ProtocolError, "unknown role " + std::to_string(bytes[2]));
  AnnouncePacket a;
  a.role = static_cast<LimbSide>(bytes[2]);
  a.stream_listen_port = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
  return a;
}

// ---- stream framing ----

inline void append_frame(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFramePayload) throw Error(ErrorCode::EncodeError, "frame payload exceeds 255 bytes");
  out.push_back(static_cast<std::uint8_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
}

inline std::vector<std::uint8_t> frame_stream(std::span<const std::vector<std::uint8_t>> payloads) {
  std::vector<std::uint8_t> out;
  for (const auto& p : payloads) append_frame(out, p);
  return out;
}

// Incremental deframer for bytes arriving in arbitrary chunks.
class StreamDeframer {
 public:
  template <class OnPayload>
  void feed(std::span<const std::uint8_t> bytes, OnPayload&& on_payload) {
    for (std::uint8_t b : bytes) {
      if (!expected_) {
        expected_ = b;
        pending_.clear();
        if (b == 0) {
          on_payload(std::span<const std::uint8_t>{});
          expected_.reset();
        }
        continue;
      }
      pending_.push_back(b);
      if (pending_.size() == *expected_) {
        on_payload(std::span<const std::uint8_t>(pending_));
        expected_.reset();
      }
    }
  }

  [[nodiscard]] bool mid_frame() const { return expected_.has_value(); }

  // Call at end of stream; a dangling partial frame is corruption.
  void finish() const {
    if (mid_frame()) {
      throw Error(ErrorCode::StreamCorrupt, "stream ended mid-frame (" + std::to_string(pending_.size()) + " of " +
                                                std::to_string(*expected_) + " bytes)");
    }
  }

 private:
  std::optional<std::size_t> expected_;
  std::vector<std::uint8_t> pending_;
};

inline std::vector<std::vector<std::uint8_t>> deframe_stream(std::span<const std::uint8_t> bytes) {
  std::vector<std::vector<std::uint8_t>> out;
  StreamDeframer d;
  d.feed(bytes, [&](std::span<const std::uint8_t> p) { out.emplace_back(p.begin(), p.end()); });
  d.finish();
  return out;
}

}  // namespace hapticmesh::wire
