#pragma once

// Host side of device discovery: broadcast DISCOVER, collect ANNOUNCE replies,
// then open one reliable stream per announced limb controller.

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include "hapticmesh/log.hpp"
#include "hapticmesh/net.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

enum class ConnectionState { Discovered, Connected, Lost };

constexpr std::string_view to_string(ConnectionState s) {
  switch (s) {
    case ConnectionState::Discovered: return "discovered";
    case ConnectionState::Connected: return "connected";
    case ConnectionState::Lost: return "lost";
  }
  return "unknown";
}

struct DeviceEntry {
  net::Endpoint stream;  // announcing address + announced stream port
  ConnectionState state = ConnectionState::Discovered;
  std::chrono::steady_clock::time_point last_seen;
};

// One entry per role; a later announce from a different address replaces it.
class DeviceRegistry {
 public:
  void record_announce(LimbSide role, const net::Endpoint& stream, std::chrono::steady_clock::time_point now) {
    auto it = entries_.find(role);
    if (it == entries_.end()) {
      entries_.emplace(role, DeviceEntry{stream, ConnectionState::Discovered, now});
      return;
    }
    if (it->second.stream != stream) {
      ++conflicts_;
      logger()->warn("role {} announced from {} while registered at {}; keeping the newer one",
                     to_string(role), stream.str(), it->second.stream.str());
      it->second = DeviceEntry{stream, ConnectionState::Discovered, now};
      return;
    }
    it->second.last_seen = now;
  }

  void set_state(LimbSide role, ConnectionState state) { entries_.at(role).state = state; }

  [[nodiscard]] const DeviceEntry* find(LimbSide role) const {
    const auto it = entries_.find(role);
    return it == entries_.end() ? nullptr : &it->second;
  }
  [[nodiscard]] const std::map<LimbSide, DeviceEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] std::size_t conflicts() const { return conflicts_; }
  [[nodiscard]] std::size_t connected() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.state == ConnectionState::Connected ? 1 : 0;
    return n;
  }

 private:
  std::map<LimbSide, DeviceEntry> entries_;
  std::size_t conflicts_ = 0;
};

struct DiscoveryOptions {
  net::Endpoint broadcast{"127.255.255.255", wire::kDiscoveryPort};
  std::chrono::milliseconds timeout{2000};
  std::chrono::milliseconds interval{500};
  std::vector<LimbSide> expected{LimbSide::Left, LimbSide::Right};
  bool stop_when_complete = true;
  bool connect = true;
};

struct DiscoveryResult {
  DeviceRegistry registry;
  std::map<LimbSide, net::TcpStream> streams;
  std::vector<LimbSide> missing;  // expected roles never announced

  [[nodiscard]] bool complete() const { return missing.empty(); }
};

// Never throws on timeout: a partial registry is reported through `missing`.
inline DiscoveryResult run_discovery(const DiscoveryOptions& opt, DeviceRegistry registry = {}) {
  using clock = std::chrono::steady_clock;
  DiscoveryResult out;
  auto sock = net::UdpSocket::bind({"0.0.0.0", 0}, true);
  const auto discover = wire::encode_discover();
  const auto deadline = clock::now() + opt.timeout;
  auto next_broadcast = clock::now();

  auto all_found = [&] {
    for (LimbSide r : opt.expected) {
      if (registry.find(r) == nullptr) return false;
    }
    return true;
  };

  while (clock::now() < deadline) {
    if (clock::now() >= next_broadcast) {
      sock.send_to(opt.broadcast, discover);
      next_broadcast += opt.interval;
    }
    const auto wait = std::min(deadline, next_broadcast) - clock::now();
    const auto ms = std::max<std::chrono::milliseconds::rep>(
        1, std::chrono::duration_cast<std::chrono::milliseconds>(wait).count());
    auto dgram = sock.receive(std::chrono::milliseconds(ms));
    if (dgram) {
      try {
        const auto ann = wire::decode_announce(dgram->bytes);
        registry.record_announce(ann.role, {dgram->from.host, ann.stream_listen_port}, clock::now());
        logger()->info("discovered {} controller at {}:{}", to_string(ann.role), dgram->from.host,
                       ann.stream_listen_port);
      } catch (const Error& e) {
        logger()->debug("ignoring datagram from {}: {}", dgram->from.str(), e.what());
      }
    }
    if (opt.stop_when_complete && all_found()) break;
  }

  if (opt.connect) {
    for (const auto& [role, entry] : registry.entries()) {
      if (entry.state == ConnectionState::Connected) continue;
      try {
        out.streams.emplace(role, net::TcpStream::connect(entry.stream, std::chrono::milliseconds(1000)));
        registry.set_state(role, ConnectionState::Connected);
      } catch (const Error& e) {
        logger()->warn("cannot open stream to {} controller: {}", to_string(role), e.what());
        registry.set_state(role, ConnectionState::Lost);
      }
    }
  }
  for (LimbSide r : opt.expected) {
    if (registry.find(r) == nullptr) out.missing.push_back(r);
  }
  out.registry = std::move(registry);
  return out;
}

}  // namespace hapticmesh
