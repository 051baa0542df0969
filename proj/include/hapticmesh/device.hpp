#pragma once

// Emulated limb controller: answers discovery, accepts the host stream,
// decodes collision frames through a DeviceProfile and renders a per-actuator
// duty timeline at a fixed loop rate.

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/haptics.hpp"
#include "hapticmesh/log.hpp"
#include "hapticmesh/net.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

struct DeviceOptions {
  LimbSide role = LimbSide::Left;
  net::Endpoint discovery{"0.0.0.0", wire::kDiscoveryPort};
  net::Endpoint stream_listen{"0.0.0.0", wire::kLeftStreamPort};
  DeviceProfile profile;
  double loop_hz = 120.0;
  bool answer_discovery = true;
};

inline std::uint16_t default_stream_port(LimbSide role) {
  return role == LimbSide::Left ? wire::kLeftStreamPort : wire::kRightStreamPort;
}

struct ReceivedMessage {
  wire::CollisionMessage msg;
  std::chrono::steady_clock::time_point at;
  std::uint64_t connection = 0;
};

struct DutySample {
  std::uint64_t loop_tick = 0;
  double time_s = 0.0;  // since start()
  int actuator = 0;
  double duty = 0.0;
  int pwm = 0;
  double force_n = 0.0;  // ForceCapable profiles only
};

struct DeviceStats {
  std::uint64_t frames = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t connections = 0;
  std::uint64_t disconnects = 0;
  std::uint64_t announces = 0;
};

class DeviceEmulator {
 public:
  explicit DeviceEmulator(DeviceOptions options) : opt_(std::move(options)) { validate(opt_.profile); }
  DeviceEmulator(const DeviceEmulator&) = delete;
  DeviceEmulator& operator=(const DeviceEmulator&) = delete;
  ~DeviceEmulator() { stop(); }

  // Binds every socket before returning, so a started device is discoverable.
  void start() {
    if (running_.exchange(true)) return;
    listener_ = net::TcpListener::bind(opt_.stream_listen);
    if (opt_.answer_discovery) discovery_ = net::UdpSocket::bind(opt_.discovery);
    started_at_ = std::chrono::steady_clock::now();
    if (opt_.answer_discovery) responder_ = std::thread([this] { respond_loop(); });
    stream_thread_ = std::thread([this] { stream_loop(); });
    render_thread_ = std::thread([this] { render_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    for (auto* t : {&responder_, &stream_thread_, &render_thread_}) {
      if (t->joinable()) t->join();
    }
  }

  [[nodiscard]] std::uint16_t stream_port() const { return listener_->port(); }
  [[nodiscard]] LimbSide role() const { return opt_.role; }
  [[nodiscard]] bool streaming() const { return streaming_.load(); }

  [[nodiscard]] DeviceStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }
  [[nodiscard]] std::vector<ReceivedMessage> received() const {
    std::lock_guard lock(mu_);
    return received_;
  }
  [[nodiscard]] std::vector<DutySample> duty_log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  // Optional live sink for the duty timeline (JSON lines).
  void set_log_stream(std::ostream* out) {
    std::lock_guard lock(mu_);
    log_stream_ = out;
  }

 private:
  void respond_loop() {
    const auto announce =
        wire::encode_announce({wire::kVersion, opt_.role, listener_->port()});
    while (running_) {
      auto d = discovery_->receive(std::chrono::milliseconds(50));
      if (!d || !wire::is_discover(d->bytes)) continue;
      try {
        discovery_->send_to(d->from, announce);
        std::lock_guard lock(mu_);
        ++stats_.announces;
      } catch (const Error& e) {
        logger()->warn("announce to {} failed: {}", d->from.str(), e.what());
      }
    }
  }

  void stream_loop() {
    std::uint64_t connection = 0;
    while (running_) {
      auto stream = listener_->accept(std::chrono::milliseconds(50));
      if (!stream) continue;
      ++connection;
      streaming_ = true;
      {
        std::lock_guard lock(mu_);
        ++stats_.connections;
      }
      wire::StreamDeframer deframer;
      bool open = true;
      while (running_ && open) {
        std::optional<std::vector<std::uint8_t>> chunk;
        try {
          chunk = stream->read_some(std::chrono::milliseconds(50));
        } catch (const Error&) {
          open = false;
          break;
        }
        if (!chunk) continue;
        if (chunk->empty()) {
          open = false;
          break;
        }
        const auto now = std::chrono::steady_clock::now();
        deframer.feed(*chunk, [&](std::span<const std::uint8_t> payload) {
          std::lock_guard lock(mu_);
          ++stats_.frames;
          try {
            auto msg = wire::decode_collision(payload);
            received_.push_back({msg, now, connection});
            pending_.push_back(msg);
          } catch (const Error& e) {
            ++stats_.protocol_errors;
            logger()->debug("malformed frame: {}", e.what());
          }
        });
      }
      if (deframer.mid_frame()) {
        std::lock_guard lock(mu_);
        ++stats_.protocol_errors;
      }
      streaming_ = false;
      std::lock_guard lock(mu_);
      ++stats_.disconnects;
    }
  }

  void render_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration<double>(1.0 / opt_.loop_hz);
    const double dt_ms = 1000.0 / opt_.loop_hz;
    std::array<ActuatorRuntimeState, kSlotsPerLimb> states{};
    std::uint64_t tick = 0;
    auto next = started_at_;
    while (running_) {
      next += std::chrono::duration_cast<clock::duration>(period);
      std::this_thread::sleep_until(next);
      std::vector<wire::CollisionMessage> batch;
      {
        std::lock_guard lock(mu_);
        batch.swap(pending_);
      }
      // Several frames for one actuator in a loop step: an onset wins, else the latest.
      std::map<int, wire::CollisionMessage> per_actuator;
      for (const auto& m : batch) {
        auto [it, inserted] = per_actuator.try_emplace(m.actuator_id, m);
        if (!inserted && (m.onset || !it->second.onset)) it->second = m;
      }
      const double t = std::chrono::duration<double>(clock::now() - started_at_).count();
      std::vector<DutySample> samples;
      for (int a = 0; a < kSlotsPerLimb; ++a) {
        auto& st = states[static_cast<std::size_t>(a)];
        const auto found = per_actuator.find(a);
        const bool idle = st.current_duty == 0.0 && st.click_remaining_ms <= 0.0 && !st.ramp;
        if (found == per_actuator.end() && idle) continue;
        DutySample s;
        s.loop_tick = tick;
        s.time_s = t;
        s.actuator = a;
        if (opt_.profile.capability == Capability::ForceCapable) {
          if (found != per_actuator.end()) s.force_n = render_force(found->second, opt_.profile).magnitude_n;
          st.current_duty = 0.0;
        } else {
          std::optional<HapticCommand> cmd;
          if (found != per_actuator.end()) cmd = decode_to_command(found->second, opt_.profile, st);
          auto [next_state, duty] = advance_actuator(st, cmd, dt_ms);
          st = next_state;
          s.duty = duty;
          s.pwm = duty_to_pwm(std::clamp(duty, 0.0, 100.0), opt_.profile.pwm_bits);
        }
        samples.push_back(s);
      }
      if (!samples.empty()) {
        std::lock_guard lock(mu_);
        for (const auto& s : samples) {
          if (log_stream_ != nullptr) {
            *log_stream_ << nlohmann::ordered_json{{"loop_tick", s.loop_tick}, {"t", s.time_s},
                                                   {"act", s.actuator},      {"duty", s.duty},
                                                   {"pwm", s.pwm},           {"force_n", s.force_n}}
                                .dump()
                         << '\n';
          }
          log_.push_back(s);
        }
      }
      ++tick;
    }
  }

  DeviceOptions opt_;
  std::atomic<bool> running_{false};
  std::atomic<bool> streaming_{false};
  std::optional<net::TcpListener> listener_;
  std::optional<net::UdpSocket> discovery_;
  std::chrono::steady_clock::time_point started_at_;
  std::thread responder_;
  std::thread stream_thread_;
  std::thread render_thread_;

  mutable std::mutex mu_;
  DeviceStats stats_;
  std::vector<ReceivedMessage> received_;
  std::vector<wire::CollisionMessage> pending_;
  std::vector<DutySample> log_;
  std::ostream* log_stream_ = nullptr;
};

}  // namespace hapticmesh
