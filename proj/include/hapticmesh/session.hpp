#pragma once

// Fixed-timestep multi-user world. One tick: pose every actuator sphere,
// detect contacts, step the pair state machine, quantize one message per
// touching actuator and route it to the owning limb's endpoint.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/collision.hpp"
#include "hapticmesh/endpoint.hpp"
#include "hapticmesh/gestures.hpp"
#include "hapticmesh/haptics.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/trace.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

inline constexpr std::size_t kMaxUsers = 16;

struct SessionConfig {
  double tick_rate_hz = 120.0;
  std::uint64_t seed = 0;
  bool real_time = false;
  bool allow_self_contact = false;
  double position_jitter_mm = 0.0;  // per-tick uniform noise on every sphere, seeded
  std::size_t queue_capacity = 1024;
};

inline void validate(const SessionConfig& c) {
  if (!(c.tick_rate_hz >= 1.0 && c.tick_rate_hz <= 1000.0)) {
    throw Error(ErrorCode::InvalidConfig, "tick_rate_hz must lie in [1, 1000]");
  }
  if (!(c.position_jitter_mm >= 0.0)) throw Error(ErrorCode::InvalidConfig, "position_jitter_mm must be >= 0");
  if (c.queue_capacity == 0) throw Error(ErrorCode::InvalidConfig, "queue_capacity must be positive");
}

struct EndpointBinding {
  enum class Kind { InProcess, Network };
  Kind kind = Kind::InProcess;
  net::Endpoint address;  // Network only; empty host means "discover by role"
};

struct EndpointKey {
  std::uint16_t user = 0;
  LimbSide limb = LimbSide::Right;

  auto operator<=>(const EndpointKey&) const = default;
};

inline std::string to_string(const EndpointKey& k) {
  return "user" + std::to_string(k.user) + "/" + std::string(to_string(k.limb));
}

struct UserSlot {
  std::uint16_t id = 0;
  std::array<LimbTopology, kLimbsPerUser> limbs;  // indexed by LimbSide
  std::array<EndpointBinding, kLimbsPerUser> bindings;

  [[nodiscard]] const LimbTopology& limb(LimbSide side) const { return limbs[static_cast<std::size_t>(side)]; }
  [[nodiscard]] static constexpr int actuation_points() { return kLimbsPerUser * kSlotsPerLimb; }
};

struct TickOutput {
  std::uint64_t tick = 0;
  double time_s = 0.0;
  std::map<EndpointKey, std::vector<wire::CollisionMessage>> batches;
  std::vector<TraceRecord> records;  // same messages, in emission order
};

class Session {
 public:
  explicit Session(SessionConfig config = {}, DeviceProfile reference_profile = {})
      : config_(config), profile_(std::move(reference_profile)), rng_(config.seed) {
    validate(config_);
    validate(profile_);
  }

  std::uint16_t join(LimbTopology left, LimbTopology right,
                     std::array<EndpointBinding, kLimbsPerUser> bindings = {}) {
    if (users_.size() >= kMaxUsers) {
      throw Error(ErrorCode::SessionFull, "session already holds " + std::to_string(kMaxUsers) + " users");
    }
    if (left.side != LimbSide::Left || right.side != LimbSide::Right) {
      throw Error(ErrorCode::InvalidConfig, "join expects a left and a right limb");
    }
    UserSlot u;
    u.id = static_cast<std::uint16_t>(users_.size());
    u.limbs = {std::move(left), std::move(right)};
    u.bindings = bindings;
    users_.push_back(std::move(u));
    positions_.emplace_back();
    haptic_state_.emplace_back();
    reset_rest_positions(users_.back().id);
    return users_.back().id;
  }

  std::uint32_t attach_object(Shape shape, double stiffness, bool grabbable = false) {
    const auto id = static_cast<std::uint32_t>(objects_.size());
    objects_.push_back(make_world_object(id, std::move(shape), stiffness, grabbable));
    return id;
  }

  void add_gesture(GestureScript script) {
    if (script.actor.user >= users_.size()) throw Error(ErrorCode::InvalidConfig, "gesture actor is not a joined user");
    if (!script.target.is_object && script.target.user >= users_.size()) {
      throw Error(ErrorCode::InvalidConfig, "gesture target is not a joined user");
    }
    if (script.target.is_object && script.target.object_id >= objects_.size()) {
      throw Error(ErrorCode::InvalidConfig, "gesture target object does not exist");
    }
    gestures_.push_back(std::move(script));
  }

  // Applied at the start of `tick`.
  void add_grab_input(std::uint64_t tick, GrabInput input) { grab_inputs_.emplace(tick, input); }

  TickOutput tick() {
    TickOutput out;
    out.tick = tick_;
    out.time_s = static_cast<double>(tick_) / config_.tick_rate_hz;

    pose_spheres(out.time_s);
    collect_contacts();

    std::vector<GrabInput> grabs;
    for (auto [it, end] = grab_inputs_.equal_range(tick_); it != end; ++it) grabs.push_back(it->second);
    auto step = step_contact_state(contact_, raw_, grabs);
    pair_onsets_ += static_cast<std::uint64_t>(
        std::count_if(step.events.begin(), step.events.end(), [](const auto& e) { return e.onset; }));
    pair_releases_ += step.released.size();

    const auto events = dedup_per_actuator(step.events);
    const double dt_ms = 1000.0 / config_.tick_rate_hz;
    driven_.assign(users_.size(), {});
    for (const auto& e : events) {
      const auto q = wire::quantize(e.pdi, e.max_penetration, e.normal);
      wire::CollisionMessage msg;
      msg.actuator_id = e.actuator.slot;
      msg.onset = e.onset;
      msg.grabbed = e.grabbed;
      msg.avatar_contact = e.counterpart.is_avatar();
      msg.pdi_q = q.pdi_q;
      msg.d_q = q.d_q;
      msg.normal_q = q.normal_q;

      auto& st = state_of(e.actuator);
      const auto cmd = decode_to_command(msg, profile_, st);
      auto [next, duty] = advance_actuator(st, cmd, dt_ms);
      st = next;
      driven_[e.actuator.user][static_cast<std::size_t>(e.actuator.limb)][e.actuator.slot] = true;

      TraceRecord r;
      r.tick = tick_;
      r.time_s = out.time_s;
      r.user = e.actuator.user;
      r.limb = e.actuator.limb;
      r.actuator_id = e.actuator.slot;
      r.pdi_q = msg.pdi_q;
      r.d_q = msg.d_q;
      r.flags = msg.flags();
      r.duty = duty;
      r.counterpart = e.counterpart.code();
      r.normal_q = msg.normal_q;
      r.position = sphere_at(e.actuator).center;
      out.records.push_back(r);
      out.batches[{e.actuator.user, e.actuator.limb}].push_back(msg);
    }
    // Actuators with no contact this tick still finish any running click.
    for (std::size_t u = 0; u < users_.size(); ++u) {
      for (std::size_t l = 0; l < kLimbsPerUser; ++l) {
        for (std::size_t s = 0; s < kSlotsPerLimb; ++s) {
          auto& st = haptic_state_[u][l][s];
          if (driven_[u][l][s] || is_idle(st)) continue;
          st = advance_actuator(st, std::nullopt, dt_ms).first;
        }
      }
    }

    contact_ = std::move(step.next);
    last_released_ = std::move(step.released);
    last_events_ = std::move(step.events);
    message_count_ += out.records.size();
    ++tick_;
    return out;
  }

  [[nodiscard]] const SessionConfig& config() const { return config_; }
  [[nodiscard]] const DeviceProfile& reference_profile() const { return profile_; }
  [[nodiscard]] const std::vector<UserSlot>& users() const { return users_; }
  [[nodiscard]] const std::vector<WorldObject>& objects() const { return objects_; }
  [[nodiscard]] const std::vector<GestureScript>& gestures() const { return gestures_; }
  [[nodiscard]] std::uint64_t current_tick() const { return tick_; }
  [[nodiscard]] double dt_s() const { return 1.0 / config_.tick_rate_hz; }
  [[nodiscard]] std::uint64_t message_count() const { return message_count_; }
  [[nodiscard]] std::uint64_t pair_onsets() const { return pair_onsets_; }
  [[nodiscard]] std::uint64_t pair_releases() const { return pair_releases_; }
  [[nodiscard]] const ContactState& contact_state() const { return contact_; }
  // Pair-level view of the last tick, before per-actuator dedup.
  [[nodiscard]] const std::vector<CollisionEvent>& last_pair_events() const { return last_events_; }
  [[nodiscard]] const std::vector<ContactKey>& last_released() const { return last_released_; }

  [[nodiscard]] Vec3 sphere_position(const ActuatorRef& a) const { return sphere_at(a).center; }

  [[nodiscard]] TraceHeader trace_header() const {
    TraceHeader h;
    h.tick_rate_hz = config_.tick_rate_hz;
    h.seed = config_.seed;
    for (const auto& g : gestures_) h.gestures.push_back(script_to_json(g));
    return h;
  }

 private:
  using LimbSpheres = std::array<SphereShape, kSlotsPerLimb>;
  using UserSpheres = std::array<LimbSpheres, kLimbsPerUser>;
  using UserHaptics = std::array<std::array<ActuatorRuntimeState, kSlotsPerLimb>, kLimbsPerUser>;
  using UserFlags = std::array<std::array<bool, kSlotsPerLimb>, kLimbsPerUser>;

  struct Aabb {
    Vec3 lo;
    Vec3 hi;
    [[nodiscard]] bool overlaps(const Aabb& o) const {
      return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
    }
  };

  static bool is_idle(const ActuatorRuntimeState& s) {
    return s.current_duty == 0.0 && s.click_remaining_ms <= 0.0 && !s.ramp;
  }

  ActuatorRuntimeState& state_of(const ActuatorRef& a) {
    return haptic_state_[a.user][static_cast<std::size_t>(a.limb)][a.slot];
  }
  [[nodiscard]] const SphereShape& sphere_at(const ActuatorRef& a) const {
    return positions_[a.user][static_cast<std::size_t>(a.limb)][a.slot];
  }

  void reset_rest_positions(std::uint16_t user) {
    const auto& u = users_[user];
    for (std::size_t l = 0; l < kLimbsPerUser; ++l) {
      for (std::size_t s = 0; s < kSlotsPerLimb; ++s) {
        positions_[user][l][s] = {u.limbs[l].world_position(static_cast<int>(s)), u.limbs[l].slots[s].sphere_radius};
      }
    }
  }

  void pose_spheres(double t) {
    for (const auto& u : users_) reset_rest_positions(u.id);
    for (const auto& g : gestures_) {
      for (const auto& o : sample(g, t)) {
        positions_[g.actor.user][static_cast<std::size_t>(g.actor.limb)][static_cast<std::size_t>(o.slot)].center =
            o.position;
      }
    }
    if (config_.position_jitter_mm > 0.0) {
      std::uniform_real_distribution<double> noise(-config_.position_jitter_mm * 1e-3, config_.position_jitter_mm * 1e-3);
      for (auto& user : positions_) {
        for (auto& limb : user) {
          for (auto& s : limb) s.center += Vec3(noise(rng_), noise(rng_), noise(rng_));
        }
      }
    }
  }

  static Aabb bounds(const LimbSpheres& limb) {
    Aabb b{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto& s : limb) {
      b.lo = b.lo.cwiseMin(s.center - Vec3::Constant(s.radius));
      b.hi = b.hi.cwiseMax(s.center + Vec3::Constant(s.radius));
    }
    return b;
  }

  static std::optional<Aabb> bounds(const WorldObject& o) {
    if (const auto* s = std::get_if<SphereShape>(&o.shape)) {
      return Aabb{s->center - Vec3::Constant(s->radius), s->center + Vec3::Constant(s->radius)};
    }
    if (const auto* b = std::get_if<BoxShape>(&o.shape)) {
      const double r = b->half_extents.norm();
      return Aabb{b->center - Vec3::Constant(r), b->center + Vec3::Constant(r)};
    }
    return std::nullopt;  // planes are unbounded
  }

  // Fixed iteration order: user, limb, slot, then counterpart.
  void collect_contacts() {
    raw_.clear();
    limb_bounds_.resize(users_.size());
    for (std::size_t u = 0; u < users_.size(); ++u) {
      for (std::size_t l = 0; l < kLimbsPerUser; ++l) limb_bounds_[u][l] = bounds(positions_[u][l]);
    }
    object_bounds_.clear();
    for (const auto& o : objects_) object_bounds_.push_back(bounds(o));

    for (std::size_t u = 0; u < users_.size(); ++u) {
      for (std::size_t l = 0; l < kLimbsPerUser; ++l) {
        const auto& limb = positions_[u][l];
        for (std::size_t oi = 0; oi < objects_.size(); ++oi) {
          if (object_bounds_[oi] && !object_bounds_[oi]->overlaps(limb_bounds_[u][l])) continue;
          const auto& obj = objects_[oi];
          for (std::size_t s = 0; s < kSlotsPerLimb; ++s) {
            auto c = sphere_vs_object(limb[s], obj);
            if (!c) continue;
            const ActuatorRef a{static_cast<std::uint16_t>(u), static_cast<LimbSide>(l), static_cast<std::uint8_t>(s)};
            raw_.push_back({{a, Counterpart::object(obj.id)}, *c, obj.grabbable});
          }
        }
      }
    }

    // Each overlapping sphere pair yields one record per side.
    for (std::size_t ua = 0; ua < users_.size(); ++ua) {
      for (std::size_t la = 0; la < kLimbsPerUser; ++la) {
        for (std::size_t ub = ua; ub < users_.size(); ++ub) {
          for (std::size_t lb = 0; lb < kLimbsPerUser; ++lb) {
            if (ub == ua && (lb <= la || !config_.allow_self_contact)) continue;
            if (!limb_bounds_[ua][la].overlaps(limb_bounds_[ub][lb])) continue;
            pair_limbs(ua, la, ub, lb);
          }
        }
      }
    }
  }

  void pair_limbs(std::size_t ua, std::size_t la, std::size_t ub, std::size_t lb) {
    const auto& A = positions_[ua][la];
    const auto& B = positions_[ub][lb];
    for (std::size_t sa = 0; sa < kSlotsPerLimb; ++sa) {
      for (std::size_t sb = 0; sb < kSlotsPerLimb; ++sb) {
        auto c = sphere_vs_sphere(A[sa], B[sb]);
        if (!c) continue;
        const ActuatorRef a{static_cast<std::uint16_t>(ua), static_cast<LimbSide>(la), static_cast<std::uint8_t>(sa)};
        const ActuatorRef b{static_cast<std::uint16_t>(ub), static_cast<LimbSide>(lb), static_cast<std::uint8_t>(sb)};
        raw_.push_back({{a, Counterpart::avatar(b)}, *c, false});
        RawContact mirrored = *c;
        mirrored.normal = -c->normal;
        raw_.push_back({{b, Counterpart::avatar(a)}, mirrored, false});
      }
    }
  }

  SessionConfig config_;
  DeviceProfile profile_;
  std::mt19937_64 rng_;
  std::vector<UserSlot> users_;
  std::vector<WorldObject> objects_;
  std::vector<GestureScript> gestures_;
  std::multimap<std::uint64_t, GrabInput> grab_inputs_;

  std::vector<UserSpheres> positions_;
  std::vector<UserHaptics> haptic_state_;
  std::vector<UserFlags> driven_;
  std::vector<std::array<Aabb, kLimbsPerUser>> limb_bounds_;
  std::vector<std::optional<Aabb>> object_bounds_;
  std::vector<RawContactRecord> raw_;

  ContactState contact_;
  std::vector<CollisionEvent> last_events_;
  std::vector<ContactKey> last_released_;
  std::uint64_t tick_ = 0;
  std::uint64_t message_count_ = 0;
  std::uint64_t pair_onsets_ = 0;
  std::uint64_t pair_releases_ = 0;
};

// ---- Running a session: pacing, delivery and trace output ----

// Writes trace lines on its own thread so file I/O never stalls the tick loop.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& out) : out_(out), thread_([this] { loop(); }) {}
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;
  ~TraceWriter() { finish(); }

  void push(std::vector<TraceRecord> records) {
    if (records.empty()) return;
    {
      std::lock_guard lock(mu_);
      pending_.push_back(std::move(records));
    }
    cv_.notify_one();
  }

  void finish() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    out_.flush();
  }

 private:
  void loop() {
    for (;;) {
      std::deque<std::vector<TraceRecord>> batch;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !pending_.empty() || closed_; });
        if (pending_.empty() && closed_) return;
        batch.swap(pending_);
      }
      for (const auto& records : batch) {
        for (const auto& r : records) write_trace_record(out_, r);
      }
    }
  }

  std::ostream& out_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<TraceRecord>> pending_;
  bool closed_ = false;
  std::thread thread_;
};

struct RunOptions {
  std::uint64_t ticks = 0;
  // Endpoints per limb. In-process bindings without an entry get a fresh
  // MemoryEndpoint; network bindings must be supplied.
  std::map<EndpointKey, std::shared_ptr<Endpoint>> endpoints;
  std::ostream* trace = nullptr;
  std::string trace_path;  // reported only
};

struct LatencySummary {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;
};

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return v[lo] + (v[hi] - v[lo]) * (rank - static_cast<double>(lo));
}

inline LatencySummary summarize_latency(const std::vector<double>& ms) {
  LatencySummary s;
  s.samples = ms.size();
  if (ms.empty()) return s;
  s.p50_ms = percentile(ms, 50);
  s.p95_ms = percentile(ms, 95);
  s.p99_ms = percentile(ms, 99);
  s.max_ms = *std::max_element(ms.begin(), ms.end());
  return s;
}

struct SessionReport {
  std::uint64_t ticks = 0;
  double elapsed_s = 0.0;
  double achieved_hz = 0.0;
  std::uint64_t message_count = 0;
  std::uint64_t onset_messages = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t failed = 0;
  LatencySummary latency;
  std::map<EndpointKey, EndpointStats> endpoints;
  std::string trace_path;
};

inline nlohmann::ordered_json report_to_json(const SessionReport& r) {
  nlohmann::ordered_json j;
  j["ticks"] = r.ticks;
  j["elapsed_s"] = r.elapsed_s;
  j["achieved_hz"] = r.achieved_hz;
  j["message_count"] = r.message_count;
  j["onset_messages"] = r.onset_messages;
  j["delivered"] = r.delivered;
  j["dropped"] = r.dropped;
  j["failed"] = r.failed;
  j["latency_ms"] = {{"p50", r.latency.p50_ms}, {"p95", r.latency.p95_ms}, {"p99", r.latency.p99_ms},
                     {"max", r.latency.max_ms}, {"samples", r.latency.samples}};
  nlohmann::ordered_json eps = nlohmann::ordered_json::array();
  for (const auto& [key, s] : r.endpoints) {
    eps.push_back({{"user", key.user},
                   {"limb", to_string(key.limb)},
                   {"endpoint", s.name},
                   {"delivered", s.delivered},
                   {"dropped", s.dropped},
                   {"failed", s.failed},
                   {"bytes", s.bytes}});
  }
  j["endpoints"] = eps;
  j["trace_path"] = r.trace_path;
  return j;
}

inline SessionReport run(Session& session, RunOptions options) {
  SessionReport report;
  report.trace_path = options.trace_path;
  if (options.ticks > 0 && session.users().empty()) {
    throw Error(ErrorCode::InvalidConfig, "cannot run a session with no users");
  }

  std::map<EndpointKey, std::unique_ptr<EndpointPump>> pumps;
  for (const auto& u : session.users()) {
    for (LimbSide side : {LimbSide::Left, LimbSide::Right}) {
      const EndpointKey key{u.id, side};
      auto it = options.endpoints.find(key);
      if (it == options.endpoints.end()) {
        if (u.bindings[static_cast<std::size_t>(side)].kind == EndpointBinding::Kind::Network) {
          throw Error(ErrorCode::InvalidConfig, "no connected endpoint for network binding " + to_string(key));
        }
        it = options.endpoints.emplace(key, std::make_shared<MemoryEndpoint>()).first;
      }
      pumps.emplace(key, std::make_unique<EndpointPump>(it->second, session.config().queue_capacity));
    }
  }

  std::optional<TraceWriter> writer;
  if (options.trace != nullptr) {
    write_trace_header(*options.trace, session.trace_header());
    writer.emplace(*options.trace);
  }

  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(session.dt_s()));
  const auto t0 = Clock::now();
  std::vector<OutboundMessage> outbound;
  for (std::uint64_t k = 0; k < options.ticks; ++k) {
    auto out = session.tick();
    const auto produced = Clock::now();
    for (const auto& [key, batch] : out.batches) {
      outbound.clear();
      for (const auto& m : batch) outbound.push_back({m, out.tick, produced});
      pumps.at(key)->push(outbound);
    }
    report.message_count += out.records.size();
    for (const auto& r : out.records) report.onset_messages += r.onset() ? 1 : 0;
    if (writer) writer->push(std::move(out.records));
    if (session.config().real_time) std::this_thread::sleep_until(t0 + period * static_cast<long>(k + 1));
  }
  const auto t1 = Clock::now();
  report.ticks = options.ticks;
  report.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  report.achieved_hz = report.elapsed_s > 0.0 ? static_cast<double>(report.ticks) / report.elapsed_s : 0.0;

  std::vector<double> all_latency;
  for (auto& [key, pump] : pumps) {
    auto stats = pump->finish();
    report.delivered += stats.delivered;
    report.dropped += stats.dropped;
    report.failed += stats.failed;
    all_latency.insert(all_latency.end(), stats.latencies_ms.begin(), stats.latencies_ms.end());
    report.endpoints.emplace(key, std::move(stats));
  }
  report.latency = summarize_latency(all_latency);
  if (writer) writer->finish();
  return report;
}

}  // namespace hapticmesh
