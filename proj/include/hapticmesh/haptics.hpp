#pragma once

// Device-side rendering of collision messages. A DeviceProfile describes how
// one class of device turns the same wire data into drive commands.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include <nlohmann/json.hpp>

#include "hapticmesh/error.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/wire.hpp"

namespace hapticmesh {

enum class Capability { Vibrotactile, ForceCapable };

// Duty cycles in percent. avatar_max_duty caps contact with another avatar.
struct DutyRange {
  double min_duty = 0.0;
  double max_duty = 0.0;
  double avatar_max_duty = 0.0;
};

struct DeviceProfile {
  Capability capability = Capability::Vibrotactile;
  DutyRange hand{12.0, 25.0, 24.0};
  DutyRange forearm{24.0, 50.0, 50.0};
  double click_duty = 100.0;
  double click_duration_ms = 40.0;
  double grab_ramp_duration_ms = 300.0;
  int pwm_bits = 12;
  double force_gain_n_per_m = 200.0;  // ForceCapable only

  [[nodiscard]] const DutyRange& range_for(Region region) const { return is_hand(region) ? hand : forearm; }
};

inline void validate(const DeviceProfile& p) {
  auto check_range = [&](const DutyRange& r, const char* name) {
    if (!(r.min_duty > 0.0 && r.min_duty < r.max_duty && r.max_duty <= 100.0)) {
      throw Error(ErrorCode::InvalidConfig, std::string(name) + " duty range must satisfy 0 < min < max <= 100");
    }
    if (!(r.avatar_max_duty > r.min_duty && r.avatar_max_duty <= 100.0)) {
      throw Error(ErrorCode::InvalidConfig, std::string(name) + " avatar_max_duty must lie in (min, 100]");
    }
    if (p.click_duty < std::max(r.max_duty, r.avatar_max_duty)) {
      throw Error(ErrorCode::InvalidConfig, "click duty must be at least every region maximum");
    }
  };
  check_range(p.hand, "hand");
  check_range(p.forearm, "forearm");
  if (p.click_duty > 100.0) throw Error(ErrorCode::InvalidConfig, "click duty above 100%");
  if (!(p.click_duration_ms > 0.0) || !(p.grab_ramp_duration_ms > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "click and grab-ramp durations must be positive");
  }
  if (p.pwm_bits < 1 || p.pwm_bits > 16) throw Error(ErrorCode::InvalidConfig, "pwm_bits must be in 1..16");
  if (!(p.force_gain_n_per_m >= 0.0)) throw Error(ErrorCode::InvalidConfig, "force gain must be >= 0");
}

inline constexpr const char* kProfileSchema = "hapticmesh.device_profile";
inline constexpr int kProfileVersion = 1;

inline nlohmann::json profile_to_json(const DeviceProfile& p) {
  auto range = [](const DutyRange& r) {
    return nlohmann::json{{"min_duty", r.min_duty}, {"max_duty", r.max_duty}, {"avatar_max_duty", r.avatar_max_duty}};
  };
  return {{"schema", kProfileSchema},
          {"version", kProfileVersion},
          {"capability", p.capability == Capability::Vibrotactile ? "vibrotactile" : "force"},
          {"hand", range(p.hand)},
          {"forearm", range(p.forearm)},
          {"click", {{"duty", p.click_duty}, {"duration_ms", p.click_duration_ms}}},
          {"grab_ramp", {{"duration_ms", p.grab_ramp_duration_ms}}},
          {"pwm_bits", p.pwm_bits},
          {"force_gain_n_per_m", p.force_gain_n_per_m}};
}

inline DeviceProfile profile_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", std::string(kProfileSchema)) != kProfileSchema) {
      throw Error(ErrorCode::SchemaError, "not a device profile document");
    }
    if (j.value("version", kProfileVersion) != kProfileVersion) {
      throw Error(ErrorCode::SchemaError, "device profile version " + j.at("version").dump() + " is not supported");
    }
    DeviceProfile p;
    if (j.contains("capability")) {
      const auto cap = j.at("capability").get<std::string>();
      if (cap == "vibrotactile") {
        p.capability = Capability::Vibrotactile;
      } else if (cap == "force") {
        p.capability = Capability::ForceCapable;
      } else {
        throw Error(ErrorCode::SchemaError, "capability must be \"vibrotactile\" or \"force\"");
      }
    }
    auto range = [&](const char* key, DutyRange& r) {
      if (!j.contains(key)) return;
      const auto& o = j.at(key);
      r.min_duty = o.value("min_duty", r.min_duty);
      r.max_duty = o.value("max_duty", r.max_duty);
      r.avatar_max_duty = o.value("avatar_max_duty", std::min(r.avatar_max_duty, r.max_duty));
    };
    range("hand", p.hand);
    range("forearm", p.forearm);
    if (j.contains("click")) {
      p.click_duty = j.at("click").value("duty", p.click_duty);
      p.click_duration_ms = j.at("click").value("duration_ms", p.click_duration_ms);
    }
    if (j.contains("grab_ramp")) p.grab_ramp_duration_ms = j.at("grab_ramp").value("duration_ms", p.grab_ramp_duration_ms);
    p.pwm_bits = j.value("pwm_bits", p.pwm_bits);
    p.force_gain_n_per_m = j.value("force_gain_n_per_m", p.force_gain_n_per_m);
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("device profile: ") + e.what());
  }
}

// ---- commands ----

struct ClickPulse {
  double duty = 100.0;
  double duration_ms = 0.0;
};
struct Continuous {
  double duty = 0.0;
};
struct Ramp {
  double from_duty = 0.0;
  double to_duty = 0.0;
  double duration_ms = 0.0;
};
struct Off {};

using HapticCommand = std::variant<ClickPulse, Continuous, Ramp, Off>;

struct RampProgress {
  Ramp ramp;
  double elapsed_ms = 0.0;

  [[nodiscard]] double value() const {
    if (elapsed_ms >= ramp.duration_ms - 1e-9) return ramp.to_duty;
    const double t = elapsed_ms / ramp.duration_ms;
    return ramp.from_duty + (ramp.to_duty - ramp.from_duty) * t;
  }
};

// Per-actuator envelope state. At most one ramp; a click overrides the output
// for its duration but does not cancel the underlying continuous/ramp drive.
struct ActuatorRuntimeState {
  double current_duty = 0.0;
  double base_duty = 0.0;
  double click_duty = 0.0;
  double click_remaining_ms = 0.0;
  std::optional<RampProgress> ramp;
};

// Affine in PDI: region minimum at PDI = D, region maximum at PDI = 0.
inline double continuous_duty(const wire::CollisionMessage& msg, const DeviceProfile& profile) {
  const DutyRange& r = profile.range_for(region_of_slot(msg.actuator_id));
  const double top = msg.avatar_contact ? r.avatar_max_duty : r.max_duty;
  const double drive = 1.0 - static_cast<double>(msg.pdi_q) / static_cast<double>(msg.d_q);
  return r.min_duty + (top - r.min_duty) * drive;
}

inline HapticCommand decode_to_command(const wire::CollisionMessage& msg, const DeviceProfile& profile,
                                       const ActuatorRuntimeState& state) {
  wire::check_invariants(msg, ErrorCode::ProtocolError);
  if (msg.onset) return ClickPulse{profile.click_duty, profile.click_duration_ms};
  if (msg.grabbed) {
    const double floor = profile.range_for(region_of_slot(msg.actuator_id)).min_duty;
    double from = state.ramp ? state.ramp->value() : state.base_duty;
    if (from <= 0.0) from = continuous_duty(msg, profile);
    return Ramp{std::max(from, floor), floor, profile.grab_ramp_duration_ms};
  }
  return Continuous{continuous_duty(msg, profile)};
}

// Advances one actuator by dt and returns the duty it outputs for that step.
// No command means no contact this step: the drive stops, a running click finishes.
inline std::pair<ActuatorRuntimeState, double> advance_actuator(const ActuatorRuntimeState& state,
                                                                const std::optional<HapticCommand>& cmd,
                                                                double dt_ms) {
  ActuatorRuntimeState next = state;
  if (!cmd) {
    next.base_duty = 0.0;
    next.ramp.reset();
  } else {
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, ClickPulse>) {
            next.click_duty = c.duty;
            next.click_remaining_ms = c.duration_ms;
          } else if constexpr (std::is_same_v<T, Continuous>) {
            next.base_duty = c.duty;
            next.ramp.reset();
          } else if constexpr (std::is_same_v<T, Ramp>) {
            if (!next.ramp || next.ramp->ramp.to_duty != c.to_duty) next.ramp = RampProgress{c, 0.0};
          } else {
            next.base_duty = 0.0;
            next.ramp.reset();
            next.click_remaining_ms = 0.0;
          }
        },
        *cmd);
  }

  double out = next.base_duty;
  if (next.ramp) {
    out = next.ramp->value();
    next.base_duty = out;
  }
  if (next.click_remaining_ms > 1e-9) {
    out = next.click_duty;
    next.click_remaining_ms = std::max(0.0, next.click_remaining_ms - dt_ms);
  }
  if (next.ramp) next.ramp->elapsed_ms += dt_ms;
  next.current_duty = out;
  return {next, out};
}

inline int duty_to_pwm(double duty, int pwm_bits = 12) {
  if (!(duty >= 0.0 && duty <= 100.0)) throw Error(ErrorCode::OutOfRange, "duty must lie in [0, 100]");
  if (pwm_bits < 1 || pwm_bits > 16) throw Error(ErrorCode::OutOfRange, "pwm_bits must lie in 1..16");
  const double full_scale = static_cast<double>((1 << pwm_bits) - 1);
  return static_cast<int>(std::lround(duty / 100.0 * full_scale));
}

struct ForceCommand {
  Vec3 direction = Vec3::Zero();  // unit, or zero when the message carries no normal
  double magnitude_n = 0.0;

  [[nodiscard]] Vec3 vector() const { return direction * magnitude_n; }
};

// Force devices read the same message as a spring: magnitude k * (D - PDI).
inline ForceCommand render_force(const wire::CollisionMessage& msg, const DeviceProfile& profile) {
  if (profile.capability != Capability::ForceCapable) {
    throw Error(ErrorCode::CapabilityMismatch, "profile is not force-capable");
  }
  wire::check_invariants(msg, ErrorCode::ProtocolError);
  ForceCommand f;
  const Vec3 n = msg.normal();
  if (n.norm() > 0.0) f.direction = n.normalized();
  f.magnitude_n = profile.force_gain_n_per_m * (msg.d_m() - msg.pdi_m());
  return f;
}

}  // namespace hapticmesh
