#pragma once

// Subcommand bodies for the hapticmesh executable. Argument parsing lives in
// the tool; these take resolved options and return the process exit code.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticmesh/device.hpp"
#include "hapticmesh/discovery.hpp"
#include "hapticmesh/metrics.hpp"
#include "hapticmesh/scenario.hpp"
#include "hapticmesh/session.hpp"
#include "hapticmesh/trace.hpp"

namespace hapticmesh::cli {

enum Exit : int { kOk = 0, kUsage = 1, kSchema = 2, kRuntime = 3, kCorruptTrace = 4, kConnection = 5 };

inline std::uint64_t fnv1a64(std::istream& in) {
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(in);
  return s.str();
}

inline std::string report_path_for(const std::string& trace_path) { return trace_path + ".report.json"; }

inline std::uint64_t resolve_ticks(const Scenario& sc, const Session& session, std::optional<std::uint64_t> ticks,
                                   std::optional<double> duration_s) {
  if (ticks) return *ticks;
  if (duration_s) {
    if (!(*duration_s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "duration must be >= 0");
    return static_cast<std::uint64_t>(std::llround(*duration_s * sc.session.tick_rate_hz));
  }
  return default_ticks(sc, session);
}

// ---- simulate ----

struct SimulateOptions {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> ticks;
  std::optional<double> duration_s;
  std::optional<std::uint64_t> seed;
};

inline int simulate(const SimulateOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Scenario sc;
  try {
    sc = load_scenario(opt.scenario);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kSchema;
  }
  try {
    if (opt.seed) sc.session.seed = *opt.seed;
    auto session = make_session(sc);
    const auto ticks = resolve_ticks(sc, session, opt.ticks, opt.duration_s);

    // Offline runs deliver to in-process sinks whatever the bindings say.
    RunOptions run_opt;
    run_opt.ticks = ticks;
    run_opt.trace_path = opt.out;
    for (const auto& u : session.users()) {
      for (LimbSide side : {LimbSide::Left, LimbSide::Right}) {
        run_opt.endpoints[{u.id, side}] = std::make_shared<MemoryEndpoint>();
      }
    }
    std::ofstream trace(opt.out, std::ios::binary | std::ios::trunc);
    if (!trace) throw Error(ErrorCode::InvalidConfig, "cannot write trace \"" + opt.out + "\"");
    run_opt.trace = &trace;
    const auto report = run(session, std::move(run_opt));
    trace.close();

    std::ofstream side(report_path_for(opt.out), std::ios::trunc);
    side << report_to_json(report).dump(2) << "\n";

    out << "ticks        " << report.ticks << "\n"
        << "messages     " << report.message_count << "\n"
        << "onsets       " << report.onset_messages << "\n"
        << "gestures     " << session.gestures().size() << "\n"
        << "achieved hz  " << report.achieved_hz << "\n"
        << "trace        " << opt.out << "\n"
        << "checksum     " << file_checksum(opt.out) << "\n";
    return kOk;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::SchemaError ? kSchema : kRuntime;
  }
}

// ---- device ----

struct DeviceCommandOptions {
  LimbSide role = LimbSide::Left;
  std::optional<std::string> listen;
  std::string discovery = "0.0.0.0:47001";
  std::optional<std::string> profile;
  std::optional<std::string> log_path;  // duty timeline JSONL; stdout when absent
  std::optional<double> duration_s;     // run until stopped when absent
  double loop_hz = 120.0;
};

inline int device(const DeviceCommandOptions& opt, const std::atomic<bool>& stop, std::ostream& out = std::cout,
                  std::ostream& err = std::cerr) {
  DeviceOptions d;
  try {
    d.role = opt.role;
    d.loop_hz = opt.loop_hz;
    d.stream_listen = net::parse_endpoint(opt.listen.value_or("0.0.0.0"), default_stream_port(opt.role));
    d.discovery = net::parse_endpoint(opt.discovery, wire::kDiscoveryPort);
    if (opt.profile) {
      std::ifstream in(*opt.profile);
      if (!in) throw Error(ErrorCode::SchemaError, "cannot open profile \"" + *opt.profile + "\"");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("profile is not valid JSON: ") + e.what());
      }
      d.profile = profile_from_json(j);
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::SchemaError ? kSchema : kUsage;
  }

  std::ofstream log_file;
  std::ostream* log = &out;
  if (opt.log_path) {
    log_file.open(*opt.log_path, std::ios::trunc);
    log = &log_file;
  }
  try {
    DeviceEmulator dev(d);
    dev.set_log_stream(log);
    dev.start();
    err << "device " << to_string(opt.role) << " streaming on port " << dev.stream_port() << "\n";
    const auto t0 = std::chrono::steady_clock::now();
    while (!stop.load()) {
      if (opt.duration_s && std::chrono::steady_clock::now() - t0 >= std::chrono::duration<double>(*opt.duration_s)) {
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    dev.stop();
    const auto s = dev.stats();
    err << "frames " << s.frames << " protocol_errors " << s.protocol_errors << " connections " << s.connections
        << " announces " << s.announces << "\n";
    return kOk;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kRuntime;
  }
}

// ---- host ----

struct HostOptions {
  std::string scenario;
  std::string broadcast = "127.255.255.255:47001";
  int timeout_ms = 2000;
  std::optional<std::string> out;  // trace path
  std::optional<std::uint64_t> ticks;
  std::optional<double> duration_s;
};

inline int host(const HostOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Scenario sc;
  try {
    sc = load_scenario(opt.scenario);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kSchema;
  }
  try {
    // Limbs bound to "network" are found by role; explicit addresses are dialled directly.
    std::map<LimbSide, EndpointKey> by_role;
    std::map<EndpointKey, net::Endpoint> direct;
    for (std::size_t u = 0; u < sc.users.size(); ++u) {
      for (LimbSide side : {LimbSide::Left, LimbSide::Right}) {
        const auto& b = sc.users[u].limbs[static_cast<std::size_t>(side)].binding;
        if (b.kind != EndpointBinding::Kind::Network) continue;
        const EndpointKey key{static_cast<std::uint16_t>(u), side};
        if (b.address.port != 0) {
          direct.emplace(key, b.address);
        } else if (!by_role.emplace(side, key).second) {
          throw Error(ErrorCode::SchemaError, "only one limb per role can be found by discovery");
        }
      }
    }
    if (by_role.empty() && direct.empty()) {
      throw Error(ErrorCode::SchemaError, "host needs at least one limb bound to a network endpoint");
    }

    std::map<EndpointKey, std::shared_ptr<Endpoint>> endpoints;
    if (!by_role.empty()) {
      DiscoveryOptions dopt;
      dopt.broadcast = net::parse_endpoint(opt.broadcast, wire::kDiscoveryPort);
      dopt.timeout = std::chrono::milliseconds(opt.timeout_ms);
      dopt.expected.clear();
      for (const auto& [role, _] : by_role) dopt.expected.push_back(role);
      auto found = run_discovery(dopt);
      out << "discovery registry\n";
      for (const auto& [role, entry] : found.registry.entries()) {
        out << "  " << to_string(role) << " " << entry.stream.str() << " " << to_string(entry.state) << "\n";
      }
      if (!found.complete()) {
        for (LimbSide r : found.missing) err << "missing device: " << to_string(r) << "\n";
        return kRuntime;
      }
      for (const auto& [role, key] : by_role) {
        auto it = found.streams.find(role);
        if (it == found.streams.end()) {
          err << "could not connect to the " << to_string(role) << " device\n";
          return kConnection;
        }
        endpoints[key] = std::make_shared<StreamEndpoint>(std::move(it->second), std::string(to_string(role)));
      }
    }
    for (const auto& [key, addr] : direct) {
      try {
        endpoints[key] = std::make_shared<StreamEndpoint>(net::TcpStream::connect(addr, std::chrono::milliseconds(1000)),
                                                          addr.str());
      } catch (const Error& e) {
        err << e.what() << "\n";
        return kConnection;
      }
    }

    sc.session.real_time = true;
    auto session = make_session(sc);
    RunOptions run_opt;
    run_opt.ticks = resolve_ticks(sc, session, opt.ticks, opt.duration_s);
    run_opt.endpoints = endpoints;
    std::ofstream trace;
    if (opt.out) {
      trace.open(*opt.out, std::ios::binary | std::ios::trunc);
      run_opt.trace = &trace;
      run_opt.trace_path = *opt.out;
    }
    const auto report = run(session, std::move(run_opt));
    if (opt.out) {
      trace.close();
      std::ofstream side(report_path_for(*opt.out), std::ios::trunc);
      side << report_to_json(report).dump(2) << "\n";
    }

    out << "ticks " << report.ticks << " achieved_hz " << report.achieved_hz << " messages " << report.message_count
        << "\n";
    out << "latency ms p50 " << report.latency.p50_ms << " p95 " << report.latency.p95_ms << " p99 "
        << report.latency.p99_ms << "\n";
    for (const auto& [key, s] : report.endpoints) {
      if (!endpoints.contains(key)) continue;
      out << "  " << to_string(key) << " via " << s.name << ": delivered " << s.delivered << " dropped " << s.dropped
          << " failed " << s.failed << " bytes " << s.bytes << "\n";
    }
    return report.failed == 0 ? kOk : kConnection;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::SchemaError ? kSchema : kRuntime;
  }
}

// ---- metrics ----

struct MetricsOptions {
  std::string trace;
  std::optional<std::string> csv;
};

inline int metrics(const MetricsOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::ifstream in(opt.trace);
  if (!in) {
    err << "cannot open trace \"" << opt.trace << "\"\n";
    return kCorruptTrace;
  }
  try {
    const auto trace = read_trace(in);
    std::optional<nlohmann::json> sidecar;
    if (std::ifstream side(report_path_for(opt.trace)); side) {
      try {
        sidecar = nlohmann::json::parse(side);
      } catch (const nlohmann::json::exception&) {
        err << "ignoring unreadable run report next to the trace\n";
      }
    }
    const auto report = compute_metrics(trace, sidecar ? &*sidecar : nullptr);
    print_metrics(out, report);
    if (opt.csv) {
      std::ofstream csv(*opt.csv, std::ios::trunc);
      write_metrics_csv(csv, report);
    }
    return kOk;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::TraceCorrupt ? kCorruptTrace : kRuntime;
  }
}

// ---- replay ----

struct ReplayOptions {
  std::string trace;
  std::string to;
  std::optional<std::uint16_t> user;  // default: the first record's user and limb
  std::optional<LimbSide> limb;
  std::uint64_t from_tick = 0;  // resume point after a lost connection
};

struct ReplayResult {
  std::uint64_t messages = 0;
  std::uint64_t batches = 0;
  std::optional<std::uint64_t> last_tick_sent;
  LatencySummary jitter;  // |actual - scheduled| per batch, ms
};

// Streams one limb's recorded messages, one write per recorded tick, at the
// recorded spacing.
inline ReplayResult replay_trace(const Trace& trace, const ReplayOptions& opt, net::TcpStream& stream) {
  ReplayResult res;
  std::optional<std::uint16_t> user = opt.user;
  std::optional<LimbSide> limb = opt.limb;
  for (const auto& r : trace.records) {
    if (r.tick < opt.from_tick) continue;
    if (!user) user = r.user;
    if (!limb) limb = r.limb;
    break;
  }
  std::vector<const TraceRecord*> selected;
  for (const auto& r : trace.records) {
    if (r.tick >= opt.from_tick && r.user == user && r.limb == limb) selected.push_back(&r);
  }
  if (selected.empty()) return res;

  std::vector<double> jitter;
  std::vector<std::uint8_t> buf;
  const double t_first = selected.front()->time_s;
  const auto t0 = Clock::now() + std::chrono::milliseconds(5);
  std::size_t i = 0;
  while (i < selected.size()) {
    const auto tick = selected[i]->tick;
    const auto due = t0 + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double>(selected[i]->time_s - t_first));
    buf.clear();
    std::size_t n = 0;
    for (; i < selected.size() && selected[i]->tick == tick; ++i, ++n) {
      wire::append_frame(buf, wire::encode_collision(selected[i]->message()));
    }
    std::this_thread::sleep_until(due);
    const auto sent_at = Clock::now();
    try {
      stream.write_all(buf);
    } catch (const Error& e) {
      const std::string where = res.last_tick_sent ? std::to_string(*res.last_tick_sent) : std::string("none");
      throw Error(ErrorCode::ConnectionError, std::string(e.what()) + "; last tick sent " + where);
    }
    jitter.push_back(std::abs(std::chrono::duration<double, std::milli>(sent_at - due).count()));
    res.messages += n;
    ++res.batches;
    res.last_tick_sent = tick;
  }
  res.jitter = summarize_latency(jitter);
  return res;
}

inline int replay(const ReplayOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Trace trace;
  {
    std::ifstream in(opt.trace);
    if (!in) {
      err << "cannot open trace \"" << opt.trace << "\"\n";
      return kCorruptTrace;
    }
    try {
      trace = read_trace(in);
    } catch (const Error& e) {
      err << e.what() << "\n";
      return kCorruptTrace;
    }
  }
  try {
    auto stream = net::TcpStream::connect(net::parse_endpoint(opt.to), std::chrono::milliseconds(1000));
    const auto res = replay_trace(trace, opt, stream);
    stream.shutdown();
    out << "messages " << res.messages << " batches " << res.batches << "\n";
    out << "timing jitter ms p50 " << res.jitter.p50_ms << " p95 " << res.jitter.p95_ms << " max " << res.jitter.max_ms
        << "\n";
    return kOk;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::ConnectionError ? kConnection : kRuntime;
  }
}

}  // namespace hapticmesh::cli
