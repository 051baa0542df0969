#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hapticmesh/cli.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  namespace cli = hapticmesh::cli;
  CLI::App app{"hapticmesh: mediated social-touch engine"};
  app.require_subcommand(1);
  int code = cli::kOk;

  cli::SimulateOptions sim;
  std::uint64_t sim_ticks = 0;
  double sim_duration = 0.0;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "run a scenario offline and write a trace");
  simulate->add_option("--scenario", sim.scenario, "scenario JSON")->required();
  simulate->add_option("--out", sim.out, "trace output (JSON lines)")->required();
  auto* ticks_opt = simulate->add_option("--ticks", sim_ticks, "number of ticks");
  auto* dur_opt = simulate->add_option("--duration", sim_duration, "seconds of simulated time");
  ticks_opt->excludes(dur_opt);
  auto* seed_opt = simulate->add_option("--seed", sim_seed, "override the scenario seed");

  cli::DeviceCommandOptions dev;
  std::string dev_role;
  std::string dev_listen;
  std::string dev_profile;
  std::string dev_log;
  double dev_duration = 0.0;
  auto* device = app.add_subcommand("device", "emulate one limb controller");
  device->add_option("--role", dev_role, "left or right")->required()->check(CLI::IsMember({"left", "right"}));
  auto* listen_opt = device->add_option("--listen", dev_listen, "stream listen address (host:port)");
  device->add_option("--discovery", dev.discovery, "discovery bind address")->capture_default_str();
  auto* profile_opt = device->add_option("--profile", dev_profile, "device profile JSON");
  auto* log_opt = device->add_option("--log", dev_log, "duty timeline output (default stdout)");
  auto* dev_dur_opt = device->add_option("--duration", dev_duration, "exit after this many seconds");
  device->add_option("--loop-hz", dev.loop_hz, "render loop rate")->capture_default_str();

  cli::HostOptions hst;
  std::string host_out;
  std::uint64_t host_ticks = 0;
  double host_duration = 0.0;
  auto* host = app.add_subcommand("host", "discover devices and stream a scenario in real time");
  host->add_option("--scenario", hst.scenario, "scenario JSON")->required();
  host->add_option("--broadcast", hst.broadcast, "discovery broadcast address")->capture_default_str();
  host->add_option("--timeout", hst.timeout_ms, "discovery timeout in ms")->capture_default_str();
  auto* host_out_opt = host->add_option("--out", host_out, "optional trace output");
  auto* host_ticks_opt = host->add_option("--ticks", host_ticks, "number of ticks");
  auto* host_dur_opt = host->add_option("--duration", host_duration, "seconds to run");
  host_ticks_opt->excludes(host_dur_opt);

  cli::MetricsOptions met;
  std::string met_csv;
  auto* metrics = app.add_subcommand("metrics", "summarize a trace");
  metrics->add_option("--trace", met.trace, "trace file")->required();
  auto* csv_opt = metrics->add_option("--csv", met_csv, "CSV output");

  cli::ReplayOptions rep;
  std::uint16_t rep_user = 0;
  std::string rep_limb;
  auto* replay = app.add_subcommand("replay", "stream one limb of a trace to a live device");
  replay->add_option("--trace", rep.trace, "trace file")->required();
  replay->add_option("--to", rep.to, "device stream address (host:port)")->required();
  auto* user_opt = replay->add_option("--user", rep_user, "user to replay (default: first record)");
  auto* limb_opt = replay->add_option("--limb", rep_limb, "limb to replay")->check(CLI::IsMember({"left", "right"}));
  replay->add_option("--from-tick", rep.from_tick, "resume from this tick");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? cli::kOk : cli::kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (*simulate) {
    if (*ticks_opt) sim.ticks = sim_ticks;
    if (*dur_opt) sim.duration_s = sim_duration;
    if (*seed_opt) sim.seed = sim_seed;
    code = cli::simulate(sim);
  } else if (*device) {
    dev.role = hapticmesh::limb_side_from_string(dev_role);
    if (*listen_opt) dev.listen = dev_listen;
    if (*profile_opt) dev.profile = dev_profile;
    if (*log_opt) dev.log_path = dev_log;
    if (*dev_dur_opt) dev.duration_s = dev_duration;
    code = cli::device(dev, g_stop);
  } else if (*host) {
    if (*host_out_opt) hst.out = host_out;
    if (*host_ticks_opt) hst.ticks = host_ticks;
    if (*host_dur_opt) hst.duration_s = host_duration;
    code = cli::host(hst);
  } else if (*metrics) {
    if (*csv_opt) met.csv = met_csv;
    code = cli::metrics(met);
  } else if (*replay) {
    if (*user_opt) rep.user = rep_user;
    if (*limb_opt) rep.limb = hapticmesh::limb_side_from_string(rep_limb);
    code = cli::replay(rep);
  }
  return code;
}
