#include "fieldev/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "fieldev/binary_io.hpp"
#include "fieldev/config.hpp"
#include "fieldev/errors.hpp"
#include "fieldev/nn/checkpoint.hpp"
#include "fieldev/ppo.hpp"
#include "fieldev/psomads.hpp"

namespace fieldev {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

// Exclusive ownership of an output directory for the lifetime of a run.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".fieldev.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      throw LifecycleError("output directory " + dir.string() +
                           " is locked by another run (remove " + path_.string() +
                           " if that run is gone)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~OutputLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

const char* decision_name(int d) {
  switch (d) {
    case 0: return "producer";
    case 2: return "injector";
    default: return "nothing";
  }
}

json well_json(const Well& w, const GridGeometry& g) {
  return {{"kind", to_string(w.kind)},
          {"i", w.cell.i},
          {"j", w.cell.j},
          {"location", g.index(w.cell.i, w.cell.j)},
          {"stage", w.stage + 1}};
}

json wells_json(const SimState& s, const GridGeometry& g) {
  json arr = json::array();
  for (const auto& w : s.wells) arr.push_back(well_json(w, g));
  return arr;
}

json action_json(const Action& a, const GridGeometry& g) {
  const auto c = decode_location(a.location, g);
  return {{"decision", a.decision}, {"decision_name", decision_name(a.decision)},
          {"location", a.location}, {"i", c.i}, {"j", c.j}};
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

void write_grid_csv(const fs::path& path, const std::vector<double>& values, const GridGeometry& g) {
  std::ostringstream os;
  os << std::setprecision(12);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) os << (i ? "," : "") << values[g.index(i, j)];
    os << '\n';
  }
  write_text(path, os.str());
}

std::vector<double> well_mask(const SimState& s, const GridGeometry& g) {
  std::vector<double> m(static_cast<std::size_t>(g.cell_count()), 0.0);
  for (const auto& w : s.wells) m[g.index(w.cell.i, w.cell.j)] = w.kind == WellKind::Producer ? -1 : 1;
  return m;
}

void write_state_maps(const fs::path& dir, const SimState& s, const GridGeometry& g) {
  write_grid_csv(dir / "final_pressure.csv", s.pressure, g);
  write_grid_csv(dir / "final_saturation.csv", s.sw, g);
  write_grid_csv(dir / "final_wells.csv", well_mask(s, g), g);
}

std::vector<Action> read_schedule(const fs::path& path, int stages, const GridGeometry& g) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schedule file " + path.string());
  std::vector<Action> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream is(line);
    std::string first;
    if (!(is >> first)) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    Action a;
    std::string rest;
    try {
      std::size_t used = 0;
      a.decision = std::stoi(first, &used);
      if (used != first.size()) throw std::invalid_argument("");
      std::string loc;
      if (!(is >> loc)) throw ConfigError(where + "expected 'decision location'");
      a.location = std::stoi(loc, &used);
      if (used != loc.size()) throw std::invalid_argument("");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(where + "expected two integers 'decision location'");
    }
    if (is >> rest) throw ConfigError(where + "unexpected trailing text '" + rest + "'");
    if (a.decision < 0 || a.decision > 2) throw ConfigError(where + "decision must be 0, 1 or 2");
    if (a.location < 0 || a.location >= g.cell_count())
      throw ConfigError(where + "location outside [0, " + std::to_string(g.cell_count()) + ")");
    out.push_back(a);
  }
  if (static_cast<int>(out.size()) != stages) {
    throw ConfigError(path.string() + ": schedule has " + std::to_string(out.size()) +
                      " actions, the environment has " + std::to_string(stages) + " stages");
  }
  return out;
}

std::map<int, Action> parse_forced(const std::vector<std::string>& specs, const GridGeometry& g) {
  std::map<int, Action> out;
  for (const auto& s : specs) {
    int stage = 0;
    Action a;
    char c1 = 0, c2 = 0;
    std::istringstream is(s);
    std::string rest;
    if (!(is >> stage >> c1 >> a.decision >> c2 >> a.location) || c1 != ':' || c2 != ':' || (is >> rest)) {
      throw ConfigError("malformed --force '" + s + "', expected stage:decision:location");
    }
    if (a.decision < 0 || a.decision > 2) throw ConfigError("--force '" + s + "': decision must be 0, 1 or 2");
    if (a.location < 0 || a.location >= g.cell_count())
      throw ConfigError("--force '" + s + "': location out of range");
    if (!out.emplace(stage - 1, a).second) throw ConfigError("--force: stage " + std::to_string(stage) + " given twice");
  }
  return out;
}

json rollout_json(const PolicyRollout& r, const GridGeometry& g) {
  json stages = json::array();
  for (std::size_t k = 0; k < r.stages.size(); ++k) {
    const auto& st = r.stages[k];
    json row = action_json(st.action, g);
    row["stage"] = k + 1;
    row["reward"] = st.reward;
    row["forced"] = st.forced;
    row["collided"] = st.collided;
    if (st.forced) row["policy_action"] = action_json(st.policy_action, g);
    stages.push_back(row);
  }
  return {{"npv", r.npv}, {"stages", stages}, {"wells", wells_json(r.final_state, g)}};
}

void write_rollout_csv(const fs::path& path, const PolicyRollout& r) {
  std::ostringstream os;
  os << "stage,decision,location,reward,cumulative_npv,forced,policy_decision,policy_location\n";
  double cum = 0;
  for (std::size_t k = 0; k < r.stages.size(); ++k) {
    const auto& st = r.stages[k];
    cum += st.reward;
    os << k + 1 << ',' << st.action.decision << ',' << st.action.location << ',' << fmt(st.reward)
       << ',' << fmt(cum) << ',' << (st.forced ? 1 : 0) << ',' << st.policy_action.decision << ','
       << st.policy_action.location << '\n';
  }
  write_text(path, os.str());
}

json fdo_json(const FdoResult& r, const GridGeometry& g) {
  json schedule = json::array();
  for (std::size_t k = 0; k < r.schedule.size(); ++k) {
    json row = action_json(r.schedule[k], g);
    row["stage"] = k + 1;
    row["reward"] = r.best.rewards[k];
    schedule.push_back(row);
  }
  return {{"npv", r.npv},
          {"vector", r.run.best},
          {"schedule", schedule},
          {"wells", wells_json(r.best.final_state, g)},
          {"simulations", r.run.evaluations},
          {"pso_iterations", r.run.pso_iterations},
          {"mads_phases", r.run.mads_phases}};
}

struct Context {
  RunConfig config;
  EnvConfig env;
  fs::path dir;
  json meta;
  std::ostream& out;
};

using Command = std::function<void(Context&)>;

int run_command(const std::string& name, const std::string& config_path,
                const std::string& output_override, std::ostream& out, const Command& body,
                const std::function<void(RunConfig&)>& adjust = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  RunConfig cfg = load_run_config(config_path);
  if (!output_override.empty()) cfg.output_dir = output_override;
  if (adjust) adjust(cfg);
  fs::create_directories(cfg.output_dir);
  OutputLock lock(cfg.output_dir);
  write_text(cfg.output_dir / "resolved-config.ini", resolved_config(cfg));
  Context ctx{cfg, cfg.make_env(), cfg.output_dir, json::object(), out};
  ctx.meta["command"] = name;
  ctx.meta["config"] = config_path;
  ctx.meta["started_utc"] = started;
  body(ctx);
  ctx.meta["finished_utc"] = utc_now();
  ctx.meta["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.meta["ppo_workers"] = effective_workers(cfg.ppo.workers);
  ctx.meta["psomads_workers"] = effective_workers(cfg.psomads.workers);
  write_json(ctx.dir / "metadata.json", ctx.meta);
  return kExitOk;
}

void cmd_simulate(Context& c, const fs::path& schedule_path) {
  const auto& g = c.env.model->geometry();
  const auto schedule = read_schedule(schedule_path, c.env.stages, g);
  auto counter = std::make_shared<SimulationCounter>();
  const auto r = run_schedule(schedule, c.env, counter);

  std::ostringstream csv;
  csv << "stage,decision,location,reward,cumulative_npv,wells_drilled,volume_balance_error\n";
  double cum = 0;
  json stages = json::array();
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& st = r.steps[k];
    cum += st.reward;
    csv << k + 1 << ',' << schedule[k].decision << ',' << schedule[k].location << ','
        << fmt(st.reward) << ',' << fmt(cum) << ',' << st.info.wells_total << ','
        << fmt(st.info.volume_balance_error) << '\n';
    json row = action_json(schedule[k], g);
    row["stage"] = k + 1;
    row["npv"] = st.reward;
    row["collided"] = st.info.collided;
    stages.push_back(row);
  }
  write_text(c.dir / "episode.csv", csv.str());
  json result = {{"npv", r.npv}, {"stages", stages}, {"wells", wells_json(r.final_state, g)}};
  write_json(c.dir / "npv.json", result);
  write_state_maps(c.dir, r.final_state, g);
  c.out << "NPV " << fmt(r.npv) << " USD, " << r.final_state.wells.size() << " wells\n";
}

void cmd_train(Context& c, bool resume) {
  const auto& g = c.env.model->geometry();
  nn::Network net(c.config.network, g.nx, g.ny);
  TrainOptions opt;
  opt.iterations = c.config.iterations;
  opt.output_dir = c.dir;
  opt.checkpoint_every = c.config.checkpoint_every;
  opt.resume = resume;
  opt.init_seed = c.config.network_seed;
  opt.stop = &g_stop;
  opt.on_iteration = [&](const CurveRow& r) {
    c.out << "iter " << r.iteration << "  mean_npv " << fmt(r.mean_npv) << "  max_npv "
          << fmt(r.max_npv) << "  entropy " << fmt(r.entropy) << "  sims " << r.sims_total
          << std::endl;
  };
  g_stop.store(false);
  auto previous = std::signal(SIGINT, on_sigint);
  TrainResult r;
  try {
    r = train(net, c.env, c.config.ppo, opt);
  } catch (...) {
    std::signal(SIGINT, previous);
    throw;
  }
  std::signal(SIGINT, previous);
  c.meta["iterations_done"] = r.iterations_done;
  c.meta["interrupted"] = r.interrupted;
  if (r.interrupted) c.out << "interrupted; checkpoint saved after iteration " << r.iterations_done << "\n";
}

void cmd_optimize(Context& c) {
  const auto& g = c.env.model->geometry();
  const int runs = c.config.runs;
  json summary = {{"runs", json::array()}};
  double best_npv = -std::numeric_limits<double>::infinity();
  int best_run = 0;
  for (int run = 1; run <= runs; ++run) {
    HybridConfig h = c.config.psomads;
    h.seed = c.config.psomads.seed + static_cast<std::uint64_t>(run - 1);
    const auto r = optimize_schedule(c.env, h);
    const std::string suffix = runs == 1 ? "" : "_run" + std::to_string(run);
    write_json(c.dir / ("best" + suffix + ".json"), fdo_json(r, g));
    write_evaluation_log(c.dir / ("evaluations" + suffix + ".csv"), r.run.log, r.run.best.size());
    summary["runs"].push_back({{"run", run}, {"seed", h.seed}, {"npv", r.npv},
                               {"simulations", r.run.evaluations},
                               {"file", "best" + suffix + ".json"}});
    if (r.npv > best_npv) {
      best_npv = r.npv;
      best_run = run;
    }
    c.out << "run " << run << ": best NPV " << fmt(r.npv) << " USD after " << r.run.evaluations
          << " simulations\n";
  }
  summary["best_run"] = best_run;
  summary["best_npv"] = best_npv;
  write_json(c.dir / "summary.json", summary);
}

nn::ParamSet load_policy(const nn::Network& net, const fs::path& path) {
  try {
    return nn::load_checkpoint(path, net).params;
  } catch (const IntegrityError& e) {
    throw ConfigError(std::string(e.what()) + " [" + path.string() + "]");
  }
}

void cmd_evaluate(Context& c, const fs::path& ckpt, const std::vector<std::string>& force) {
  const auto& g = c.env.model->geometry();
  nn::Network net(c.config.network, g.nx, g.ny);
  const auto params = load_policy(net, ckpt);
  const auto forced = parse_forced(force, g);
  for (const auto& [stage, a] : forced)
    if (stage < 0 || stage >= c.env.stages)
      throw ConfigError("--force stage " + std::to_string(stage + 1) + " outside 1.." + std::to_string(c.env.stages));
  const auto r = greedy_rollout(net, params, c.env, forced, c.config.ppo.location_always_on);
  write_json(c.dir / "evaluation.json", rollout_json(r, g));
  write_rollout_csv(c.dir / "evaluation.csv", r);
  write_state_maps(c.dir, r.final_state, g);
  c.out << "NPV " << fmt(r.npv) << " USD, " << r.final_state.wells.size() << " wells\n";
}

void cmd_compare(Context& c, const fs::path& ckpt) {
  const auto& g = c.env.model->geometry();
  nn::Network net(c.config.network, g.nx, g.ny);
  const auto params = load_policy(net, ckpt);
  auto counter = std::make_shared<SimulationCounter>();

  const auto t0 = std::chrono::steady_clock::now();
  const auto policy = greedy_rollout(net, params, c.env, {}, c.config.ppo.location_always_on, counter);
  const auto t1 = std::chrono::steady_clock::now();
  const std::uint64_t ppo_sims = counter->episodes();
  const std::uint64_t ppo_stages = counter->stage_advances();
  const auto fdo = optimize_schedule(c.env, c.config.psomads, counter);
  const auto t2 = std::chrono::steady_clock::now();
  const std::uint64_t pso_sims = counter->episodes() - ppo_sims;

  std::ostringstream csv;
  csv << "method,npv,wells,simulations,counter_reading\n";
  csv << "ppo_greedy," << fmt(policy.npv) << ',' << policy.final_state.wells.size() << ','
      << ppo_sims << ',' << ppo_sims << '\n';
  csv << "pso_mads," << fmt(fdo.npv) << ',' << fdo.best.final_state.wells.size() << ',' << pso_sims
      << ',' << ppo_sims + pso_sims << '\n';
  write_text(c.dir / "comparison.csv", csv.str());
  json report = {{"ppo_greedy", rollout_json(policy, g)}, {"pso_mads", fdo_json(fdo, g)}};
  report["ppo_greedy"]["simulations"] = ppo_sims;
  report["ppo_greedy"]["stage_advances"] = ppo_stages;
  write_json(c.dir / "comparison.json", report);

  const double w_ppo = std::chrono::duration<double>(t1 - t0).count();
  const double w_pso = std::chrono::duration<double>(t2 - t1).count();
  c.meta["wall_seconds_ppo_greedy"] = w_ppo;
  c.meta["wall_seconds_pso_mads"] = w_pso;
  c.out << std::left << std::setw(12) << "method" << std::setw(18) << "npv_usd" << std::setw(8)
        << "wells" << std::setw(14) << "simulations" << "wall_s\n";
  c.out << std::setw(12) << "ppo_greedy" << std::setw(18) << fmt(policy.npv) << std::setw(8)
        << policy.final_state.wells.size() << std::setw(14) << ppo_sims << fmt(w_ppo) << "\n";
  c.out << std::setw(12) << "pso_mads" << std::setw(18) << fmt(fdo.npv) << std::setw(8)
        << fdo.best.final_state.wells.size() << std::setw(14) << pso_sims << fmt(w_pso) << "\n";
}

void cmd_export(Context& c) {
  const auto& m = *c.env.model;
  const auto& g = m.geometry();
  save_geomodel(m, c.dir / "geomodel.txt");
  std::vector<double> k(static_cast<std::size_t>(g.cell_count())), phi(k.size());
  for (int cell = 0; cell < g.cell_count(); ++cell) {
    k[cell] = m.permeability(cell);
    phi[cell] = m.porosity(cell);
  }
  write_grid_csv(c.dir / "permeability.csv", k, g);
  write_grid_csv(c.dir / "porosity.csv", phi, g);
  write_grid_csv(c.dir / "log_permeability_normalized.csv", normalize_permeability(m), g);
  c.out << "wrote " << (c.dir / "geomodel.txt").string() << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const LoadError*>(&e) ||
      dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
      dynamic_cast<const IntegrityError*>(&e))
    return kExitConfig;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const TrainingError*>(&e))
    return kExitNumerical;
  if (dynamic_cast<const LifecycleError*>(&e) || dynamic_cast<const BudgetError*>(&e))
    return kExitLifecycle;
  return 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fieldev: waterflood field development with a PPO agent and a PSO-MADS benchmark"};
  app.require_subcommand(1);
  std::string config, output, schedule, checkpoint, geo_out;
  bool resume = false;
  int iterations = -1, runs = 0;
  std::vector<std::string> force;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", output, "output directory (overrides [output] dir)");
  };
  auto* sim = app.add_subcommand("simulate", "run a drilling schedule through the simulator");
  common(sim);
  sim->add_option("-s,--schedule", schedule, "schedule file: one 'decision location' line per stage")
      ->required()->check(CLI::ExistingFile);
  auto* tr = app.add_subcommand("train", "train the PPO agent");
  common(tr);
  tr->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
  tr->add_option("--iterations", iterations, "total iterations (overrides [ppo] iterations)");
  auto* opt = app.add_subcommand("optimize", "run PSO-MADS over drilling schedules");
  common(opt);
  opt->add_option("--runs", runs, "independent runs (overrides [psomads] runs)");
  auto* ev = app.add_subcommand("evaluate", "greedy rollout of a trained policy");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "policy checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--force", force, "stage:decision:location override (stage from 1); repeatable");
  auto* cmp = app.add_subcommand("compare", "PPO greedy policy against PSO-MADS on the same field");
  common(cmp);
  cmp->add_option("--checkpoint", checkpoint, "policy checkpoint")->required()->check(CLI::ExistingFile);
  auto* exp = app.add_subcommand("export-geomodel", "write the configured geological model");
  common(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (sim->parsed())
      return run_command("simulate", config, output, out, [&](Context& c) { cmd_simulate(c, schedule); });
    if (tr->parsed()) {
      return run_command("train", config, output, out, [&](Context& c) { cmd_train(c, resume); },
                         [&](RunConfig& c) {
                           if (iterations >= 0) c.iterations = iterations;
                         });
    }
    if (opt->parsed()) {
      return run_command("optimize", config, output, out, cmd_optimize, [&](RunConfig& c) {
        if (runs < 0) throw ConfigError("--runs must be >= 1");
        if (runs > 0) c.runs = runs;
      });
    }
    if (ev->parsed())
      return run_command("evaluate", config, output, out, [&](Context& c) { cmd_evaluate(c, checkpoint, force); });
    if (cmp->parsed())
      return run_command("compare", config, output, out, [&](Context& c) { cmd_compare(c, checkpoint); });
    if (exp->parsed()) return run_command("export-geomodel", config, output, out, cmd_export);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace fieldev
