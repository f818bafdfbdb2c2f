#pragma once

// Command-line front end: gen, bounds, train, sweep, eval, replay.
//
// Exit codes: 0 success, 1 I/O or runtime failure, 2 usage or configuration
// error. Every command writes a JSON-lines manifest from which `replay`
// reruns it and regenerates byte-identical CSV outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "config.hpp"
#include "data.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "training.hpp"

namespace ppan::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::config:
    case ErrorKind::argument:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_hash(const std::string& path) {
  std::ostringstream os;
  os << std::hex << fnv1a(read_file(path));
  return os.str();
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::io, "cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  return f;
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create directory '" + dir.string() + "': " + ec.message());
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  auto f = open_out(path);
  fn(f);
  f.close();
  if (!f) throw Error(ErrorKind::io, "error writing '" + path.string() + "'");
}

inline std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::vector<double> parse_reals(const std::string& s, const char* flag) {
  std::vector<double> out;
  for (const auto& item : ppan::detail::split_list(s)) {
    auto v = ppan::detail::to_real(item);
    if (!v) throw Error(ErrorKind::argument, std::string(flag) + ": '" + item + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

/// Run record shared by all commands. `args` holds the flags `replay`
/// needs (without --config / --out); `config` the resolved config text.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::optional<std::string> config;
  json inputs = json::object();
  json outputs = json::object();
  json metrics = json::object();
  std::vector<json> extra_lines;

  void add_output(const std::string& name, const fs::path& path) { outputs[name] = file_hash(path.string()); }

  void write(const fs::path& path) const {
    json head;
    head["manifest"] = "ppan-run v1";
    head["command"] = command;
    head["args"] = args;
    if (config) {
      head["config"] = *config;
      std::ostringstream h;
      h << std::hex << fnv1a(*config);
      head["config_hash"] = h.str();
    }
    head["inputs"] = inputs;
    head["outputs"] = outputs;
    head["metrics"] = metrics;
    write_file(path, [&](std::ostream& os) {
      os << head.dump() << '\n';
      for (const auto& l : extra_lines) os << l.dump() << '\n';
    });
  }
};

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::string mode;
  std::optional<std::size_t> k;
};

inline ExperimentConfig resolve_config(const std::string& path, const RunOverrides& o) {
  ExperimentConfig cfg = load_config(path);
  if (o.seed) cfg.training.seed = *o.seed;
  if (o.delta) {
    if (!(*o.delta >= 0.0)) throw Error(ErrorKind::config, "--delta must be >= 0");
    cfg.training.delta = *o.delta;
  }
  if (!o.mode.empty()) {
    cfg.training.observation_mode = parse_observation_mode(o.mode);
    cfg.mode_set = true;
  }
  if (o.k) cfg.k = *o.k;
  return cfg;
}

inline void record_data_input(Manifest& m, const ExperimentConfig& cfg) {
  if (!cfg.data.csv.empty()) m.inputs[cfg.data.csv] = file_hash(cfg.data.csv);
}

inline void write_ingestion(const fs::path& path, const IngestionSummary& s, std::ostream& out) {
  write_file(path, [&](std::ostream& os) { s.write(os); });
  s.write(out);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

struct GenOptions {
  std::string dist;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t n = 12000;
  std::string cov;
  double rho = 0.85;
  double variance = 1.0;
  std::size_t houses = 25;
  std::size_t days = 20;
};

inline int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (std::find(generator_names().begin(), generator_names().end(), o.dist) == generator_names().end()) {
    std::string msg = "unknown generator '" + o.dist + "'; valid generators:";
    for (const auto& g : generator_names()) msg += " " + g;
    throw Error(ErrorKind::argument, msg);
  }
  DataConfig d;
  d.generator = o.dist;
  d.n = o.n;
  d.rho = o.rho;
  d.variance = o.variance;
  d.houses = o.houses;
  d.days = o.days;
  if (!o.cov.empty()) {
    auto c = detail::parse_reals(o.cov, "--cov");
    if (c.size() != 3) throw Error(ErrorKind::argument, "--cov expects var_x,cov_xy,var_y");
    d.cov = std::array<double, 3>{c[0], c[1], c[2]};
  }
  const fs::path path = o.out;
  std::size_t rows = 0;
  if (o.dist == "load") {
    const auto profile = gen_load_profiles(o.houses, o.days, o.seed);
    rows = profile.size();
    detail::write_file(path, [&](std::ostream& os) { write_load_profile_csv(os, profile); });
  } else {
    const Dataset ds = generate(d, o.seed);
    rows = ds.size();
    detail::write_file(path, [&](std::ostream& os) { write_dataset_csv(os, ds); });
  }

  json params;
  std::vector<std::string> args{"--dist", o.dist, "--seed", std::to_string(o.seed)};
  if (o.dist == "load") {
    params = {{"houses", o.houses}, {"days", o.days}};
    args.insert(args.end(), {"--houses", std::to_string(o.houses), "--days", std::to_string(o.days)});
  } else {
    params["n"] = o.n;
    args.insert(args.end(), {"--n", std::to_string(o.n)});
    if (o.dist == "gaussian") {
      params["rho"] = o.rho;
      params["variance"] = o.variance;
      args.insert(args.end(), {"--rho", detail::join({o.rho}), "--variance", detail::join({o.variance})});
    } else if (o.dist == "laplace" || o.dist == "uniform") {
      const auto c = d.cov.value_or(default_covariance(o.dist));
      params["cov"] = c;
      args.insert(args.end(), {"--cov", detail::join({c[0], c[1], c[2]})});
    }
  }
  json prov{{"generator", o.dist}, {"parameters", params}, {"seed", o.seed}, {"rows", rows}};
  detail::write_file(path.string() + ".provenance.json", [&](std::ostream& os) { os << prov.dump(2) << '\n'; });

  detail::Manifest m;
  m.command = "gen";
  m.args = args;
  m.add_output(path.filename().string(), path);
  m.metrics = {{"rows", rows}};
  m.write(path.string() + ".manifest.jsonl");
  out << "wrote " << path.string() << " (" << rows << " rows)\n";
  return kExitOk;
}

struct BoundsOptions {
  std::string data;
  std::string x_col = "x";
  std::string y_col = "y";
  std::string mode = "useful";
  std::size_t k = kDefaultNeighbors;
  std::string deltas;
  std::size_t grid = 21;
  std::string out;
};

/// Standardizes the whole file (every row counts as training data) and
/// evaluates both envelopes on the grid.
inline int cmd_bounds(const BoundsOptions& o, std::ostream& out) {
  const ObservationMode mode = parse_observation_mode(o.mode);
  auto loaded = load_csv(o.data, {o.x_col}, {o.y_col});
  Dataset d = std::move(loaded.dataset);
  if (d.size() < 2) throw Error(ErrorKind::precondition, "'" + o.data + "' has fewer than two usable rows");
  for (std::size_t i = 0; i < d.size(); ++i) d.split.train.push_back(i);
  d = standardize(d);
  loaded.summary.transform = d.provenance.transform;
  const std::vector<double> deltas =
      o.deltas.empty() ? default_delta_grid(1.0, o.grid) : detail::parse_reals(o.deltas, "--deltas");
  check_delta_grid(deltas);
  const BoundCurve curve = build_bound_curve(d.x, d.y, mode, deltas, o.k);

  const fs::path path = o.out;
  detail::write_file(path, [&](std::ostream& os) { write_bound_curve_csv(os, curve); });
  detail::write_ingestion(path.string() + ".ingestion.txt", loaded.summary, out);

  detail::Manifest m;
  m.command = "bounds";
  m.args = {"--data", o.data, "--x-col", o.x_col, "--y-col", o.y_col, "--mode", std::string(to_string(mode)),
            "--k", std::to_string(o.k), "--deltas", detail::join(deltas)};
  m.inputs[o.data] = detail::file_hash(o.data);
  m.add_output(path.filename().string(), path);
  const auto& mo = curve.moments;
  m.metrics = {{"rho", mo.rho}, {"var_x", mo.var_x}, {"var_y", mo.var_y}, {"h_knn_x", mo.h_knn_x},
               {"i_knn_xy", mo.i_knn_xy}};
  m.write(path.string() + ".manifest.jsonl");
  out << "wrote " << path.string() << " (" << deltas.size() << " budgets)\n";
  return kExitOk;
}

struct RunOptions {
  std::string config;
  std::string out;
  detail::RunOverrides overrides;
  std::string model;    // eval
  std::string deltas;   // sweep
  std::optional<std::size_t> threads;
};

inline fs::path output_dir(const RunOptions& o, const ExperimentConfig& cfg) {
  return o.out.empty() ? fs::path(cfg.output_directory) : fs::path(o.out);
}

inline void write_common(const fs::path& dir, const ExperimentConfig& cfg, const PreparedData& data,
                         detail::Manifest& m, std::ostream& out) {
  const std::string text = to_config_text(cfg);
  detail::write_file(dir / "config.txt", [&](std::ostream& os) { os << text; });
  m.config = text;
  detail::record_data_input(m, cfg);
  if (data.ingestion) detail::write_ingestion(dir / "ingestion.txt", *data.ingestion, out);
}

inline json point_json(const TradeoffPoint& p) {
  json j{{"delta", p.delta},           {"distortion", p.distortion},   {"leakage_ksg", p.leakage_ksg},
         {"lower_bound", p.lower_bound}, {"upper_bound", p.upper_bound}};
  if (p.leakage_gaussian) j["leakage_gaussian"] = *p.leakage_gaussian;
  return j;
}

inline int cmd_train(const RunOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = detail::resolve_config(o.config, o.overrides);
  require_complete(cfg, true);
  cfg.training.validate();
  const fs::path dir = output_dir(o, cfg);
  detail::make_dir(dir);
  const PreparedData data = prepare_data(cfg);
  const PpanModel model = train_ppan(data.dataset, cfg.training);

  MeasureOptions mo;
  mo.k = cfg.k;
  mo.gaussian_experiment = cfg.gaussian;
  const TradeoffPoint p = measure_point(model, data.dataset, mo);

  detail::Manifest m;
  m.command = "train";
  write_common(dir, cfg, data, m, out);
  detail::write_file(dir / "model.txt", [&](std::ostream& os) { write_model(os, model); });
  detail::write_file(dir / "history.csv", [&](std::ostream& os) { write_history_csv(os, model.history); });
  m.add_output("model.txt", dir / "model.txt");
  m.add_output("history.csv", dir / "history.csv");
  m.metrics = point_json(p);
  m.metrics["seed"] = cfg.training.seed;
  m.metrics["best_epoch"] = model.best_epoch;
  m.metrics["epochs_run"] = model.history.size();
  m.metrics["model_config_hash"] = config_hash(cfg.training);
  m.write(dir / "manifest.jsonl");
  out.precision(6);
  out << "trained delta=" << p.delta << " best_epoch=" << model.best_epoch << " distortion=" << p.distortion
      << " leakage_ksg=" << p.leakage_ksg << " -> " << dir.string() << '\n';
  return kExitOk;
}

inline int cmd_sweep(const RunOptions& o, std::ostream& out) {
  ExperimentConfig cfg = detail::resolve_config(o.config, o.overrides);
  if (!o.deltas.empty()) cfg.deltas = detail::parse_reals(o.deltas, "--deltas");
  if (o.threads) cfg.threads = *o.threads;
  if (cfg.deltas.empty()) cfg.deltas = default_delta_grid(1.0, 21);
  require_complete(cfg, false);
  PpanConfig base = cfg.training;
  if (std::isnan(base.delta)) base.delta = cfg.deltas.front();  // replaced per point
  base.validate();
  const fs::path dir = output_dir(o, cfg);
  detail::make_dir(dir);
  const PreparedData data = prepare_data(cfg);

  SweepOptions so;
  so.k = cfg.k;
  so.gaussian_experiment = cfg.gaussian;
  so.threads = cfg.threads;
  const TradeoffCurve curve = sweep(data.dataset, base, cfg.deltas, so);

  detail::Manifest m;
  m.command = "sweep";
  write_common(dir, cfg, data, m, out);
  detail::write_file(dir / "curve.csv", [&](std::ostream& os) { write_curve_csv(os, curve); });
  detail::write_file(dir / "bounds.csv", [&](std::ostream& os) { write_bound_curve_csv(os, curve.bounds); });
  m.add_output("curve.csv", dir / "curve.csv");
  m.add_output("bounds.csv", dir / "bounds.csv");
  m.metrics = {{"points", curve.points.size()}, {"provenance", curve.provenance}};
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    json line = point_json(curve.points[i]);
    line["config_hash"] = curve.config_hashes[i];
    line["seed"] = base.seed + i;
    m.extra_lines.push_back(line);
  }
  m.write(dir / "manifest.jsonl");
  out.precision(6);
  for (const auto& p : curve.points)
    out << "delta=" << p.delta << " distortion=" << p.distortion << " leakage_ksg=" << p.leakage_ksg
        << " bounds=[" << p.lower_bound << ", " << p.upper_bound << "]\n";
  out << "wrote " << (dir / "curve.csv").string() << " and " << (dir / "bounds.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_eval(const RunOptions& o, std::ostream& out) {
  const ExperimentConfig cfg = detail::resolve_config(o.config, o.overrides);
  require_complete(cfg, true);
  cfg.training.validate();
  const fs::path dir = output_dir(o, cfg);
  detail::make_dir(dir);
  const PreparedData data = prepare_data(cfg);

  PpanModel model;
  model.config = cfg.training;
  {
    std::ifstream in(o.model);
    if (!in) throw Error(ErrorKind::io, "cannot open model '" + o.model + "'");
    read_model(in, model);
  }
  if (model.mechanism.input_dim() != observation_width(data.dataset, cfg.training.observation_mode) + cfg.training.noise_dim)
    throw Error(ErrorKind::shape, "model '" + o.model + "' does not match the configured observation mode and noise width");

  MeasureOptions mo;
  mo.k = cfg.k;
  mo.gaussian_experiment = cfg.gaussian;
  const TradeoffPoint p = measure_point(model, data.dataset, mo);
  TradeoffCurve single;
  single.points.push_back(p);

  detail::Manifest m;
  m.command = "eval";
  m.args = {"--model", o.model};
  write_common(dir, cfg, data, m, out);
  m.inputs[o.model] = detail::file_hash(o.model);
  detail::write_file(dir / "point.csv", [&](std::ostream& os) { write_curve_csv(os, single); });
  m.add_output("point.csv", dir / "point.csv");
  m.metrics = point_json(p);
  m.write(dir / "manifest.jsonl");
  out.precision(6);
  out << "delta=" << p.delta << " distortion=" << p.distortion << " leakage_ksg=" << p.leakage_ksg << '\n';
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Reruns the command recorded in a manifest, writing to `out_path`
/// (a file for gen/bounds, a directory otherwise). Inputs are checked
/// against their recorded hashes.
inline int cmd_replay(const std::string& manifest_path, const std::string& out_path, std::ostream& out,
                      std::ostream& err) {
  std::istringstream lines(detail::read_file(manifest_path));
  std::string first;
  std::getline(lines, first);
  json head;
  try {
    head = json::parse(first);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "'" + manifest_path + "' is not a run manifest: " + e.what());
  }
  if (head.value("manifest", "") != "ppan-run v1") throw Error(ErrorKind::parse, "'" + manifest_path + "' is not a run manifest");
  for (const auto& [path, hash] : head["inputs"].items())
    if (detail::file_hash(path) != hash.get<std::string>())
      throw Error(ErrorKind::io, "input '" + path + "' changed since the manifest was written");

  std::vector<std::string> argv{head["command"].get<std::string>()};
  for (const auto& a : head["args"]) argv.push_back(a.get<std::string>());
  if (head.contains("config")) {
    const fs::path dir = out_path;
    detail::make_dir(dir);
    const fs::path cfg = dir / "replay-config.txt";
    detail::write_file(cfg, [&](std::ostream& os) { os << head["config"].get<std::string>(); });
    argv.insert(argv.end(), {"--config", cfg.string()});
  }
  argv.insert(argv.end(), {"--out", out_path});
  return run_cli(argv, out, err);
}

/// Entry point; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Privacy-preserving adversarial networks: data, bounds, training and trade-off sweeps", "ppan"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset CSV");
  g->add_option("--dist", gen.dist, "mixture3 | laplace | uniform | gaussian | load")->required();
  g->add_option("--seed", gen.seed, "experiment seed");
  g->add_option("--out", gen.out, "output CSV")->required();
  g->add_option("--n", gen.n, "rows (mixture3: divisible by 3)");
  g->add_option("--cov", gen.cov, "var_x,cov_xy,var_y (laplace, uniform)");
  g->add_option("--rho", gen.rho, "correlation (gaussian)");
  g->add_option("--variance", gen.variance, "marginal variance (gaussian)");
  g->add_option("--houses", gen.houses, "households (load)");
  g->add_option("--days", gen.days, "days per household (load)");

  BoundsOptions bo;
  auto* b = app.add_subcommand("bounds", "lower and upper leakage bounds for a dataset");
  b->add_option("--data", bo.data, "input CSV")->required();
  b->add_option("--x-col", bo.x_col, "private attribute column");
  b->add_option("--y-col", bo.y_col, "useful attribute column");
  b->add_option("--mode", bo.mode, "useful | full");
  b->add_option("--k", bo.k, "KSG neighbours")->check(CLI::PositiveNumber);
  b->add_option("--deltas", bo.deltas, "comma-separated budgets");
  b->add_option("--grid", bo.grid, "points in the default budget grid")->check(CLI::PositiveNumber);
  b->add_option("--out", bo.out, "output CSV")->required();

  RunOptions ro;
  std::uint64_t seed = 0;
  double delta = 0.0;
  std::size_t k = 0, threads = 0;
  auto add_run = [&](const char* name, const char* help, bool single) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", ro.config, "experiment config")->required();
    s->add_option("--out", ro.out, "output directory");
    s->add_option("--seed", seed, "override training.seed");
    s->add_option("--mode", ro.overrides.mode, "useful | full");
    s->add_option("--k", k, "KSG neighbours")->check(CLI::PositiveNumber);
    if (single) s->add_option("--delta", delta, "distortion budget");
    return s;
  };
  auto* tr = add_run("train", "train one mechanism", true);
  auto* sw = add_run("sweep", "train across a budget grid and write the trade-off curve", false);
  sw->add_option("--deltas", ro.deltas, "comma-separated budgets");
  sw->add_option("--threads", threads, "parallel sweep points")->check(CLI::PositiveNumber);
  auto* ev = add_run("eval", "measure a trained mechanism on the test split", true);
  ev->add_option("--model", ro.model, "model file written by train")->required();

  std::string manifest, replay_out;
  auto* rp = app.add_subcommand("replay", "rerun a command from its manifest");
  rp->add_option("--manifest", manifest, "manifest.jsonl")->required();
  rp->add_option("--out", replay_out, "output file or directory")->required();

  std::vector<const char*> argv{"ppan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (auto* s : {tr, sw, ev}) {
    if (s->count("--seed")) ro.overrides.seed = seed;
    if (s->count("--k")) ro.overrides.k = k;
  }
  if (tr->count("--delta") || ev->count("--delta")) ro.overrides.delta = delta;
  if (sw->count("--threads")) ro.threads = threads;

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (b->parsed()) return cmd_bounds(bo, out);
    if (tr->parsed()) return cmd_train(ro, out);
    if (sw->parsed()) return cmd_sweep(ro, out);
    if (ev->parsed()) return cmd_eval(ro, out);
    if (rp->parsed()) return cmd_replay(manifest, replay_out, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ppan::cli
