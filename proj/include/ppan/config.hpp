#pragma once

// Experiment configuration files: `key = value` lines grouped under
// `[section]` headers. `#` starts a comment. Lists are comma-separated,
// booleans are true/false. Unknown sections and keys are rejected.
//
//   [data]        generator | csv, x_columns, y_columns, n, rho, variance,
//                 cov, houses, days, n_train, n_test, validation_fraction
//   [model]       hidden
//   [training]    batch_size, lambda, adversary_steps, noise_dim, delta,
//                 deltas, observation_mode, epochs, patience, warmup_epochs,
//                 seed, step_size, penalty, threads
//   [estimation]  k, gaussian
//   [output]      directory

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "ksg.hpp"
#include "observation.hpp"
#include "training.hpp"

namespace ppan {

inline const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"mixture3", "laplace", "uniform", "gaussian", "load"};
  return names;
}

struct DataConfig {
  std::string generator;  // exactly one of generator / csv
  std::string csv;
  std::vector<std::string> x_columns{"x"};
  std::vector<std::string> y_columns{"y"};
  std::size_t n = 12000;
  double rho = 0.85;
  double variance = 1.0;
  std::optional<std::array<double, 3>> cov;  // var_x, cov_xy, var_y; default depends on generator
  std::size_t houses = 25;
  std::size_t days = 20;
  std::size_t n_train = 8000;
  std::size_t n_test = 4000;
  double validation_fraction = 0.1;
};

struct ExperimentConfig {
  DataConfig data;
  PpanConfig training;  // observation_mode is meaningful only when mode_set
  bool mode_set = false;
  std::vector<double> deltas;
  std::size_t k = kDefaultNeighbors;
  bool gaussian = false;
  std::size_t threads = 1;
  std::string output_directory = "out";
};

/// Default covariance for the generators that take one.
inline std::array<double, 3> default_covariance(const std::string& generator) {
  if (generator == "uniform") return {1.3, 0.95, 1.3};
  return {1.2, 0.9, 1.2};
}

namespace detail {

inline std::string strip(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) out.push_back(strip(item));
  return out;
}

inline std::optional<double> to_real(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> to_count(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses configuration text. Collects every problem (unknown keys, bad
/// values, duplicates, malformed lines) and throws one config error listing
/// them all. `origin` names the source in messages.
inline ExperimentConfig parse_config(std::string_view text, const std::string& origin = "config") {
  ExperimentConfig cfg;
  std::vector<std::string> problems;
  std::vector<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;

  auto where = [&](const std::string& key) { return (section.empty() ? "" : section + ".") + key; };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back("line " + std::to_string(line_no) + ": malformed section header");
        continue;
      }
      section = detail::strip(std::string_view(line).substr(1, line.size() - 2));
      if (section != "data" && section != "model" && section != "training" && section != "estimation" &&
          section != "output")
        problems.push_back("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = detail::strip(std::string_view(line).substr(0, eq));
    const std::string value = detail::strip(std::string_view(line).substr(eq + 1));
    const std::string full = where(key);
    if (std::find(seen.begin(), seen.end(), full) != seen.end()) {
      problems.push_back(full + " (duplicate)");
      continue;
    }
    seen.push_back(full);

    auto bad = [&](const char* what) { problems.push_back(full + " (" + what + ", got '" + value + "')"); };
    auto real = [&](double& dst, bool positive) {
      auto v = detail::to_real(value);
      if (!v || (positive && !(*v > 0.0)) || *v < 0.0) return bad(positive ? "expected a positive number" : "expected a non-negative number");
      dst = *v;
    };
    auto count = [&](std::size_t& dst, bool positive) {
      auto v = detail::to_count(value);
      if (!v || (positive && *v == 0)) return bad(positive ? "expected a positive integer" : "expected an integer");
      dst = static_cast<std::size_t>(*v);
    };
    auto names = [&](std::vector<std::string>& dst) {
      auto v = detail::split_list(value);
      for (const auto& s : v)
        if (s.empty()) return bad("empty column name");
      dst = v;
    };
    auto& t = cfg.training;
    auto& d = cfg.data;

    if (section == "data") {
      if (key == "generator") {
        if (std::find(generator_names().begin(), generator_names().end(), value) == generator_names().end())
          bad("unknown generator");
        else d.generator = value;
      } else if (key == "csv") {
        if (value.empty()) bad("empty path");
        else d.csv = value;
      } else if (key == "x_columns") names(d.x_columns);
      else if (key == "y_columns") names(d.y_columns);
      else if (key == "n") count(d.n, true);
      else if (key == "rho") {
        auto v = detail::to_real(value);
        if (!v || std::abs(*v) > 1.0) bad("expected a number in [-1, 1]");
        else d.rho = *v;
      } else if (key == "variance") real(d.variance, true);
      else if (key == "cov") {
        auto items = detail::split_list(value);
        std::array<double, 3> c{};
        bool ok = items.size() == 3;
        for (std::size_t i = 0; ok && i < 3; ++i) {
          auto v = detail::to_real(items[i]);
          ok = v.has_value();
          if (ok) c[i] = *v;
        }
        if (!ok) bad("expected var_x,cov_xy,var_y");
        else d.cov = c;
      } else if (key == "houses") count(d.houses, true);
      else if (key == "days") count(d.days, true);
      else if (key == "n_train") count(d.n_train, true);
      else if (key == "n_test") count(d.n_test, true);
      else if (key == "validation_fraction") {
        auto v = detail::to_real(value);
        if (!v || *v < 0.0 || *v >= 1.0) bad("expected a number in [0, 1)");
        else d.validation_fraction = *v;
      } else problems.push_back(full + " (unknown key)");
    } else if (section == "model") {
      if (key == "hidden") {
        std::vector<std::size_t> h;
        for (const auto& s : detail::split_list(value)) {
          auto v = detail::to_count(s);
          if (!v || *v == 0) {
            h.clear();
            break;
          }
          h.push_back(static_cast<std::size_t>(*v));
        }
        if (h.empty()) bad("expected positive comma-separated widths");
        else t.hidden = h;
      } else problems.push_back(full + " (unknown key)");
    } else if (section == "training") {
      if (key == "batch_size") count(t.batch_size, true);
      else if (key == "lambda") real(t.lambda, true);
      else if (key == "adversary_steps") count(t.adversary_steps, true);
      else if (key == "noise_dim") count(t.noise_dim, true);
      else if (key == "delta") real(t.delta, false);
      else if (key == "deltas") {
        std::vector<double> g;
        for (const auto& s : detail::split_list(value)) {
          auto v = detail::to_real(s);
          if (!v || *v < 0.0) {
            g.clear();
            break;
          }
          g.push_back(*v);
        }
        if (g.empty()) bad("expected comma-separated non-negative budgets");
        else cfg.deltas = g;
      } else if (key == "observation_mode") {
        try {
          t.observation_mode = parse_observation_mode(value);
          cfg.mode_set = true;
        } catch (const Error&) {
          bad("expected useful or full");
        }
      } else if (key == "epochs") count(t.epochs, true);
      else if (key == "patience") count(t.patience, true);
      else if (key == "warmup_epochs") count(t.warmup_epochs, false);
      else if (key == "seed") {
        auto v = detail::to_count(value);
        if (!v) bad("expected a non-negative integer");
        else t.seed = *v;
      } else if (key == "step_size") real(t.step_size, true);
      else if (key == "penalty") {
        try {
          t.penalty = parse_distortion_penalty(value);
        } catch (const Error&) {
          bad("expected per_sample or expected");
        }
      } else if (key == "threads") count(cfg.threads, true);
      else problems.push_back(full + " (unknown key)");
    } else if (section == "estimation") {
      if (key == "k") count(cfg.k, true);
      else if (key == "gaussian") {
        if (value == "true") cfg.gaussian = true;
        else if (value == "false") cfg.gaussian = false;
        else bad("expected true or false");
      } else problems.push_back(full + " (unknown key)");
    } else if (section == "output") {
      if (key == "directory") {
        if (value.empty()) bad("empty path");
        else cfg.output_directory = value;
      } else problems.push_back(full + " (unknown key)");
    } else if (section.empty()) {
      problems.push_back(key + " (key outside any section)");
    }
    // keys under an unknown section were already reported with the section
  }
  if (!cfg.data.generator.empty() && !cfg.data.csv.empty())
    problems.push_back("data.generator and data.csv are mutually exclusive");
  if (!problems.empty()) {
    std::string msg = origin + ": invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::config, msg);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Checks the fields that have no default. `need_delta` is set for single
/// runs (train, eval); sweeps use the grid instead.
inline void require_complete(const ExperimentConfig& cfg, bool need_delta) {
  std::vector<std::string> missing;
  if (cfg.data.generator.empty() && cfg.data.csv.empty()) missing.push_back("data.generator or data.csv (missing)");
  if (!cfg.mode_set) missing.push_back("training.observation_mode (missing)");
  if (need_delta && std::isnan(cfg.training.delta)) missing.push_back("training.delta (missing)");
  if (missing.empty()) return;
  std::string msg = "incomplete configuration:";
  for (const auto& m : missing) msg += "\n  " + m;
  throw Error(ErrorKind::config, msg);
}

/// Canonical text of a configuration; parses back to an equal configuration.
inline std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  auto list = [&](const auto& v) {
    std::ostringstream o;
    o.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
    return o.str();
  };
  const auto& d = cfg.data;
  const auto& t = cfg.training;
  os << "[data]\n";
  if (!d.generator.empty()) os << "generator = " << d.generator << '\n';
  if (!d.csv.empty()) os << "csv = " << d.csv << '\n';
  os << "x_columns = " << list(d.x_columns) << '\n'
     << "y_columns = " << list(d.y_columns) << '\n'
     << "n = " << d.n << '\n'
     << "rho = " << d.rho << '\n'
     << "variance = " << d.variance << '\n';
  if (d.cov) os << "cov = " << (*d.cov)[0] << ',' << (*d.cov)[1] << ',' << (*d.cov)[2] << '\n';
  os << "houses = " << d.houses << '\n'
     << "days = " << d.days << '\n'
     << "n_train = " << d.n_train << '\n'
     << "n_test = " << d.n_test << '\n'
     << "validation_fraction = " << d.validation_fraction << '\n';
  os << "\n[model]\nhidden = " << list(t.hidden) << '\n';
  os << "\n[training]\n"
     << "batch_size = " << t.batch_size << '\n'
     << "lambda = " << t.lambda << '\n'
     << "adversary_steps = " << t.adversary_steps << '\n'
     << "noise_dim = " << t.noise_dim << '\n';
  if (!std::isnan(t.delta)) os << "delta = " << t.delta << '\n';
  if (!cfg.deltas.empty()) os << "deltas = " << list(cfg.deltas) << '\n';
  if (cfg.mode_set) os << "observation_mode = " << to_string(t.observation_mode) << '\n';
  os << "epochs = " << t.epochs << '\n'
     << "patience = " << t.patience << '\n'
     << "warmup_epochs = " << t.warmup_epochs << '\n'
     << "seed = " << t.seed << '\n'
     << "step_size = " << t.step_size << '\n'
     << "penalty = " << to_string(t.penalty) << '\n'
     << "threads = " << cfg.threads << '\n';
  os << "\n[estimation]\nk = " << cfg.k << "\ngaussian = " << (cfg.gaussian ? "true" : "false") << '\n';
  os << "\n[output]\ndirectory = " << cfg.output_directory << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset construction from the [data] section

/// Generates the raw (unsplit, unstandardized) dataset named by `generator`.
inline Dataset generate(const DataConfig& d, std::uint64_t seed) {
  const auto c = d.cov.value_or(default_covariance(d.generator));
  if (d.generator == "mixture3") {
    if (d.n % 3 != 0) throw Error(ErrorKind::argument, "mixture3 needs n divisible by 3");
    return gen_gaussian_mixture(d.n / 3, MixtureSpec::three_component(), seed);
  }
  if (d.generator == "laplace") return gen_multivariate_laplace(d.n, cov2(c[0], c[1], c[2]), seed);
  if (d.generator == "uniform") return gen_multivariate_uniform(d.n, cov2(c[0], c[1], c[2]), seed);
  if (d.generator == "gaussian") return gen_bivariate_gaussian(d.n, d.rho, d.variance, seed);
  if (d.generator == "load") {
    Dataset out;
    const auto rows = gen_load_profiles(d.houses, d.days, seed);
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.consumption);
    out.x = Matrix::column(v);
    out.y = Matrix::column(std::move(v));
    out.provenance.source = "load";
    out.provenance.seed = seed;
    return out;
  }
  std::string msg = "unknown generator '" + d.generator + "'; valid generators:";
  for (const auto& g : generator_names()) msg += " " + g;
  throw Error(ErrorKind::argument, msg);
}

struct PreparedData {
  Dataset dataset;  // split and standardized
  std::optional<IngestionSummary> ingestion;
};

/// Generates or loads the data, splits it and standardizes it with
/// training-split statistics.
inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData p;
  Dataset raw;
  if (!cfg.data.csv.empty()) {
    auto loaded = load_csv(cfg.data.csv, cfg.data.x_columns, cfg.data.y_columns);
    raw = std::move(loaded.dataset);
    p.ingestion = std::move(loaded.summary);
  } else {
    raw = generate(cfg.data, cfg.training.seed);
  }
  raw.provenance.seed = cfg.training.seed;
  p.dataset = standardize(
      split_dataset(raw, cfg.data.n_train, cfg.data.n_test, cfg.data.validation_fraction, cfg.training.seed));
  if (p.ingestion) p.ingestion->transform = p.dataset.provenance.transform;
  return p;
}

}  // namespace ppan
