#pragma once

// Operating-point measurement for trained mechanisms and delta sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bounds.hpp"
#include "data.hpp"
#include "error.hpp"
#include "ksg.hpp"
#include "training.hpp"

namespace ppan {

inline constexpr double kLeakageCap = 20.0;

struct TradeoffPoint {
  double delta = 0.0;
  double distortion = 0.0;
  double leakage_ksg = 0.0;
  std::optional<double> leakage_gaussian;
  bool leakage_gaussian_capped = false;
  double lower_bound = 0.0;
  double upper_bound = 0.0;

  friend bool operator==(const TradeoffPoint&, const TradeoffPoint&) = default;
};

struct TradeoffCurve {
  std::vector<TradeoffPoint> points;
  std::string provenance;
  std::vector<std::string> config_hashes;
  BoundCurve bounds;
};

/// Mean over samples of the squared Euclidean error.
inline double empirical_distortion(const Matrix& y, const Matrix& z) {
  if (y.rows() != z.rows() || y.cols() != z.cols())
    throw Error(ErrorKind::argument, "distortion: y and z shapes differ");
  if (y.rows() == 0) throw Error(ErrorKind::argument, "distortion of an empty sample");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double e = y.data()[k] - z.data()[k];
    s += e * e;
  }
  return s / static_cast<double>(y.rows());
}

struct GaussianLeakage {
  double nats = 0.0;
  bool capped = false;
};

/// -1/2 log(1 - rho_xz^2): exact mutual information only for jointly
/// Gaussian (X, Z). Infinite values are capped at kLeakageCap and flagged.
inline GaussianLeakage leakage_gaussian(const Matrix& x, const Matrix& z) {
  if (x.rows() != z.rows() || x.cols() != 1 || z.cols() != 1)
    throw Error(ErrorKind::argument, "leakage_gaussian expects two scalar samples of equal length");
  const std::size_t n = x.rows();
  if (n < 2) throw Error(ErrorKind::argument, "need at least two samples");
  double mx = 0, mz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x(i, 0);
    mz += z(i, 0);
  }
  mx /= static_cast<double>(n);
  mz /= static_cast<double>(n);
  double sxx = 0, szz = 0, sxz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x(i, 0) - mx, b = z(i, 0) - mz;
    sxx += a * a;
    szz += b * b;
    sxz += a * b;
  }
  if (!(sxx > 0.0) || !(szz > 0.0)) throw Error(ErrorKind::degenerate, "zero-variance input to leakage_gaussian");
  const double r2 = std::min(1.0, sxz * sxz / (sxx * szz));
  const double v = -0.5 * std::log1p(-r2);
  if (!(v < kLeakageCap)) return {kLeakageCap, true};
  return {v, false};
}

struct MeasureOptions {
  std::size_t k = kDefaultNeighbors;
  std::optional<std::uint64_t> noise_seed;  // default: derived from the model seed
  bool gaussian_experiment = false;
  std::optional<MomentSummary> moments;  // default: computed on the training split
};

/// Training-split moment summary (bounds are always built from training data).
inline MomentSummary training_moments(const Dataset& d, std::size_t k) {
  return compute_moments(d.x.select_rows(d.split.train), d.y.select_rows(d.split.train), k);
}

/// Releases Z on the test split with fresh seed noise and measures distortion
/// and leakage. Only the mechanism is used.
inline TradeoffPoint measure_point(const PpanModel& model, const Dataset& data, const MeasureOptions& opt = {}) {
  check_dataset(data);
  if (data.split.test.empty()) throw Error(ErrorKind::argument, "measure_point needs a nonempty test split");
  const auto& rows = data.split.test;
  const Matrix w = observation(data, model.config.observation_mode, rows);
  const Matrix x = data.x.select_rows(rows);
  const Matrix y = data.y.select_rows(rows);
  Matrix u(rows.size(), model.config.noise_dim);
  Rng rng(opt.noise_seed ? *opt.noise_seed : substream_seed(model.config.seed, "evaluation-noise"));
  fill_seed_noise(u, rng);
  const Matrix z = release(model, w, u);

  TradeoffPoint p;
  p.delta = model.config.delta;
  p.distortion = empirical_distortion(y, z);
  p.leakage_ksg = ksg_leakage(x, z, opt.k);
  if (opt.gaussian_experiment) {
    const auto g = leakage_gaussian(x, z);
    p.leakage_gaussian = g.nats;
    p.leakage_gaussian_capped = g.capped;
  }
  const MomentSummary m = opt.moments ? *opt.moments : training_moments(data, opt.k);
  p.lower_bound = lower_bound(model.config.observation_mode, m, p.delta);
  p.upper_bound = tradeoff_upper_bound(m, p.delta);
  return p;
}

inline std::string describe(const PpanConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size=" << c.batch_size << ";lambda=" << c.lambda << ";adversary_steps=" << c.adversary_steps
     << ";noise_dim=" << c.noise_dim << ";delta=" << c.delta << ";mode=" << to_string(c.observation_mode)
     << ";epochs=" << c.epochs << ";patience=" << c.patience << ";warmup_epochs=" << c.warmup_epochs << ";seed=" << c.seed << ";hidden=";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << ";step_size=" << c.step_size << ";penalty=" << to_string(c.penalty);
  return os.str();
}

inline std::string config_hash(const PpanConfig& c) {
  std::ostringstream os;
  os << std::hex << fnv1a(describe(c));
  return os.str();
}

struct SweepOptions {
  std::size_t k = kDefaultNeighbors;
  bool gaussian_experiment = false;
  std::size_t threads = 1;  // sweep points train independently
};

/// Config used for sweep point `index`: the budget and a seed offset by the index.
inline PpanConfig sweep_point_config(const PpanConfig& base, double delta, std::size_t index) {
  PpanConfig c = base;
  c.delta = delta;
  c.seed = base.seed + index;
  return c;
}

/// One trained model per budget, measured on the test split, alongside the
/// bound envelopes evaluated on the same grid from training-split moments.
inline TradeoffCurve sweep(const Dataset& data, const PpanConfig& base_config, const std::vector<double>& deltas,
                           const SweepOptions& opt = {}) {
  check_delta_grid(deltas);
  const MomentSummary m = training_moments(data, opt.k);
  for (double d : deltas)
    if (!(d > 0.0) || d > m.var_y * (1.0 + 1e-9))
      throw Error(ErrorKind::argument, "sweep budgets must lie in (0, var_y]");

  TradeoffCurve curve;
  curve.provenance = data.provenance.source + " seed=" + std::to_string(data.provenance.seed);
  curve.bounds = bound_curve_from_moments(m, base_config.observation_mode, deltas);
  curve.points.resize(deltas.size());
  curve.config_hashes.resize(deltas.size());
  std::vector<std::exception_ptr> failures(deltas.size());

  auto run = [&](std::size_t i) {
    try {
      const PpanConfig c = sweep_point_config(base_config, deltas[i], i);
      curve.config_hashes[i] = config_hash(c);
      const PpanModel model = train_ppan(data, c);
      MeasureOptions mo;
      mo.k = opt.k;
      mo.gaussian_experiment = opt.gaussian_experiment;
      mo.moments = m;
      curve.points[i] = measure_point(model, data, mo);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, deltas.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < deltas.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < deltas.size(); i += threads) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!failures[i]) continue;
    std::ostringstream os;
    os.precision(17);
    os << "sweep point delta=" << deltas[i] << " failed: ";
    try {
      std::rethrow_exception(failures[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), os.str() + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::training, os.str() + e.what());
    }
  }
  return curve;
}

inline void write_curve_csv(std::ostream& os, const TradeoffCurve& c) {
  const auto old = os.precision(17);
  os << "delta,distortion,leakage_ksg,leakage_gaussian,lower_bound,upper_bound\n";
  for (const auto& p : c.points) {
    os << p.delta << ',' << p.distortion << ',' << p.leakage_ksg << ',';
    if (p.leakage_gaussian) os << *p.leakage_gaussian;
    os << ',' << p.lower_bound << ',' << p.upper_bound << '\n';
  }
  os.precision(old);
}

}  // namespace ppan
