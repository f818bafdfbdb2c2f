#pragma once

// Adversarial training of a privacy-preserving release mechanism.
//
// The mechanism maps (observation W, seed noise U) to a release Z. The
// adversary maps Z to a diagonal Gaussian posterior over the private X and is
// fitted by maximum likelihood. The mechanism minimises
//   lambda * hinge(distortion - delta)^2 - Loss_A,
// i.e. it maximises the adversary's negative log-likelihood while keeping the
// squared error to Y within the budget delta.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "error.hpp"
#include "ksg.hpp"
#include "matrix.hpp"
#include "nn.hpp"
#include "observation.hpp"
#include "rng.hpp"

namespace ppan {

/// Where the hinge on the distortion budget is applied.
enum class DistortionPenalty {
  per_sample,  // (1/n) sum lambda max(0, d(y_i, z_i) - delta)^2
  expected,    // lambda max(0, (1/n) sum d(y_i, z_i) - delta)^2
};

inline std::string_view to_string(DistortionPenalty p) {
  return p == DistortionPenalty::per_sample ? "per_sample" : "expected";
}

inline DistortionPenalty parse_distortion_penalty(std::string_view s) {
  if (s == "per_sample") return DistortionPenalty::per_sample;
  if (s == "expected") return DistortionPenalty::expected;
  throw Error(ErrorKind::config, "penalty must be 'per_sample' or 'expected', got '" + std::string(s) + "'");
}

struct PpanConfig {
  std::size_t batch_size = 200;
  double lambda = 10.0;
  std::size_t adversary_steps = 2;
  std::size_t noise_dim = 3;
  double delta = std::numeric_limits<double>::quiet_NaN();
  ObservationMode observation_mode = ObservationMode::useful_only;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  std::size_t warmup_epochs = 0;  // no model selection before this epoch
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden = {16, 16};
  double step_size = 1e-3;
  DistortionPenalty penalty = DistortionPenalty::expected;

  /// Throws a config error naming every offending field.
  void validate() const {
    std::vector<std::string> bad;
    if (batch_size == 0) bad.push_back("batch_size (must be > 0)");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) bad.push_back("lambda (must be > 0)");
    if (adversary_steps == 0) bad.push_back("adversary_steps (must be > 0)");
    if (noise_dim == 0) bad.push_back("noise_dim (must be > 0)");
    if (std::isnan(delta)) bad.push_back("delta (missing)");
    else if (!(delta >= 0.0) || !std::isfinite(delta)) bad.push_back("delta (must be >= 0)");
    if (epochs == 0) bad.push_back("epochs (must be > 0)");
    if (patience == 0) bad.push_back("patience (must be > 0)");
    if (hidden.empty()) bad.push_back("hidden (need at least one hidden layer)");
    for (auto h : hidden)
      if (h == 0) {
        bad.push_back("hidden (widths must be > 0)");
        break;
      }
    if (!(step_size > 0.0)) bad.push_back("step_size (must be > 0)");
    if (bad.empty()) return;
    std::string msg = "invalid training configuration:";
    for (const auto& b : bad) msg += " " + b + ";";
    throw Error(ErrorKind::config, msg);
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_adversary = 0.0;   // training mean over the epoch's batches
  double loss_mechanism = 0.0;   // ditto
  double val_loss_adversary = 0.0;
  double val_loss_mechanism = 0.0;
  double val_distortion = 0.0;
  double val_penalty = 0.0;
  double val_leakage_ksg = 0.0;
  double val_leakage_proxy = 0.0;  // -1/2 log(1 - rho_xz^2) on the validation split

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct PpanModel {
  Mlp mechanism;
  Mlp adversary;
  PpanConfig config;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// ---------------------------------------------------------------------------
// Building blocks

/// Observation rows for the given mode: Y, or [X | Y].
inline Matrix observation(const Dataset& d, ObservationMode mode, std::span<const std::size_t> rows) {
  Matrix y = d.y.select_rows(rows);
  if (mode == ObservationMode::useful_only) return y;
  return hconcat(d.x.select_rows(rows), y);
}

inline std::size_t observation_width(const Dataset& d, ObservationMode mode) {
  return mode == ObservationMode::useful_only ? d.y.cols() : d.x.cols() + d.y.cols();
}

/// Mechanism forward pass on [W | U].
inline Matrix release(const Mlp& mechanism, const Matrix& w_batch, const Matrix& noise_batch) {
  if (w_batch.rows() != noise_batch.rows())
    throw Error(ErrorKind::shape, "observation and noise batches have different lengths");
  if (w_batch.cols() + noise_batch.cols() != mechanism.input_dim())
    throw Error(ErrorKind::shape, "observation width + noise width (" + std::to_string(w_batch.cols()) + "+" +
                                      std::to_string(noise_batch.cols()) + ") != mechanism input " +
                                      std::to_string(mechanism.input_dim()));
  return forward(mechanism, hconcat(w_batch, noise_batch)).output;
}

inline Matrix release(const PpanModel& model, const Matrix& w_batch, const Matrix& noise_batch) {
  if (noise_batch.cols() != model.config.noise_dim)
    throw Error(ErrorKind::shape, "noise width " + std::to_string(noise_batch.cols()) + " != configured " +
                                      std::to_string(model.config.noise_dim));
  return release(model.mechanism, w_batch, noise_batch);
}

struct AdversaryEval {
  double loss = 0.0;
  Matrix output_grad;  // d loss / d adversary output, already divided by n
  ForwardCache cache;
};

namespace detail {

inline AdversaryEval eval_adversary(const Mlp& adversary, const Matrix& x_batch, const Matrix& z_batch) {
  if (x_batch.rows() != z_batch.rows()) throw Error(ErrorKind::shape, "x and z batches differ in length");
  if (x_batch.rows() == 0) throw Error(ErrorKind::argument, "empty batch");
  if (adversary.output_head != OutputHead::gaussian_posterior || adversary.output_dim() != 2 * x_batch.cols())
    throw Error(ErrorKind::shape, "adversary must output a Gaussian posterior over x");
  auto fwd = forward(adversary, z_batch);
  const std::size_t n = x_batch.rows();
  AdversaryEval ev;
  ev.output_grad = Matrix(n, adversary.output_dim());
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto post = posterior_row(fwd.output, r);
    sum += gaussian_nll(post, x_batch.row(r));
    gaussian_nll_grad(post, x_batch.row(r), ev.output_grad.row(r));
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : ev.output_grad.data()) g *= inv;
  ev.loss = sum * inv;
  ev.cache = std::move(fwd.cache);
  return ev;
}

struct PenaltyEval {
  double value = 0.0;
  Matrix z_grad;
};

inline PenaltyEval distortion_penalty(const Matrix& y, const Matrix& z, double lambda, double delta,
                                      DistortionPenalty form) {
  if (y.rows() != z.rows() || y.cols() != z.cols()) throw Error(ErrorKind::shape, "y and z batches differ");
  if (y.rows() == 0) throw Error(ErrorKind::argument, "empty batch");
  const std::size_t n = y.rows();
  const double inv = 1.0 / static_cast<double>(n);
  PenaltyEval p;
  p.z_grad = Matrix(n, z.cols());
  std::vector<double> d(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) d[r] += (y(r, c) - z(r, c)) * (y(r, c) - z(r, c));
  if (form == DistortionPenalty::per_sample) {
    for (std::size_t r = 0; r < n; ++r) {
      const double h = std::max(0.0, d[r] - delta);
      p.value += lambda * h * h * inv;
      if (h > 0.0)
        for (std::size_t c = 0; c < y.cols(); ++c) p.z_grad(r, c) = -4.0 * lambda * h * (y(r, c) - z(r, c)) * inv;
    }
  } else {
    double mean = 0.0;
    for (double v : d) mean += v;
    mean *= inv;
    const double h = std::max(0.0, mean - delta);
    p.value = lambda * h * h;
    if (h > 0.0)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) p.z_grad(r, c) = -4.0 * lambda * h * (y(r, c) - z(r, c)) * inv;
  }
  return p;
}

inline double gaussian_leakage_proxy(const Matrix& x, const Matrix& z) {
  const std::size_t n = x.rows();
  double mx = 0, mz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x(i, 0);
    mz += z(i, 0);
  }
  mx /= static_cast<double>(n);
  mz /= static_cast<double>(n);
  double sxx = 0, szz = 0, sxz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x(i, 0) - mx) * (x(i, 0) - mx);
    szz += (z(i, 0) - mz) * (z(i, 0) - mz);
    sxz += (x(i, 0) - mx) * (z(i, 0) - mz);
  }
  if (!(sxx > 0.0) || !(szz > 0.0)) return 0.0;
  const double r2 = std::min(sxz * sxz / (sxx * szz), 1.0 - 1e-12);
  return -0.5 * std::log(1.0 - r2);
}

}  // namespace detail

/// Mean Gaussian negative log-likelihood of x under the adversary's posterior at z.
inline double adversary_loss(const Mlp& adversary, const Matrix& x_batch, const Matrix& z_batch) {
  return detail::eval_adversary(adversary, x_batch, z_batch).loss;
}

/// Distortion penalty minus the adversary loss.
inline double mechanism_loss(const Matrix& y_batch, const Matrix& z_batch, double adversary_loss_value,
                             double lambda, double delta, DistortionPenalty form = DistortionPenalty::per_sample) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::config, "lambda must be > 0");
  return detail::distortion_penalty(y_batch, z_batch, lambda, delta, form).value - adversary_loss_value;
}

/// One adversary update on a fixed batch of releases.
inline double adversary_update(Mlp& adversary, OptimizerState& opt, const Matrix& x_batch, const Matrix& z_batch) {
  auto ev = detail::eval_adversary(adversary, x_batch, z_batch);
  auto bw = backward(adversary, ev.cache, ev.output_grad);
  optimizer_step(adversary, bw.params, opt);
  return ev.loss;
}

struct MechanismGradient {
  double loss = 0.0;
  double adversary_loss = 0.0;
  MlpGradients grads;
};

/// Gradient of the mechanism loss w.r.t. mechanism parameters only; the
/// adversary is read, never modified.
inline MechanismGradient mechanism_gradient(const Mlp& mechanism, const Mlp& adversary, const Matrix& w_batch,
                                            const Matrix& noise_batch, const Matrix& x_batch,
                                            const Matrix& y_batch, double lambda, double delta,
                                            DistortionPenalty form) {
  auto mf = forward(mechanism, hconcat(w_batch, noise_batch));
  const Matrix& z = mf.output;
  auto ev = detail::eval_adversary(adversary, x_batch, z);
  auto ab = backward(adversary, ev.cache, ev.output_grad);
  auto pen = detail::distortion_penalty(y_batch, z, lambda, delta, form);
  Matrix dz = pen.z_grad;
  for (std::size_t k = 0; k < dz.size(); ++k) dz.data()[k] -= ab.input_grad.data()[k];
  MechanismGradient g;
  g.loss = pen.value - ev.loss;
  g.adversary_loss = ev.loss;
  g.grads = backward(mechanism, mf.cache, dz).params;
  return g;
}

// ---------------------------------------------------------------------------

/// Alternating minimax training with early stopping.
/// Per minibatch: fresh seed noise, `adversary_steps` adversary updates with
/// the mechanism frozen, then one mechanism update with the adversary frozen.
/// Epochs are scored on the validation split by penalty + KSG leakage of
/// (X, Z); the adversary's own loss is not used, since a lagging adversary
/// makes a leaky mechanism look private. Returns the best-scoring networks.
/// Selection and the patience counter start at `warmup_epochs`.
inline PpanModel train_ppan(const Dataset& data, const PpanConfig& config) {
  config.validate();
  check_dataset(data);
  if (!data.provenance.standardized)
    throw Error(ErrorKind::precondition, "train_ppan needs standardized data (call standardize first)");
  if (data.split.train.empty()) throw Error(ErrorKind::precondition, "train_ppan needs a nonempty training split");

  const std::uint64_t seed = config.seed;
  const ObservationMode mode = config.observation_mode;
  std::vector<std::size_t> mech_dims{observation_width(data, mode) + config.noise_dim};
  mech_dims.insert(mech_dims.end(), config.hidden.begin(), config.hidden.end());
  mech_dims.push_back(data.y.cols());
  std::vector<std::size_t> adv_dims{data.y.cols()};
  adv_dims.insert(adv_dims.end(), config.hidden.begin(), config.hidden.end());
  adv_dims.push_back(2 * data.x.cols());

  PpanModel model;
  model.config = config;
  model.mechanism = init_mlp(mech_dims, OutputHead::linear, substream_seed(seed, "init-mechanism"));
  model.adversary = init_mlp(adv_dims, OutputHead::gaussian_posterior, substream_seed(seed, "init-adversary"));
  OptimizerState mech_opt = make_optimizer_state(model.mechanism, config.step_size);
  OptimizerState adv_opt = make_optimizer_state(model.adversary, config.step_size);
  Rng noise_rng = make_substream(seed, "seed-noise");
  Rng batch_rng = make_substream(seed, "batch-shuffle");

  const auto& val_rows = data.split.validation.empty() ? data.split.train : data.split.validation;
  const Matrix val_w = observation(data, mode, val_rows);
  const Matrix val_x = data.x.select_rows(val_rows);
  const Matrix val_y = data.y.select_rows(val_rows);
  Matrix val_u(val_rows.size(), config.noise_dim);
  {
    Rng r = make_substream(seed, "validation-noise");
    fill_seed_noise(val_u, r);
  }

  std::vector<std::size_t> order = data.split.train;
  Mlp best_mech = model.mechanism, best_adv = model.adversary;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, batch_rng);
    double sum_a = 0.0, sum_m = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      std::span<const std::size_t> rows(order.data() + start, len);
      const Matrix w = observation(data, mode, rows);
      const Matrix x = data.x.select_rows(rows);
      const Matrix y = data.y.select_rows(rows);
      Matrix u(len, config.noise_dim);
      fill_seed_noise(u, noise_rng);

      const Matrix z = release(model.mechanism, w, u);
      double la = 0.0;
      for (std::size_t s = 0; s < config.adversary_steps; ++s) la = adversary_update(model.adversary, adv_opt, x, z);
      auto mg = mechanism_gradient(model.mechanism, model.adversary, w, u, x, y, config.lambda, config.delta,
                                   config.penalty);
      if (!std::isfinite(la) || !std::isfinite(mg.loss))
        throw Error(ErrorKind::training, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batches + 1));
      optimizer_step(model.mechanism, mg.grads, mech_opt);
      sum_a += la;
      sum_m += mg.loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_adversary = sum_a / static_cast<double>(batches);
    rec.loss_mechanism = sum_m / static_cast<double>(batches);
    const Matrix vz = release(model.mechanism, val_w, val_u);
    rec.val_loss_adversary = adversary_loss(model.adversary, val_x, vz);
    rec.val_penalty = detail::distortion_penalty(val_y, vz, config.lambda, config.delta, config.penalty).value;
    rec.val_loss_mechanism = rec.val_penalty - rec.val_loss_adversary;
    rec.val_leakage_ksg = ksg_leakage(val_x, vz);
    double dist = 0.0;
    for (std::size_t k = 0; k < vz.size(); ++k) dist += (val_y.data()[k] - vz.data()[k]) * (val_y.data()[k] - vz.data()[k]);
    rec.val_distortion = dist / static_cast<double>(vz.rows());
    rec.val_leakage_proxy = detail::gaussian_leakage_proxy(val_x, vz);
    if (!std::isfinite(rec.val_loss_mechanism))
      throw Error(ErrorKind::training, "non-finite validation loss at epoch " + std::to_string(epoch));
    model.history.push_back(rec);

    const double val_objective = rec.val_penalty + rec.val_leakage_ksg;
    if (epoch < config.warmup_epochs && epoch < config.epochs) continue;
    if (val_objective < best_val) {
      best_val = val_objective;
      best_mech = model.mechanism;
      best_adv = model.adversary;
      model.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.mechanism = std::move(best_mech);
  model.adversary = std::move(best_adv);
  return model;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  const auto old = os.precision(17);
  os << "epoch,loss_adversary,loss_mechanism,val_distortion,val_leakage_proxy\n";
  for (const auto& r : history)
    os << r.epoch << ',' << r.loss_adversary << ',' << r.loss_mechanism << ',' << r.val_distortion << ','
       << r.val_leakage_proxy << '\n';
  os.precision(old);
}

/// Mechanism block followed by adversary block, both in PPAN-MLP v1 format.
inline void write_model(std::ostream& os, const PpanModel& m) {
  write_mlp(os, m.mechanism);
  write_mlp(os, m.adversary);
}

inline void read_model(std::istream& is, PpanModel& m) {
  m.mechanism = read_mlp(is);
  m.adversary = read_mlp(is);
}

}  // namespace ppan
