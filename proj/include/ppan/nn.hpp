#pragma once

// Small fully-connected networks with hand-written reverse-mode gradients
// and an Adam optimiser. Everything works on row-major batches: one row per
// sample, so a single-sample forward pass is just a batch of one.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace ppan {

enum class HiddenActivation { relu };
enum class OutputHead { linear, gaussian_posterior };

inline constexpr double kVarianceFloor = 1e-6;

inline std::string_view to_string(OutputHead h) {
  return h == OutputHead::linear ? "linear" : "gaussian_posterior";
}

struct Mlp {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;  // weights[l] is (layer_dims[l+1], layer_dims[l])
  std::vector<std::vector<double>> biases;
  HiddenActivation hidden_activation = HiddenActivation::relu;
  OutputHead output_head = OutputHead::linear;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Same layout as the parameters of an Mlp. Used for gradients and for the
/// optimiser's moment accumulators.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static MlpGradients zeros_like(const Mlp& net) {
    MlpGradients g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      g.weights.emplace_back(net.weights[l].rows(), net.weights[l].cols());
      g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
  }

  MlpGradients& operator*=(double s) {
    for (auto& w : weights)
      for (double& v : w.data()) v *= s;
    for (auto& b : biases)
      for (double& v : b) v *= s;
    return *this;
  }

  friend bool operator==(const MlpGradients&, const MlpGradients&) = default;
};

struct GaussianPosterior {
  std::vector<double> mu;
  std::vector<double> var;
};

namespace detail {

inline bool same_shape(const Mlp& net, const MlpGradients& g) {
  if (g.weights.size() != net.num_layers() || g.biases.size() != net.num_layers()) return false;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (g.weights[l].rows() != net.weights[l].rows() || g.weights[l].cols() != net.weights[l].cols())
      return false;
    if (g.biases[l].size() != net.biases[l].size()) return false;
  }
  return true;
}

inline double softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace detail

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
inline Mlp init_mlp(std::vector<std::size_t> layer_dims, OutputHead head, std::uint64_t seed) {
  if (layer_dims.size() < 2)
    throw Error(ErrorKind::config, "an MLP needs at least input and output widths");
  for (std::size_t d : layer_dims)
    if (d == 0) throw Error(ErrorKind::config, "layer widths must be positive");
  if (head == OutputHead::gaussian_posterior && layer_dims.back() % 2 != 0)
    throw Error(ErrorKind::config, "gaussian_posterior head needs an even output width (mean and variance)");

  Rng rng(seed);
  Mlp net;
  net.layer_dims = std::move(layer_dims);
  net.output_head = head;
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    const std::size_t fan_in = net.layer_dims[l];
    const std::size_t fan_out = net.layer_dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (double& v : w.data()) v = a * (2.0 * uniform01(rng) - 1.0);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

/// Activations kept by a forward pass for the matching backward pass.
struct ForwardCache {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> layer_inputs;  // input to layer l (post-activation of l-1)
  std::vector<Matrix> pre_activations;

  bool valid() const { return !layer_inputs.empty(); }
};

struct ForwardResult {
  Matrix output;  // linear: affine output; gaussian head: [mu | var]
  ForwardCache cache;
};

/// Batched forward pass, one sample per row.
inline ForwardResult forward(const Mlp& net, const Matrix& input) {
  if (input.cols() != net.input_dim())
    throw Error(ErrorKind::shape, "input width " + std::to_string(input.cols()) + " != network input " +
                                      std::to_string(net.input_dim()));
  ForwardResult res;
  res.cache.layer_dims = net.layer_dims;
  const std::size_t batch = input.rows();
  Matrix act = input;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weights[l];
    const auto& b = net.biases[l];
    const std::size_t in = w.cols();
    const std::size_t out = w.rows();
    Matrix pre(batch, out);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* a = act.row(r).data();
      double* p = pre.row(r).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w.row(o).data();
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += wr[i] * a[i];
        p[o] = s;
      }
    }
    res.cache.layer_inputs.push_back(std::move(act));
    const bool hidden = l + 1 < net.num_layers();
    if (hidden) {
      act = pre;
      for (double& v : act.data()) v = v > 0.0 ? v : 0.0;
    } else {
      act = pre;
    }
    res.cache.pre_activations.push_back(std::move(pre));
  }
  if (net.output_head == OutputHead::gaussian_posterior) {
    const std::size_t m = net.output_dim() / 2;
    for (std::size_t r = 0; r < batch; ++r) {
      auto row = act.row(r);
      for (std::size_t j = m; j < 2 * m; ++j) row[j] = detail::softplus(row[j]) + kVarianceFloor;
    }
  }
  res.output = std::move(act);
  return res;
}

/// Single-sample convenience overload.
inline ForwardResult forward(const Mlp& net, std::span<const double> input) {
  return forward(net, Matrix(1, input.size(), std::vector<double>(input.begin(), input.end())));
}

/// Output rows -> posterior parameters (gaussian head only).
inline GaussianPosterior posterior_row(const Matrix& output, std::size_t r) {
  const std::size_t m = output.cols() / 2;
  auto row = output.row(r);
  return {std::vector<double>(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(m)),
          std::vector<double>(row.begin() + static_cast<std::ptrdiff_t>(m), row.end())};
}

struct BackwardResult {
  MlpGradients params;  // summed over the batch rows
  Matrix input_grad;    // d loss / d input, per row
};

/// Reverse pass. `upstream` holds d loss / d output for each row, where the
/// output is what `forward` returned (for the gaussian head: d/dmu, d/dvar).
/// ReLU derivative at exactly 0 is taken as 0.
inline BackwardResult backward(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
  if (!cache.valid()) throw Error(ErrorKind::state, "backward called without a forward cache");
  if (cache.layer_dims != net.layer_dims || cache.layer_inputs.size() != net.num_layers())
    throw Error(ErrorKind::state, "forward cache does not belong to this network");
  const std::size_t batch = cache.layer_inputs.front().rows();
  if (upstream.rows() != batch || upstream.cols() != net.output_dim())
    throw Error(ErrorKind::shape, "upstream gradient shape does not match network output");

  BackwardResult res{MlpGradients::zeros_like(net), {}};
  Matrix delta = upstream;
  if (net.output_head == OutputHead::gaussian_posterior) {
    const std::size_t m = net.output_dim() / 2;
    const Matrix& raw = cache.pre_activations.back();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t j = m; j < 2 * m; ++j) delta(r, j) *= detail::sigmoid(raw(r, j));
  }

  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const Matrix& w = net.weights[l];
    const Matrix& a = cache.layer_inputs[l];
    const std::size_t in = w.cols();
    const std::size_t out = w.rows();
    Matrix& gw = res.params.weights[l];
    auto& gb = res.params.biases[l];
    Matrix prev(batch, in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* d = delta.row(r).data();
      const double* ar = a.row(r).data();
      double* pr = prev.row(r).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        gb[o] += dv;
        double* gwr = gw.row(o).data();
        const double* wr = w.row(o).data();
        for (std::size_t i = 0; i < in; ++i) {
          gwr[i] += dv * ar[i];
          pr[i] += dv * wr[i];
        }
      }
    }
    if (l > 0) {
      const Matrix& pre = cache.pre_activations[l - 1];
      for (std::size_t k = 0; k < prev.size(); ++k)
        if (!(pre.data()[k] > 0.0)) prev.data()[k] = 0.0;
    }
    delta = std::move(prev);
  }
  res.input_grad = std::move(delta);
  return res;
}

/// -log N(x; mu, diag(var)) with the (2 pi)^{d/2} normaliser.
inline double gaussian_nll(const GaussianPosterior& post, std::span<const double> x) {
  if (post.mu.size() != x.size() || post.var.size() != x.size())
    throw Error(ErrorKind::shape, "posterior dimension does not match sample");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double v = post.var[j];
    if (!(v > 0.0)) throw Error(ErrorKind::domain, "non-positive posterior variance");
    const double e = x[j] - post.mu[j];
    s += std::log(2.0 * std::numbers::pi * v) + e * e / v;
  }
  return 0.5 * s;
}

/// Gradient of gaussian_nll with respect to (mu, var), laid out as [d/dmu | d/dvar].
inline void gaussian_nll_grad(const GaussianPosterior& post, std::span<const double> x,
                              std::span<double> out) {
  const std::size_t m = x.size();
  for (std::size_t j = 0; j < m; ++j) {
    const double v = post.var[j];
    const double e = x[j] - post.mu[j];
    out[j] = -e / v;
    out[m + j] = 0.5 * (1.0 / v - e * e / (v * v));
  }
}

struct OptimizerState {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t steps = 0;
  MlpGradients first_moment;
  MlpGradients second_moment;
};

inline OptimizerState make_optimizer_state(const Mlp& net, double step_size = 1e-3) {
  if (!(step_size > 0.0)) throw Error(ErrorKind::config, "step size must be positive");
  OptimizerState s;
  s.step_size = step_size;
  s.first_moment = MlpGradients::zeros_like(net);
  s.second_moment = MlpGradients::zeros_like(net);
  return s;
}

/// One Adam update, in place on both `net` and `state`.
inline void optimizer_step(Mlp& net, const MlpGradients& grads, OptimizerState& state) {
  if (!detail::same_shape(net, grads) || !detail::same_shape(net, state.first_moment) ||
      !detail::same_shape(net, state.second_moment))
    throw Error(ErrorKind::shape, "gradient/optimizer shapes do not match the network");
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.step_size * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    update(net.weights[l].data(), grads.weights[l].data(), state.first_moment.weights[l].data(),
           state.second_moment.weights[l].data());
    update(net.biases[l], grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
  }
}

// ---------------------------------------------------------------------------
// Text serialisation:
//   PPAN-MLP v1
//   <layer dims>
//   <head tag>
//   one line per tensor: W0, b0, W1, b1, ... (row-major)

inline void write_mlp(std::ostream& os, const Mlp& net) {
  std::ostringstream line;
  line.precision(17);
  os << "PPAN-MLP v1\n";
  for (std::size_t i = 0; i < net.layer_dims.size(); ++i) os << (i ? " " : "") << net.layer_dims[i];
  os << '\n' << to_string(net.output_head) << '\n';
  auto emit = [&](const std::vector<double>& v) {
    line.str({});
    for (std::size_t i = 0; i < v.size(); ++i) line << (i ? " " : "") << v[i];
    os << line.str() << '\n';
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    emit(net.weights[l].data());
    emit(net.biases[l]);
  }
}

inline Mlp read_mlp(std::istream& is) {
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) throw Error(ErrorKind::parse, std::string("truncated model: missing ") + what);
    return std::istringstream(line);
  };
  next("magic");
  if (line != "PPAN-MLP v1") throw Error(ErrorKind::parse, "bad model magic line '" + line + "'");
  std::vector<std::size_t> dims;
  {
    auto ls = next("layer dims");
    std::size_t d;
    while (ls >> d) dims.push_back(d);
  }
  OutputHead head;
  next("head tag");
  if (line == "linear") head = OutputHead::linear;
  else if (line == "gaussian_posterior") head = OutputHead::gaussian_posterior;
  else throw Error(ErrorKind::parse, "unknown head tag '" + line + "'");

  Mlp net;
  try {
    net = init_mlp(dims, head, 0);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, std::string("bad layer dims: ") + e.what());
  }
  auto fill = [&](std::vector<double>& v, const char* what) {
    auto ls = next(what);
    std::string tok;
    std::size_t i = 0;
    while (ls >> tok) {
      if (i >= v.size()) throw Error(ErrorKind::parse, std::string("too many values in ") + what);
      try {
        v[i++] = std::stod(tok);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse, "bad number '" + tok + "' in " + what);
      }
    }
    if (i != v.size()) throw Error(ErrorKind::parse, std::string("too few values in ") + what);
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    fill(net.weights[l].data(), "weight tensor");
    fill(net.biases[l], "bias tensor");
  }
  return net;
}

}  // namespace ppan
