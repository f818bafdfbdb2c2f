#pragma once

// Kraskov-Stoegbauer-Grassberger k-nearest-neighbour estimators of
// differential entropy and mutual information (natural log, nats).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace ppan {

inline constexpr std::size_t kDefaultNeighbors = 4;

/// Digamma function for m > 0: upward recurrence to m >= 10, then the
/// asymptotic series. Absolute error well below 1e-12 on that range.
inline double digamma(double m) {
  if (!(m > 0.0) || !std::isfinite(m)) throw Error(ErrorKind::domain, "digamma needs m > 0");
  double acc = 0.0;
  while (m < 10.0) {
    acc -= 1.0 / m;
    m += 1.0;
  }
  const double inv = 1.0 / m;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
  return acc + std::log(m) - 0.5 * inv - series;
}

/// pi^{d/2} / (2^d Gamma(d/2 + 1)): volume of the d-ball of unit *diameter*,
/// matching radii that are measured as twice the neighbour distance.
inline double unit_ball_volume(std::size_t d) {
  if (d == 0) throw Error(ErrorKind::domain, "dimension must be >= 1");
  const double dd = static_cast<double>(d);
  return std::pow(std::numbers::pi, dd / 2.0) / (std::pow(2.0, dd) * std::tgamma(dd / 2.0 + 1.0));
}

enum class Norm { euclidean, max_norm };

/// The distance every neighbour search in this file uses, so indexed and
/// exhaustive searches agree to the last bit.
inline double distance(std::span<const double> a, std::span<const double> b, Norm norm) {
  if (norm == Norm::euclidean) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double d = a[j] - b[j];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

/// k-d tree over a sample matrix (bounding-box pruning, leaf buckets).
class KnnIndex {
 public:
  KnnIndex(const SampleMatrix& samples, Norm norm) : samples_(&samples), norm_(norm) {
    if (samples.rows() == 0) throw Error(ErrorKind::argument, "cannot index an empty sample");
    order_.resize(samples.rows());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * samples.rows() / kLeafSize + 2);
    build(0, samples.rows());
  }

  Norm norm() const { return norm_; }
  const SampleMatrix& samples() const { return *samples_; }

  /// Distance from sample i to its k-th nearest other sample.
  double kth_neighbor_distance(std::size_t i, std::size_t k) const {
    if (k == 0 || k >= samples_->rows())
      throw Error(ErrorKind::argument, "need 1 <= k < N for neighbour queries");
    std::priority_queue<double> best;  // max-heap of the k smallest distances
    knn(0, i, k, best);
    return best.top();
  }

  /// Number of samples j != i with distance(x_j, x_i) strictly below `radius`.
  std::size_t count_within(std::size_t i, double radius) const {
    if (!(radius > 0.0)) return 0;
    return count(0, i, radius) - 1;  // self is always at distance 0
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin, end;
    std::vector<double> lo, hi;
    std::size_t left = 0, right = 0;  // 0 == leaf
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t dim = samples_->cols();
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end, std::vector<double>(dim, INFINITY), std::vector<double>(dim, -INFINITY)});
    for (std::size_t p = begin; p < end; ++p) {
      auto r = samples_->row(order_[p]);
      for (std::size_t j = 0; j < dim; ++j) {
        nodes_[id].lo[j] = std::min(nodes_[id].lo[j], r[j]);
        nodes_[id].hi[j] = std::max(nodes_[id].hi[j], r[j]);
      }
    }
    if (end - begin <= kLeafSize) return id;
    std::size_t split = 0;
    double spread = -1.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double s = nodes_[id].hi[j] - nodes_[id].lo[j];
      if (s > spread) {
        spread = s;
        split = j;
      }
    }
    if (spread <= 0.0) return id;  // all points identical
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return (*samples_)(a, split) < (*samples_)(b, split);
                     });
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  // Lower / upper bound on the distance from q to any point in the node box.
  // Rounding is monotone, so these bound the exact computed distances.
  double box_min(const Node& n, std::span<const double> q) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      double g = 0.0;
      if (q[j] < n.lo[j]) g = n.lo[j] - q[j];
      else if (q[j] > n.hi[j]) g = q[j] - n.hi[j];
      if (norm_ == Norm::euclidean) acc += g * g;
      else acc = std::max(acc, g);
    }
    return norm_ == Norm::euclidean ? std::sqrt(acc) : acc;
  }

  double box_max(const Node& n, std::span<const double> q) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double g = std::max(std::abs(q[j] - n.lo[j]), std::abs(n.hi[j] - q[j]));
      if (norm_ == Norm::euclidean) acc += g * g;
      else acc = std::max(acc, g);
    }
    return norm_ == Norm::euclidean ? std::sqrt(acc) : acc;
  }

  void knn(std::size_t id, std::size_t i, std::size_t k, std::priority_queue<double>& best) const {
    const Node& n = nodes_[id];
    auto q = samples_->row(i);
    if (best.size() == k && box_min(n, q) > best.top()) return;
    if (n.left == 0) {
      for (std::size_t p = n.begin; p < n.end; ++p) {
        const std::size_t j = order_[p];
        if (j == i) continue;
        const double d = distance(q, samples_->row(j), norm_);
        if (best.size() < k) best.push(d);
        else if (d < best.top()) {
          best.pop();
          best.push(d);
        }
      }
      return;
    }
    // nearer child first
    const double dl = box_min(nodes_[n.left], q);
    const double dr = box_min(nodes_[n.right], q);
    if (dl <= dr) {
      knn(n.left, i, k, best);
      knn(n.right, i, k, best);
    } else {
      knn(n.right, i, k, best);
      knn(n.left, i, k, best);
    }
  }

  std::size_t count(std::size_t id, std::size_t i, double radius) const {
    const Node& n = nodes_[id];
    auto q = samples_->row(i);
    if (box_min(n, q) >= radius) return 0;
    if (box_max(n, q) < radius) return n.end - n.begin;
    if (n.left == 0) {
      std::size_t c = 0;
      for (std::size_t p = n.begin; p < n.end; ++p)
        if (distance(q, samples_->row(order_[p]), norm_) < radius) ++c;
      return c;
    }
    return count(n.left, i, radius) + count(n.right, i, radius);
  }

  const SampleMatrix* samples_;
  Norm norm_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline constexpr std::uint64_t kJitterSeed = 0x6a69747465720001ULL;

/// Adds uniform(-1, 1) * 1e-10 * (per-column std) noise from a fixed stream,
/// breaking exact ties without moving any statistic measurably.
inline SampleMatrix add_jitter(const SampleMatrix& x, std::uint64_t seed = kJitterSeed) {
  SampleMatrix out = x;
  const std::size_t n = x.rows();
  std::vector<double> scale(x.cols(), 0.0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += x(r, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x(r, j) - mean) * (x(r, j) - mean);
    scale[j] = 1e-10 * std::sqrt(var / static_cast<double>(n));
  }
  Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < x.cols(); ++j) out(r, j) += scale[j] * (2.0 * uniform01(rng) - 1.0);
  return out;
}

namespace detail {

inline void check_sample(const SampleMatrix& x, std::size_t k, const char* name) {
  if (k == 0) throw Error(ErrorKind::argument, "k must be positive");
  if (x.rows() <= k)
    throw Error(ErrorKind::argument, std::string(name) + ": need N > k (N=" + std::to_string(x.rows()) +
                                         ", k=" + std::to_string(k) + ")");
  if (x.cols() == 0) throw Error(ErrorKind::argument, std::string(name) + ": zero-dimensional sample");
  if (!x.all_finite()) throw Error(ErrorKind::argument, std::string(name) + ": non-finite entries");
}

}  // namespace detail

/// eps_i = twice the Euclidean distance to the k-th neighbour (no jitter applied here).
inline std::vector<double> knn_entropy_radii(const SampleMatrix& x, std::size_t k) {
  KnnIndex index(x, Norm::euclidean);
  std::vector<double> eps(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) eps[i] = 2.0 * index.kth_neighbor_distance(i, k);
  return eps;
}

/// Kozachenko-Leonenko / KSG differential entropy estimate in nats.
inline double knn_entropy(const SampleMatrix& x, std::size_t k = kDefaultNeighbors) {
  detail::check_sample(x, k, "knn_entropy");
  const auto eps = knn_entropy_radii(add_jitter(x), k);
  double sum_log = 0.0;
  for (double e : eps) {
    if (!(e > 0.0)) throw Error(ErrorKind::degenerate, "zero neighbour distance after jitter (constant data?)");
    sum_log += std::log(e);
  }
  const double n = static_cast<double>(x.rows());
  const double d = static_cast<double>(x.cols());
  return d / n * sum_log + std::log(unit_ball_volume(x.cols())) + digamma(n) - digamma(static_cast<double>(k));
}

struct KsgNeighborStats {
  std::vector<double> half_eps;  // eps(i)/2: max-norm distance to the k-th joint neighbour
  std::vector<std::size_t> n_x;
  std::vector<std::size_t> n_z;
};

/// Joint-space neighbour radii and strict marginal counts (no jitter applied here).
inline KsgNeighborStats ksg_neighbor_stats(const SampleMatrix& x, const SampleMatrix& z, std::size_t k) {
  const SampleMatrix joint = hconcat(x, z);
  KnnIndex joint_index(joint, Norm::max_norm);
  KnnIndex x_index(x, Norm::max_norm);
  KnnIndex z_index(z, Norm::max_norm);
  KsgNeighborStats s;
  const std::size_t n = x.rows();
  s.half_eps.resize(n);
  s.n_x.resize(n);
  s.n_z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = joint_index.kth_neighbor_distance(i, k);
    s.half_eps[i] = r;
    s.n_x[i] = x_index.count_within(i, r);
    s.n_z[i] = z_index.count_within(i, r);
  }
  return s;
}

/// KSG (algorithm 1) mutual information estimate in nats. Raw value: may be
/// slightly negative for independent inputs.
inline double ksg_mi(const SampleMatrix& x, const SampleMatrix& z, std::size_t k = kDefaultNeighbors) {
  if (x.rows() != z.rows())
    throw Error(ErrorKind::argument, "ksg_mi: sample counts differ (" + std::to_string(x.rows()) + " vs " +
                                         std::to_string(z.rows()) + ")");
  detail::check_sample(x, k, "ksg_mi");
  detail::check_sample(z, k, "ksg_mi");
  const auto s = ksg_neighbor_stats(add_jitter(x), add_jitter(z), k);
  const std::size_t n = x.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += digamma(static_cast<double>(s.n_x[i]) + 1.0) + digamma(static_cast<double>(s.n_z[i]) + 1.0);
  return digamma(static_cast<double>(n)) + digamma(static_cast<double>(k)) - acc / static_cast<double>(n);
}

/// Leakage as reported everywhere: the KSG estimate clamped at zero.
inline double ksg_leakage(const SampleMatrix& x, const SampleMatrix& z, std::size_t k = kDefaultNeighbors) {
  return std::max(0.0, ksg_mi(x, z, k));
}

}  // namespace ppan
