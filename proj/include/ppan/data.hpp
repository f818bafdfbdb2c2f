#pragma once

// Datasets of (private X, useful Y) pairs: synthetic generators, CSV
// ingestion, train/validation/test splitting and z-score standardisation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace ppan {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  bool empty() const { return train.empty() && validation.empty() && test.empty(); }
};

/// Per-column z-score parameters: standardized = (raw - mean) / scale.
struct AffineTransform {
  std::vector<double> x_mean, x_scale;
  std::vector<double> y_mean, y_scale;

  static Matrix apply(const Matrix& m, const std::vector<double>& mean, const std::vector<double>& scale) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = (m(r, c) - mean[c]) / scale[c];
    return out;
  }
  static Matrix invert(const Matrix& m, const std::vector<double>& mean, const std::vector<double>& scale) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c) * scale[c] + mean[c];
    return out;
  }

  /// Squared-error distortion measured in standardized units, converted back
  /// to the original units of a scalar Y.
  double distortion_to_original_units(double standardized_distortion) const {
    return standardized_distortion * y_scale.at(0) * y_scale.at(0);
  }
};

struct Provenance {
  std::string source;  // generator name or file path
  std::uint64_t seed = 0;
  bool standardized = false;
  std::optional<AffineTransform> transform;
};

struct Dataset {
  SampleMatrix x;
  SampleMatrix y;
  Split split;
  Provenance provenance;

  std::size_t size() const { return x.rows(); }
};

inline void check_dataset(const Dataset& d) {
  if (d.x.rows() != d.y.rows())
    throw Error(ErrorKind::shape, "x and y row counts differ (" + std::to_string(d.x.rows()) + " vs " +
                                      std::to_string(d.y.rows()) + ")");
}

// ---------------------------------------------------------------------------
// Generators

/// 2x2 covariance stored row-major.
using Cov2 = std::array<double, 4>;

inline Cov2 cov2(double var_x, double cov_xy, double var_y) { return {var_x, cov_xy, cov_xy, var_y}; }

struct MixtureComponent {
  double weight;
  std::array<double, 2> mean;
  Cov2 covariance;
};

struct MixtureSpec {
  std::vector<MixtureComponent> components;

  /// The three-component benchmark mixture (equal weights).
  static MixtureSpec three_component() {
    return {{{1.0 / 3, {0.0, 0.0}, cov2(1.0, 0.85, 1.0)},
             {1.0 / 3, {1.0, 1.0}, cov2(1.5, 0.95, 1.5)},
             {1.0 / 3, {-1.0, -1.0}, cov2(0.5, 0.35, 0.5)}}};
  }
};

namespace detail {

/// Lower Cholesky factor (l00, l10, l11) of a symmetric positive definite 2x2.
inline std::array<double, 3> cholesky2(const Cov2& c) {
  if (!std::isfinite(c[0]) || !std::isfinite(c[1]) || !std::isfinite(c[3]) || c[1] != c[2])
    throw Error(ErrorKind::generation, "covariance must be finite and symmetric");
  if (!(c[0] > 0.0)) throw Error(ErrorKind::generation, "covariance is not positive definite");
  const double l00 = std::sqrt(c[0]);
  const double l10 = c[1] / l00;
  const double rest = c[3] - l10 * l10;
  if (!(rest > 0.0)) throw Error(ErrorKind::generation, "covariance is not positive definite");
  return {l00, l10, std::sqrt(rest)};
}

inline std::array<double, 2> correlated_normal(const std::array<double, 3>& l, Rng& rng) {
  const double a = standard_normal(rng);
  const double b = standard_normal(rng);
  return {l[0] * a, l[1] * a + l[2] * b};
}

inline Dataset from_pairs(const std::vector<std::array<double, 2>>& rows, std::string source, std::uint64_t seed) {
  Dataset d;
  d.x = Matrix(rows.size(), 1);
  d.y = Matrix(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.x(i, 0) = rows[i][0];
    d.y(i, 0) = rows[i][1];
  }
  d.provenance.source = std::move(source);
  d.provenance.seed = seed;
  return d;
}

inline double normal_cdf(double v) { return 0.5 * std::erfc(-v / std::numbers::sqrt2); }

}  // namespace detail

/// Exactly n_per_component draws from each component, rows shuffled. Column
/// 0 of each component is X, column 1 is Y.
inline Dataset gen_gaussian_mixture(std::size_t n_per_component, const MixtureSpec& spec, std::uint64_t seed) {
  if (spec.components.empty()) throw Error(ErrorKind::generation, "mixture has no components");
  double wsum = 0.0;
  for (const auto& c : spec.components) {
    if (!(c.weight > 0.0)) throw Error(ErrorKind::generation, "mixture weights must be positive");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorKind::generation, "mixture weights must sum to 1");
  std::vector<std::array<double, 3>> factors;
  for (const auto& c : spec.components) factors.push_back(detail::cholesky2(c.covariance));

  Rng rng = make_substream(seed, "data");
  std::vector<std::array<double, 2>> rows;
  rows.reserve(n_per_component * spec.components.size());
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    for (std::size_t i = 0; i < n_per_component; ++i) {
      auto g = detail::correlated_normal(factors[k], rng);
      rows.push_back({spec.components[k].mean[0] + g[0], spec.components[k].mean[1] + g[1]});
    }
  }
  Rng shuffle_rng = make_substream(seed, "shuffle");
  shuffle(rows, shuffle_rng);
  return detail::from_pairs(rows, "mixture3", seed);
}

/// Elliptical Laplace as a Gaussian scale mixture sqrt(W) G, W ~ Exp(1), so
/// the covariance equals `covariance`.
inline Dataset gen_multivariate_laplace(std::size_t n, const Cov2& covariance, std::uint64_t seed) {
  const auto l = detail::cholesky2(covariance);
  Rng rng = make_substream(seed, "data");
  std::vector<std::array<double, 2>> rows(n);
  for (auto& r : rows) {
    auto g = detail::correlated_normal(l, rng);
    const double s = std::sqrt(standard_exponential(rng));
    r = {s * g[0], s * g[1]};
  }
  return detail::from_pairs(rows, "laplace", seed);
}

/// Gaussian-copula correlation giving Pearson correlation `target` between
/// the uniform marginals: r = (6/pi) asin(rho/2)  <=>  rho = 2 sin(pi r / 6).
inline double uniform_copula_correlation(double target) {
  if (!(std::abs(target) <= 1.0)) throw Error(ErrorKind::generation, "target correlation outside [-1, 1]");
  return 2.0 * std::sin(std::numbers::pi * target / 6.0);
}

/// Uniform-shaped marginals with the requested covariance: copula uniforms
/// on [0,1], centered by the sample mean and scaled by sqrt(12 var).
inline Dataset gen_multivariate_uniform(std::size_t n, const Cov2& target_covariance, std::uint64_t seed) {
  detail::cholesky2(target_covariance);  // validates PD
  const double target = target_covariance[1] / std::sqrt(target_covariance[0] * target_covariance[3]);
  const double rho = uniform_copula_correlation(target);
  const auto l = detail::cholesky2(cov2(1.0, rho, 1.0));
  Rng rng = make_substream(seed, "data");
  std::vector<std::array<double, 2>> rows(n);
  std::array<double, 2> mean{0.0, 0.0};
  for (auto& r : rows) {
    auto g = detail::correlated_normal(l, rng);
    r = {detail::normal_cdf(g[0]), detail::normal_cdf(g[1])};
    mean[0] += r[0];
    mean[1] += r[1];
  }
  if (n > 0) {
    mean[0] /= static_cast<double>(n);
    mean[1] /= static_cast<double>(n);
  }
  const double sx = std::sqrt(12.0 * target_covariance[0]);
  const double sy = std::sqrt(12.0 * target_covariance[3]);
  for (auto& r : rows) r = {(r[0] - mean[0]) * sx, (r[1] - mean[1]) * sy};
  return detail::from_pairs(rows, "uniform", seed);
}

/// Zero-mean bivariate normal, equal variances, correlation rho.
inline Dataset gen_bivariate_gaussian(std::size_t n, double rho, double var, std::uint64_t seed) {
  if (!(std::abs(rho) <= 1.0)) throw Error(ErrorKind::generation, "rho must lie in [-1, 1]");
  if (!(var > 0.0)) throw Error(ErrorKind::generation, "variance must be positive");
  Rng rng = make_substream(seed, "data");
  const double s = std::sqrt(var);
  const double c = std::sqrt(1.0 - rho * rho);
  std::vector<std::array<double, 2>> rows(n);
  for (auto& r : rows) {
    const double a = standard_normal(rng);
    const double b = standard_normal(rng);
    r = {s * a, s * (rho * a + c * b)};
  }
  return detail::from_pairs(rows, "gaussian", seed);
}

struct LoadProfileRow {
  std::size_t house;
  std::size_t day;
  std::size_t hour;
  double consumption;  // kWh
};

/// Synthetic hourly household consumption: per-house base load times a
/// morning/evening double-peak daily shape, with log-normal hourly noise.
/// Positive and right-skewed like real meter readings.
inline std::vector<LoadProfileRow> gen_load_profiles(std::size_t houses, std::size_t days, std::uint64_t seed) {
  Rng rng = make_substream(seed, "data");
  std::vector<LoadProfileRow> rows;
  rows.reserve(houses * days * 24);
  for (std::size_t h = 0; h < houses; ++h) {
    const double base = 0.4 * std::exp(0.35 * standard_normal(rng));
    const double evening = 1.0 + 1.5 * uniform01(rng);
    for (std::size_t d = 0; d < days; ++d) {
      const double day_level = std::exp(0.15 * standard_normal(rng));
      for (std::size_t t = 0; t < 24; ++t) {
        const double hour = static_cast<double>(t);
        const double morning_peak = 0.8 * std::exp(-0.5 * (hour - 7.5) * (hour - 7.5) / 2.0);
        const double evening_peak = evening * std::exp(-0.5 * (hour - 19.0) * (hour - 19.0) / 4.0);
        const double shape = 1.0 + morning_peak + evening_peak;
        const double noise = std::exp(0.4 * standard_normal(rng));
        rows.push_back({h, d, t, base * day_level * shape * noise});
      }
    }
  }
  return rows;
}

inline void write_load_profile_csv(std::ostream& os, const std::vector<LoadProfileRow>& rows) {
  const auto old = os.precision(17);
  os << "house,day,hour,consumption\n";
  for (const auto& r : rows) os << r.house << ',' << r.day << ',' << r.hour << ',' << r.consumption << '\n';
  os.precision(old);
}

inline void fill_seed_noise(Matrix& out, Rng& rng) {
  for (double& v : out.data()) v = uniform01(rng);
}

/// n x m_noise i.i.d. uniform[0,1) seed noise from the seed's noise substream.
inline Matrix gen_seed_noise(std::size_t n, std::size_t m_noise, std::uint64_t seed) {
  if (m_noise == 0) throw Error(ErrorKind::argument, "seed noise width must be >= 1");
  Matrix u(n, m_noise);
  Rng rng = make_substream(seed, "seed-noise");
  fill_seed_noise(u, rng);
  return u;
}

// ---------------------------------------------------------------------------
// CSV

struct IngestionSummary {
  std::string path;
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::vector<std::size_t> dropped_lines;  // 1-based file line numbers
  std::optional<AffineTransform> transform;  // set once the data is standardized

  void write(std::ostream& os) const {
    os << "source " << path << '\n'
       << "rows_read " << rows_read << '\n'
       << "rows_kept " << rows_read - rows_dropped << '\n'
       << "rows_dropped " << rows_dropped << '\n';
    if (!dropped_lines.empty()) {
      os << "dropped_lines";
      for (auto l : dropped_lines) os << ' ' << l;
      os << '\n';
    }
    if (transform) {
      const auto old = os.precision(17);
      auto emit = [&](const char* name, const std::vector<double>& v) {
        os << name;
        for (double e : v) os << ' ' << e;
        os << '\n';
      };
      emit("x_mean", transform->x_mean);
      emit("x_scale", transform->x_scale);
      emit("y_mean", transform->y_mean);
      emit("y_scale", transform->y_scale);
      os.precision(old);
    }
  }
};

struct CsvLoad {
  Dataset dataset;
  IngestionSummary summary;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA" || cell == "null";
}

}  // namespace detail

/// Reads named columns from a headed CSV. The same column may feed both X
/// and Y. Rows with missing values are dropped and counted.
inline CsvLoad load_csv(const std::string& path, const std::vector<std::string>& x_columns,
                        const std::vector<std::string>& y_columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  if (x_columns.empty() || y_columns.empty()) throw Error(ErrorKind::argument, "x and y columns must be named");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw Error(ErrorKind::schema, "'" + path + "' is empty (no header row)");
  const auto header = detail::split_csv_line(detail::trim(line));
  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorKind::schema, "column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> xc, yc;
  for (const auto& c : x_columns) xc.push_back(column_of(c));
  for (const auto& c : y_columns) yc.push_back(column_of(c));

  CsvLoad res;
  res.summary.path = path;
  std::vector<double> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++res.summary.rows_read;
    const auto cells = detail::split_csv_line(line);
    bool missing = false;
    std::vector<double> row_x, row_y;
    auto read = [&](std::size_t c, std::vector<double>& dst) {
      if (c >= cells.size() || detail::is_missing(cells[c])) {
        missing = true;
        return;
      }
      const char* s = cells[c].c_str();
      char* end = nullptr;
      const double v = std::strtod(s, &end);
      if (end == s || *end != '\0')
        throw Error(ErrorKind::parse, "non-numeric cell '" + cells[c] + "' at row " + std::to_string(line_no) +
                                          " column '" + header[c] + "'");
      if (!std::isfinite(v)) missing = true;
      dst.push_back(v);
    };
    for (auto c : xc) read(c, row_x);
    for (auto c : yc) read(c, row_y);
    if (missing) {
      ++res.summary.rows_dropped;
      res.summary.dropped_lines.push_back(line_no);
      continue;
    }
    xs.insert(xs.end(), row_x.begin(), row_x.end());
    ys.insert(ys.end(), row_y.begin(), row_y.end());
  }
  const std::size_t n = xs.size() / xc.size();
  res.dataset.x = Matrix(n, xc.size(), std::move(xs));
  res.dataset.y = Matrix(n, yc.size(), std::move(ys));
  res.dataset.provenance.source = path;
  return res;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& d, const std::string& x_name = "x",
                              const std::string& y_name = "y") {
  check_dataset(d);
  auto names = [](const std::string& base, std::size_t cols, std::ostream& o) {
    for (std::size_t c = 0; c < cols; ++c) o << (c ? "," : "") << base << (cols > 1 ? std::to_string(c) : "");
  };
  const auto old = os.precision(17);
  names(x_name, d.x.cols(), os);
  os << ',';
  names(y_name, d.y.cols(), os);
  os << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.x.cols(); ++c) os << (c ? "," : "") << d.x(r, c);
    for (std::size_t c = 0; c < d.y.cols(); ++c) os << ',' << d.y(r, c);
    os << '\n';
  }
  os.precision(old);
}

// ---------------------------------------------------------------------------
// Splitting and standardisation

/// Shuffled train/validation/test split; validation is carved out of the
/// training rows. Rows beyond n_train + n_test are dropped so the three
/// index sets always partition the returned dataset.
inline Dataset split_dataset(const Dataset& d, std::size_t n_train, std::size_t n_test, double val_fraction,
                             std::uint64_t seed) {
  check_dataset(d);
  if (n_train + n_test > d.size())
    throw Error(ErrorKind::argument, "split needs " + std::to_string(n_train + n_test) + " rows, dataset has " +
                                         std::to_string(d.size()));
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw Error(ErrorKind::argument, "validation fraction must lie in [0, 1)");
  std::vector<std::size_t> perm(d.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng = make_substream(seed, "split");
  shuffle(perm, rng);
  const std::size_t used = n_train + n_test;

  std::vector<std::size_t> kept(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(used));
  std::sort(kept.begin(), kept.end());
  std::vector<std::size_t> new_pos(d.size(), 0);
  for (std::size_t i = 0; i < kept.size(); ++i) new_pos[kept[i]] = i;

  Dataset out;
  out.x = d.x.select_rows(kept);
  out.y = d.y.select_rows(kept);
  out.provenance = d.provenance;
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n_train)));
  for (std::size_t i = 0; i < used; ++i) {
    const std::size_t r = new_pos[perm[i]];
    if (i < n_train - n_val) out.split.train.push_back(r);
    else if (i < n_train) out.split.validation.push_back(r);
    else out.split.test.push_back(r);
  }
  return out;
}

/// Z-scores every column of X and Y with training-split statistics (1/N).
/// Refuses datasets that are already standardized.
inline Dataset standardize(const Dataset& d) {
  check_dataset(d);
  if (d.provenance.standardized) throw Error(ErrorKind::state, "dataset is already standardized");
  if (d.split.train.empty()) throw Error(ErrorKind::argument, "standardize needs a nonempty training split");
  auto stats = [&](const Matrix& m, std::vector<double>& mean, std::vector<double>& scale, const char* name) {
    const double n = static_cast<double>(d.split.train.size());
    mean.assign(m.cols(), 0.0);
    scale.assign(m.cols(), 0.0);
    for (std::size_t c = 0; c < m.cols(); ++c) {
      for (auto r : d.split.train) mean[c] += m(r, c);
      mean[c] /= n;
      double v = 0.0;
      for (auto r : d.split.train) v += (m(r, c) - mean[c]) * (m(r, c) - mean[c]);
      scale[c] = std::sqrt(v / n);
      if (!(scale[c] > 0.0))
        throw Error(ErrorKind::degenerate, std::string(name) + " column " + std::to_string(c) +
                                               " has zero training variance");
    }
  };
  AffineTransform t;
  stats(d.x, t.x_mean, t.x_scale, "x");
  stats(d.y, t.y_mean, t.y_scale, "y");
  Dataset out = d;
  out.x = AffineTransform::apply(d.x, t.x_mean, t.x_scale);
  out.y = AffineTransform::apply(d.y, t.y_mean, t.y_scale);
  out.provenance.standardized = true;
  out.provenance.transform = std::move(t);
  return out;
}

/// Undoes `standardize`.
inline Dataset destandardize(const Dataset& d) {
  if (!d.provenance.standardized || !d.provenance.transform)
    throw Error(ErrorKind::state, "dataset is not standardized");
  const auto& t = *d.provenance.transform;
  Dataset out = d;
  out.x = AffineTransform::invert(d.x, t.x_mean, t.x_scale);
  out.y = AffineTransform::invert(d.y, t.y_mean, t.y_scale);
  out.provenance.standardized = false;
  out.provenance.transform.reset();
  return out;
}

}  // namespace ppan
