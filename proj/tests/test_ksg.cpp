#include <gtest/gtest.h>

#include "ppan/data.hpp"
#include "ppan/ksg.hpp"
#include "test_support.hpp"

using namespace ppan;
using namespace testing_support;

namespace {

constexpr double kEulerGamma = 0.57721566490153286;

// Quadratic-time oracle: all-pairs neighbour search.
double brute_kth(const Matrix& x, std::size_t i, std::size_t k, Norm norm) {
  std::vector<double> d;
  for (std::size_t j = 0; j < x.rows(); ++j)
    if (j != i) d.push_back(distance(x.row(i), x.row(j), norm));
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
  return d[k - 1];
}

std::size_t brute_count(const Matrix& x, std::size_t i, double r) {
  std::size_t c = 0;
  for (std::size_t j = 0; j < x.rows(); ++j)
    if (j != i && distance(x.row(i), x.row(j), Norm::max_norm) < r) ++c;
  return c;
}

Matrix gaussian_column(std::size_t n, std::uint64_t seed) { return random_matrix(n, 1, seed); }

Matrix uniform_column(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, 1);
  for (double& v : m.data()) v = uniform01(rng);
  return m;
}

std::pair<Matrix, Matrix> correlated(std::size_t n, double rho, std::uint64_t seed) {
  const Dataset d = gen_bivariate_gaussian(n, rho, 1.0, seed);
  return {d.x, d.y};
}

}  // namespace

TEST(Digamma, KnownValues) {
  EXPECT_NEAR(digamma(1.0), -kEulerGamma, 1e-10);
  EXPECT_NEAR(digamma(2.0), 1.0 - kEulerGamma, 1e-10);
  double h9 = 0.0;
  for (int i = 1; i <= 9; ++i) h9 += 1.0 / i;
  EXPECT_NEAR(digamma(10.0), h9 - kEulerGamma, 1e-10);
  EXPECT_NEAR(digamma(10.0), 2.2517525891, 1e-9);
  EXPECT_NEAR(digamma(0.5), -kEulerGamma - 2.0 * std::log(2.0), 1e-10);
}

TEST(Digamma, Recurrence) {
  for (double m : {0.5, 1.0, 2.0, 10.0, 100.0}) EXPECT_NEAR(digamma(m + 1.0) - digamma(m), 1.0 / m, 1e-10);
}

TEST(Digamma, DomainError) {
  EXPECT_ERROR_KIND(digamma(0.0), ErrorKind::domain);
  EXPECT_ERROR_KIND(digamma(-3.0), ErrorKind::domain);
}

TEST(UnitBallVolume, SmallDimensions) {
  EXPECT_NEAR(unit_ball_volume(1), 1.0, 1e-15);
  EXPECT_NEAR(unit_ball_volume(2), std::numbers::pi / 4.0, 1e-15);
  EXPECT_NEAR(unit_ball_volume(3), std::numbers::pi / 6.0, 1e-15);
}

TEST(KnnEntropy, StandardNormal) {
  EXPECT_NEAR(knn_entropy(gaussian_column(4000, 1), 4), 0.5 * std::log(2 * std::numbers::pi * std::numbers::e), 0.05);
}

TEST(KnnEntropy, Uniform) { EXPECT_NEAR(knn_entropy(uniform_column(4000, 2), 4), 0.0, 0.05); }

TEST(KnnEntropy, TwoDimensionalGaussian) {
  // independent standard normals: ln(2 pi e)
  EXPECT_NEAR(knn_entropy(random_matrix(4000, 2, 3), 4), std::log(2 * std::numbers::pi * std::numbers::e), 0.07);
}

TEST(KnnEntropy, TranslationInvariance) {
  const Matrix x = gaussian_column(1000, 4);
  Matrix shifted = x;
  for (double& v : shifted.data()) v += 3.25;
  EXPECT_NEAR(knn_entropy(shifted), knn_entropy(x), 1e-9);
}

TEST(KnnEntropy, PermutationInvariance) {
  const Matrix x = gaussian_column(1000, 5);
  std::vector<std::size_t> perm(x.rows());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(6);
  shuffle(perm, rng);
  EXPECT_NEAR(knn_entropy(x.select_rows(perm)), knn_entropy(x), 1e-9);
}

TEST(KnnEntropy, Errors) {
  EXPECT_ERROR_KIND(knn_entropy(gaussian_column(4, 1), 4), ErrorKind::argument);
  EXPECT_ERROR_KIND(knn_entropy(Matrix(50, 1, 2.0), 4), ErrorKind::degenerate);
}

TEST(KnnEntropy, DuplicatesHandledByJitter) {
  Matrix x = uniform_column(2000, 7);
  for (std::size_t r = 0; r < x.rows(); r += 2) x(r + 1, 0) = x(r, 0);  // every value twice
  EXPECT_TRUE(std::isfinite(knn_entropy(x)));
}

TEST(KsgMi, IndependentNormals) {
  EXPECT_NEAR(ksg_mi(gaussian_column(4000, 11), gaussian_column(4000, 12), 4), 0.0, 0.05);
}

TEST(KsgMi, CorrelatedGaussians) {
  for (double rho : {0.5, 0.9}) {
    auto [x, z] = correlated(4000, rho, 13);
    EXPECT_NEAR(ksg_mi(x, z, 4), -0.5 * std::log(1 - rho * rho), 0.10) << "rho " << rho;
  }
}

TEST(KsgMi, Symmetric) {
  auto [x, z] = correlated(1500, 0.6, 14);
  EXPECT_EQ(ksg_mi(x, z), ksg_mi(z, x));
}

TEST(KsgMi, NearInvariantUnderMonotoneMaps) {
  auto [x, z] = correlated(4000, 0.8, 15);
  Matrix fx = x, fz = z;
  for (double& v : fx.data()) v = std::exp(v);
  for (double& v : fz.data()) v = v * v * v + v;
  EXPECT_LT(std::abs(ksg_mi(fx, fz) - ksg_mi(x, z)), 0.1);
}

TEST(KsgMi, ConstantReleaseCarriesNoInformation) {
  EXPECT_LE(ksg_leakage(gaussian_column(2000, 16), Matrix(2000, 1, 0.0)), 0.05);
}

TEST(KsgMi, LengthMismatchIsArgumentError) {
  EXPECT_ERROR_KIND(ksg_mi(gaussian_column(100, 1), gaussian_column(99, 2)), ErrorKind::argument);
}

TEST(KsgMi, LeakageIsClamped) {
  const Matrix x = gaussian_column(500, 17), z = gaussian_column(500, 18);
  EXPECT_EQ(ksg_leakage(x, z), std::max(0.0, ksg_mi(x, z)));
  EXPECT_GE(ksg_leakage(x, z), 0.0);
}

TEST(KnnIndex, MatchesBruteForceOnEntropyRadii) {
  for (std::size_t dim : {1u, 2u, 3u}) {
    const Matrix x = add_jitter(random_matrix(200, dim, 20 + dim));
    const auto eps = knn_entropy_radii(x, 4);
    for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(eps[i], 2.0 * brute_kth(x, i, 4, Norm::euclidean));
  }
}

TEST(KnnIndex, MatchesBruteForceOnKsgStatistics) {
  auto [x0, z0] = correlated(200, 0.7, 30);
  const Matrix x = add_jitter(x0), z = add_jitter(z0);
  const auto s = ksg_neighbor_stats(x, z, 4);
  const Matrix joint = hconcat(x, z);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double r = brute_kth(joint, i, 4, Norm::max_norm);
    EXPECT_EQ(s.half_eps[i], r);
    const std::size_t nx = brute_count(x, i, r), nz = brute_count(z, i, r);
    EXPECT_EQ(s.n_x[i], nx);
    EXPECT_EQ(s.n_z[i], nz);
    acc += digamma(static_cast<double>(nx) + 1.0) + digamma(static_cast<double>(nz) + 1.0);
  }
  const double oracle = digamma(200.0) + digamma(4.0) - acc / 200.0;
  EXPECT_EQ(ksg_mi(x0, z0, 4), oracle);
}

TEST(KnnIndex, ExcludesSelfAndCountsStrictly) {
  const Matrix x = Matrix::column({0.0, 1.0, 2.0, 3.0});
  KnnIndex idx(x, Norm::max_norm);
  EXPECT_EQ(idx.kth_neighbor_distance(0, 1), 1.0);
  EXPECT_EQ(idx.kth_neighbor_distance(1, 2), 1.0);
  EXPECT_EQ(idx.count_within(1, 1.0), 0u);  // neighbours at exactly 1 are not counted
  EXPECT_EQ(idx.count_within(1, 1.5), 2u);
}
