#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "vidseq/errors.hpp"
#include "vidseq/vlad.hpp"

using namespace vidseq;
namespace fs = std::filesystem;

TEST_CASE("k-means with one point per cluster") {
  const std::vector<double> pts{0, 0, 5, 1, -3, 4};
  const auto fit = vlad::kmeans_fit({pts, 3, 2}, 3, 10, 1);
  CHECK(fit.objective_trace.back() == 0.0);
  std::vector<std::vector<double>> centers;
  for (std::size_t i = 0; i < 3; ++i) centers.emplace_back(fit.codebook.center(i).begin(), fit.codebook.center(i).end());
  std::sort(centers.begin(), centers.end());
  CHECK(centers == std::vector<std::vector<double>>{{-3, 4}, {0, 0}, {5, 1}});
  CHECK_THROWS_AS(vlad::kmeans_fit({pts, 3, 2}, 4, 10, 1), PreconditionError);
}

TEST_CASE("k-means recovers two separated blobs") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<double> pts;
  double sum[2][2] = {{0, 0}, {0, 0}};
  for (int blob = 0; blob < 2; ++blob)
    for (int i = 0; i < 40; ++i) {
      const double x = (blob ? 20.0 : -20.0) + n(rng), y = (blob ? 5.0 : -5.0) + n(rng);
      pts.insert(pts.end(), {x, y});
      sum[blob][0] += x;
      sum[blob][1] += y;
    }
  const auto fit = vlad::kmeans_fit({pts, 80, 2}, 2, 50, 3);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto center = fit.codebook.center(c);
    const int blob = center[0] > 0 ? 1 : 0;
    CHECK(center[0] == doctest::Approx(sum[blob][0] / 40).epsilon(1e-12));
    CHECK(center[1] == doctest::Approx(sum[blob][1] / 40).epsilon(1e-12));
  }
}

TEST_CASE("k-means objective never increases and is reproducible") {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 20; ++inst) {
    const auto pts = testing::random_normal(rng, 150 * 3);
    const auto a = vlad::kmeans_fit({pts, 150, 3}, 5, 30, inst);
    const auto b = vlad::kmeans_fit({pts, 150, 3}, 5, 30, inst);
    CHECK(a.codebook.centers == b.codebook.centers);
    for (std::size_t i = 1; i < a.objective_trace.size(); ++i) CHECK(a.objective_trace[i] <= a.objective_trace[i - 1]);
  }
}

TEST_CASE("parallel nearest-center assignment matches the serial reference") {
  omp_set_num_threads(4);
  std::mt19937_64 rng(4);
  const auto centers = testing::random_normal(rng, 7 * 5);
  const vlad::Codebook cb{7, 5, centers};
  const auto pts = testing::random_normal(rng, 301 * 5);
  std::vector<std::size_t> l1(301), l2(301);
  std::vector<double> d1(301), d2(301);
  vlad::assign_nearest(cb, {pts, 301, 5}, l1, d1);
  vlad::reference::assign_nearest(cb, {pts, 301, 5}, l2, d2);
  CHECK(l1 == l2);
  CHECK(d1 == d2);
}

TEST_CASE("vlad encoding") {
  const vlad::Codebook cb{2, 3, {0, 0, 0, 1, 1, 1}};
  // frames on the centers
  const std::vector<double> on{0, 0, 0, 1, 1, 1, 1, 1, 1};
  for (double v : vlad::vlad_encode(cb, {on, 3, 3})) CHECK(v == 0.0);

  const vlad::Codebook zero{1, 3, {0, 0, 0}};
  const std::vector<double> f{4, -9, 0.25};
  const auto enc = vlad::vlad_encode(zero, {f, 1, 3});
  const double s[3] = {2, -3, 0.5};
  const double norm = std::sqrt(4 + 9 + 0.25);
  for (int i = 0; i < 3; ++i) CHECK(enc[i] == doctest::Approx(s[i] / norm).epsilon(1e-15));

  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto x = testing::random_normal(rng, 9 * 3);
    double sq = 0.0;
    for (double v : vlad::vlad_encode(cb, {x, 9, 3})) sq += v * v;
    CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(vlad::vlad_encode(cb, {f, 1, 2}), DimensionError);
  CHECK(vlad::signed_sqrt(-4.0) == -2.0);
}

TEST_CASE("codebook files") {
  const vlad::Codebook cb{2, 3, {0.1, -2, 3e-7, 1, 1e300, -0.0}};
  std::stringstream ss;
  vlad::write_codebook(ss, cb);
  const auto back = vlad::read_codebook(ss);
  CHECK(back.k == 2);
  CHECK(back.d == 3);
  CHECK(back.centers == cb.centers);

  const auto path = fs::temp_directory_path() / "vidseq_test_codebook.bin";
  vlad::save_codebook(path.string(), cb);
  auto bytes = testing::slurp(path.string());
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(vlad::read_codebook(bad), FormatError);
  std::stringstream cut(testing::slurp(path.string()).substr(0, 20));
  CHECK_THROWS_AS(vlad::read_codebook(cut), CorruptionError);
  fs::remove(path);
}
