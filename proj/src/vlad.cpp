#include "vidseq/vlad.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>

#include "vidseq/binary_io.hpp"
#include "vidseq/errors.hpp"

namespace vidseq::vlad {

namespace {

constexpr char kCodebookMagic[4] = {'F', 'L', 'C', 'B'};
constexpr std::uint32_t kCodebookVersion = 1;

inline double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

inline void nearest(const Codebook& cb, const double* row, std::size_t& label, double& dist) {
  label = 0;
  dist = squared_distance(row, cb.centers.data(), cb.d);
  for (std::size_t c = 1; c < cb.k; ++c) {
    const double dc = squared_distance(row, cb.centers.data() + c * cb.d, cb.d);
    if (dc < dist) {
      dist = dc;
      label = c;
    }
  }
}

void check_view(MatrixView m, const char* what) {
  if (m.values.size() != m.rows * m.cols) {
    throw DimensionError(std::string(what) + ": matrix view holds " + std::to_string(m.values.size()) +
                         " values, expected " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
  }
}

}  // namespace

double signed_sqrt(double x) { return x < 0 ? -std::sqrt(-x) : std::sqrt(x); }

void assign_nearest(const Codebook& codebook, MatrixView samples, std::span<std::size_t> labels,
                    std::span<double> sq_dist) {
  const auto n = static_cast<std::int64_t>(samples.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    nearest(codebook, samples.values.data() + i * samples.cols, labels[i], sq_dist[i]);
  }
}

namespace reference {

void assign_nearest(const Codebook& codebook, MatrixView samples, std::span<std::size_t> labels,
                    std::span<double> sq_dist) {
  for (std::size_t i = 0; i < samples.rows; ++i) {
    const double* row = samples.values.data() + i * samples.cols;
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < codebook.k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < codebook.d; ++j) {
        const double diff = row[j] - codebook.centers[c * codebook.d + j];
        s += diff * diff;
      }
      if (s < best_dist) {
        best_dist = s;
        best = c;
      }
    }
    labels[i] = best;
    sq_dist[i] = best_dist;
  }
}

}  // namespace reference

KMeansResult kmeans_fit(MatrixView samples, std::size_t k, std::size_t max_iter, std::uint64_t seed) {
  check_view(samples, "kmeans_fit");
  if (k == 0) throw ConfigError("kmeans_fit: k must be positive");
  if (samples.rows < k) {
    throw PreconditionError("kmeans_fit: " + std::to_string(samples.rows) +
                            " samples cannot seed " + std::to_string(k) + " clusters");
  }
  const std::size_t n = samples.rows, d = samples.cols;
  const double* x = samples.values.data();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  KMeansResult result;
  Codebook& cb = result.codebook;
  cb.k = k;
  cb.d = d;
  cb.centers.assign(k * d, 0.0);

  // k-means++ seeding.
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(x + pick * d, d, cb.centers.begin() + static_cast<std::ptrdiff_t>(c * d));
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(x + i * d, cb.centers.data() + c * d, d));
      total += closest[i];
    }
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      continue;
    }
    const double target = unit(rng) * total;
    double running = 0.0;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      running += closest[i];
      if (closest[i] > 0.0 && running >= target) {
        pick = i;
        break;
      }
    }
    while (closest[pick] <= 0.0 && pick > 0) --pick;
  }

  std::vector<std::size_t> labels(n), previous;
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    assign_nearest(cb, samples, labels, dist);
    double objective = 0.0;
    for (double v : dist) objective += v;
    result.objective_trace.push_back(objective);
    result.iterations = iter + 1;
    if (labels == previous) break;

    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t j = 0; j < d; ++j) sums[labels[i] * d + j] += x[i * d + j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::copy_n(x + far * d, d, cb.centers.begin() + static_cast<std::ptrdiff_t>(c * d));
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < d; ++j)
        cb.centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    previous = labels;
  }
  return result;
}

std::vector<double> vlad_encode(const Codebook& codebook, MatrixView frames) {
  check_view(frames, "vlad_encode");
  if (frames.rows == 0) throw PreconditionError("vlad_encode: no frames");
  if (frames.cols != codebook.d) {
    throw DimensionError("vlad_encode: frame dimension " + std::to_string(frames.cols) +
                         " does not match codebook dimension " + std::to_string(codebook.d));
  }
  const std::size_t d = codebook.d;
  std::vector<double> out(codebook.k * d, 0.0);
  for (std::size_t i = 0; i < frames.rows; ++i) {
    const double* row = frames.values.data() + i * d;
    std::size_t label = 0;
    double dist = 0.0;
    nearest(codebook, row, label, dist);
    const double* center = codebook.centers.data() + label * d;
    for (std::size_t j = 0; j < d; ++j) out[label * d + j] += row[j] - center[j];
  }
  double norm_sq = 0.0;
  for (auto& v : out) {
    v = signed_sqrt(v);
    norm_sq += v * v;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm < 1e-12) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  for (auto& v : out) v /= norm;
  return out;
}

void write_codebook(std::ostream& out, const Codebook& codebook) {
  if (codebook.centers.size() != codebook.k * codebook.d) {
    throw ValidationError("codebook holds " + std::to_string(codebook.centers.size()) +
                          " values, expected k*d");
  }
  binary::Writer w(out);
  w.bytes(kCodebookMagic, 4);
  w.put<std::uint32_t>(kCodebookVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codebook.k));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(codebook.d));
  w.put_array<double>(codebook.centers);
}

Codebook read_codebook(std::istream& in) {
  binary::Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCodebookMagic, 4) != 0) throw FormatError("not a codebook file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCodebookVersion) {
    throw FormatError("unsupported codebook version " + std::to_string(version));
  }
  Codebook cb;
  cb.k = r.get<std::uint32_t>();
  cb.d = r.get<std::uint32_t>();
  if (cb.k == 0 || cb.d == 0) throw FormatError("codebook with zero clusters or dimension");
  cb.centers.resize(cb.k * cb.d);
  r.get_array<double>(cb.centers);
  for (double v : cb.centers) {
    if (!std::isfinite(v)) throw FormatError("codebook contains a non-finite center value");
  }
  return cb;
}

void save_codebook(const std::string& path, const Codebook& codebook) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_codebook(out, codebook);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_codebook(in);
}

}  // namespace vidseq::vlad
