#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vidseq::vlad {

/// Read-only row-major matrix view.
struct MatrixView {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct Codebook {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> centers;  // k x d row-major

  std::span<const double> center(std::size_t i) const { return {centers.data() + i * d, d}; }
};

struct KMeansResult {
  Codebook codebook;
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or max_iter assignment steps have run. Empty clusters move to the
/// point farthest from its current center.
KMeansResult kmeans_fit(MatrixView samples, std::size_t k, std::size_t max_iter, std::uint64_t seed);

/// Nearest center per row (ties go to the lower index); also reports the
/// squared distance. OpenMP-parallel over rows.
void assign_nearest(const Codebook& codebook, MatrixView samples, std::span<std::size_t> labels,
                    std::span<double> sq_dist);

namespace reference {
void assign_nearest(const Codebook& codebook, MatrixView samples, std::span<std::size_t> labels,
                    std::span<double> sq_dist);
}

/// Hard-assignment residual sums, signed square root, then L2 normalization.
/// Returns all zeros when the pre-normalization norm is below 1e-12.
std::vector<double> vlad_encode(const Codebook& codebook, MatrixView frames);

double signed_sqrt(double x);

void save_codebook(const std::string& path, const Codebook& codebook);
Codebook load_codebook(const std::string& path);
void write_codebook(std::ostream& out, const Codebook& codebook);
Codebook read_codebook(std::istream& in);

}  // namespace vidseq::vlad
