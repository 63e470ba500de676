#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vidseq/graph.hpp"
#include "vidseq/models.hpp"
#include "vidseq/tensor.hpp"

namespace vidseq::gradcheck {

inline constexpr double kStep = 1e-4;
/// Gradients smaller than this are compared in absolute rather than relative terms.
inline constexpr double kScaleFloor = 1e-7;
/// Relative disagreement of the one-sided slopes that marks a non-smooth point.
inline constexpr double kKinkThreshold = 0.05;

struct BlockReport {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries sitting on a kink
  double worst_rel_error = 0.0;
  double grad_norm = 0.0;
  bool passed = true;
};

struct Report {
  std::vector<BlockReport> blocks;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, kScaleFloor)
double relative_error(double analytic, double numeric);

using LossFn = std::function<Tensor(Graph&)>;

/// Compares backprop gradients of `loss` against central differences for up
/// to sample_count randomly chosen entries of every parameter block.
/// Entries whose central difference fails and whose one-sided slopes
/// disagree by more than kKinkThreshold straddle a kink and are skipped.
/// Failures are reported, never thrown.
Report check_gradients(std::vector<NamedTensor>& params, const LossFn& loss, std::size_t sample_count,
                       double tolerance, std::uint64_t seed = 0, double step = kStep);

/// Builds the model at the given (toy) dimensions, draws a seeded random
/// masked batch with multi-hot targets, and checks the BCE loss gradients of
/// every parameter block in train mode.
Report grad_check(const models::ModelSpec& spec, std::size_t sample_count, double tolerance,
                  std::uint64_t seed = 0);

std::string format_report(const Report& report);

}  // namespace vidseq::gradcheck
