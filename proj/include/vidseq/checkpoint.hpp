#pragma once

#include <iosfwd>
#include <string>

#include "vidseq/models.hpp"

namespace vidseq::models {

/// Versioned little-endian snapshot: magic "FLCK", the ModelSpec, every
/// parameter (name, shape, float64 values) in declaration order, the
/// batch-norm running statistics, and the VLAD codebook when present.
void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace vidseq::models
