#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the differentiable ops. The default entry points are
// OpenMP-parallel; kernels::reference holds the plain serial loops they are
// tested against. Both sum every output element in the same order, so the
// results agree bit for bit regardless of thread count.
namespace vidseq::kernels {

/// C[m x n] = op(A) * op(B) with inner dimension k. A is stored m x k
/// (k x m when trans_a), B is stored k x n (n x k when trans_b). When
/// accumulate is set the product is added to C.
struct GemmShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

/// x: batch x in_channels x time, w: out_channels x in_channels x width,
/// y: batch x out_channels x time. Zero padding of (width - 1) / 2.
struct Conv1dShape {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t time = 0;
  std::size_t width = 1;
};

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);

// bias may be empty.
void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
// dx += d(loss)/dx
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
// dw += d(loss)/dw, dbias += d(loss)/dbias (dbias may be empty).
void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);

int max_threads();

namespace reference {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);
void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx);
void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias);

}  // namespace reference

}  // namespace vidseq::kernels
