#include "vidseq/kernels.hpp"

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vidseq::kernels {

namespace {

inline double at_a(const GemmShape& s, std::span<const double> a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double at_b(const GemmShape& s, std::span<const double> b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

// Offsets of input position t + shift that stay inside [0, time).
inline void tap_range(std::ptrdiff_t shift, std::size_t time, std::size_t& lo, std::size_t& hi) {
  const auto T = static_cast<std::ptrdiff_t>(time);
  std::ptrdiff_t l = shift < 0 ? -shift : 0;
  std::ptrdiff_t h = shift > 0 ? T - shift : T;
  if (h < l) h = l;
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(s.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> acc(s.n, 0.0);
    if (s.trans_b) {
      for (std::size_t j = 0; j < s.n; ++j) {
        double sum = 0.0;
        const double* brow = b.data() + j * s.k;
        for (std::size_t p = 0; p < s.k; ++p) sum += at_a(s, a, i, p) * brow[p];
        acc[j] = sum;
      }
    } else {
      for (std::size_t p = 0; p < s.k; ++p) {
        const double av = at_a(s, a, i, p);
        const double* brow = b.data() + p * s.n;
        for (std::size_t j = 0; j < s.n; ++j) acc[j] += av * brow[j];
      }
    }
    double* crow = c.data() + i * s.n;
    if (accumulate) {
      for (std::size_t j = 0; j < s.n; ++j) crow[j] += acc[j];
    } else {
      for (std::size_t j = 0; j < s.n; ++j) crow[j] = acc[j];
    }
  }
}

void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto jobs = static_cast<std::int64_t>(s.batch * s.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const auto b = static_cast<std::size_t>(job) / s.out_channels;
    const auto o = static_cast<std::size_t>(job) % s.out_channels;
    std::vector<double> acc(s.time, 0.0);
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      const double* xrow = x.data() + (b * s.in_channels + c) * s.time;
      for (std::size_t k = 0; k < s.width; ++k) {
        const double wv = w[(o * s.in_channels + c) * s.width + k];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
        std::size_t lo = 0, hi = 0;
        tap_range(shift, s.time, lo, hi);
        for (std::size_t t = lo; t < hi; ++t) acc[t] += wv * xrow[t + shift];
      }
    }
    double* yrow = y.data() + (b * s.out_channels + o) * s.time;
    const double bv = bias.empty() ? 0.0 : bias[o];
    for (std::size_t t = 0; t < s.time; ++t) yrow[t] = acc[t] + bv;
  }
}

void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto jobs = static_cast<std::int64_t>(s.batch * s.in_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const auto b = static_cast<std::size_t>(job) / s.in_channels;
    const auto c = static_cast<std::size_t>(job) % s.in_channels;
    std::vector<double> acc(s.time, 0.0);
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const double* dyrow = dy.data() + (b * s.out_channels + o) * s.time;
      for (std::size_t k = 0; k < s.width; ++k) {
        const double wv = w[(o * s.in_channels + c) * s.width + k];
        // input position u receives output position u - shift
        const std::ptrdiff_t shift = pad - static_cast<std::ptrdiff_t>(k);
        std::size_t lo = 0, hi = 0;
        tap_range(shift, s.time, lo, hi);
        for (std::size_t u = lo; u < hi; ++u) acc[u] += wv * dyrow[u + shift];
      }
    }
    double* dxrow = dx.data() + (b * s.in_channels + c) * s.time;
    for (std::size_t u = 0; u < s.time; ++u) dxrow[u] += acc[u];
  }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto jobs = static_cast<std::int64_t>(s.out_channels * s.in_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const auto o = static_cast<std::size_t>(job) / s.in_channels;
    const auto c = static_cast<std::size_t>(job) % s.in_channels;
    for (std::size_t k = 0; k < s.width; ++k) {
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
      std::size_t lo = 0, hi = 0;
      tap_range(shift, s.time, lo, hi);
      double sum = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) {
        const double* dyrow = dy.data() + (b * s.out_channels + o) * s.time;
        const double* xrow = x.data() + (b * s.in_channels + c) * s.time;
        for (std::size_t t = lo; t < hi; ++t) sum += dyrow[t] * xrow[t + shift];
      }
      dw[(o * s.in_channels + c) * s.width + k] += sum;
    }
  }
  if (dbias.empty()) return;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    double sum = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      const double* dyrow = dy.data() + (b * s.out_channels + o) * s.time;
      for (std::size_t t = 0; t < s.time; ++t) sum += dyrow[t];
    }
    dbias[o] += sum;
  }
}

namespace reference {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) sum += at_a(s, a, i, p) * at_b(s, b, p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + sum : sum;
    }
  }
}

void conv1d_forward(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const auto pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto T = static_cast<std::ptrdiff_t>(s.time);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::ptrdiff_t t = 0; t < T; ++t) {
        double sum = 0.0;
        for (std::size_t c = 0; c < s.in_channels; ++c)
          for (std::size_t k = 0; k < s.width; ++k) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
            if (src < 0 || src >= T) continue;
            sum += w[(o * s.in_channels + c) * s.width + k] *
                   x[(b * s.in_channels + c) * s.time + static_cast<std::size_t>(src)];
          }
        y[(b * s.out_channels + o) * s.time + static_cast<std::size_t>(t)] =
            sum + (bias.empty() ? 0.0 : bias[o]);
      }
}

void conv1d_backward_input(const Conv1dShape& s, std::span<const double> dy,
                           std::span<const double> w, std::span<double> dx) {
  const auto pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto T = static_cast<std::ptrdiff_t>(s.time);
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t c = 0; c < s.in_channels; ++c)
      for (std::ptrdiff_t u = 0; u < T; ++u) {
        double sum = 0.0;
        for (std::size_t o = 0; o < s.out_channels; ++o)
          for (std::size_t k = 0; k < s.width; ++k) {
            const std::ptrdiff_t t = u + pad - static_cast<std::ptrdiff_t>(k);
            if (t < 0 || t >= T) continue;
            sum += w[(o * s.in_channels + c) * s.width + k] *
                   dy[(b * s.out_channels + o) * s.time + static_cast<std::size_t>(t)];
          }
        dx[(b * s.in_channels + c) * s.time + static_cast<std::size_t>(u)] += sum;
      }
}

void conv1d_backward_weight(const Conv1dShape& s, std::span<const double> dy,
                            std::span<const double> x, std::span<double> dw,
                            std::span<double> dbias) {
  const auto pad = static_cast<std::ptrdiff_t>(s.width - 1) / 2;
  const auto T = static_cast<std::ptrdiff_t>(s.time);
  for (std::size_t o = 0; o < s.out_channels; ++o)
    for (std::size_t c = 0; c < s.in_channels; ++c)
      for (std::size_t k = 0; k < s.width; ++k) {
        double sum = 0.0;
        for (std::size_t b = 0; b < s.batch; ++b)
          for (std::ptrdiff_t t = 0; t < T; ++t) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - pad;
            if (src < 0 || src >= T) continue;
            sum += dy[(b * s.out_channels + o) * s.time + static_cast<std::size_t>(t)] *
                   x[(b * s.in_channels + c) * s.time + static_cast<std::size_t>(src)];
          }
        dw[(o * s.in_channels + c) * s.width + k] += sum;
      }
  if (dbias.empty()) return;
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    double sum = 0.0;
    for (std::size_t b = 0; b < s.batch; ++b)
      for (std::size_t t = 0; t < s.time; ++t) sum += dy[(b * s.out_channels + o) * s.time + t];
    dbias[o] += sum;
  }
}

}  // namespace reference

}  // namespace vidseq::kernels
