#pragma once

// Discrete wavelet transform built from stride-2 causal convolutions.
//
// Level m maps u_{m-1} [T x D] to (u_m, g_m), each [ceil(T/2) x D]:
//   u_m(n) = sum_k y0(k) * u_{m-1}(2n + off - k)
//   g_m(n) = sum_k y1(k) * u_{m-1}(2n + off - k)
// Indices left of 0 read zeros. `off` aligns the last coefficient with the
// last input sample, which amounts to left zero-padding odd lengths to even
// and pairing (2n, 2n+1) of the padded signal. Every column (latent channel)
// is transformed independently with the same filter pair.

#include <cmath>
#include <vector>

#include "wisdom/errors.hpp"
#include "wisdom/tensor.hpp"

namespace wisdom {

struct FilterBank {
  Tensor y0;  ///< low-pass
  Tensor y1;  ///< high-pass
  bool trainable = false;

  std::size_t length() const { return y0.numel(); }

  /// Haar pair, zero-padded to `length` taps (length even, >= 2).
  static FilterBank haar(bool trainable = false, std::size_t length = 2) {
    if (length < 2 || length % 2 != 0) throw ParameterError("filter length must be even and >= 2");
    const double a = 1.0 / std::sqrt(2.0);
    std::vector<double> lo(length, 0.0), hi(length, 0.0);
    lo[0] = a;
    lo[1] = a;
    hi[0] = a;
    hi[1] = -a;
    return FilterBank{Tensor({length}, std::move(lo), trainable), Tensor({length}, std::move(hi), trainable),
                      trainable};
  }

  /// ||y0|| = ||y1|| = 1 and y0 . y1 = 0, within `tol`.
  bool orthonormal(double tol = 1e-12) const {
    double n0 = 0, n1 = 0, dot = 0;
    for (std::size_t k = 0; k < length(); ++k) {
      n0 += y0.at(k) * y0.at(k);
      n1 += y1.at(k) * y1.at(k);
      dot += y0.at(k) * y1.at(k);
    }
    return std::abs(n0 - 1.0) < tol && std::abs(n1 - 1.0) < tol && std::abs(dot) < tol;
  }
};

struct WaveletStack {
  Tensor approximation;         ///< u_M
  std::vector<Tensor> details;  ///< details[m-1] = g_m
  std::size_t levels = 0;
  std::size_t original_length = 0;
};

/// Per-level coefficient lengths: ceil(T / 2^m) for m = 1..M.
inline std::vector<std::size_t> level_lengths(std::size_t T, std::size_t levels) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < levels; ++m) {
    T = (T + 1) / 2;
    out.push_back(T);
  }
  return out;
}

struct LevelOutput {
  Tensor approximation;
  Tensor detail;
};

inline LevelOutput dwt_level(const Tensor& u_prev, const FilterBank& bank) {
  if (u_prev.rows() < 2) throw DecompositionError("sequence too short: need at least 2 samples per level");
  return {conv1d_depthwise(u_prev, bank.y0, 2, 1, ConvAlign::end),
          conv1d_depthwise(u_prev, bank.y1, 2, 1, ConvAlign::end)};
}

inline WaveletStack dwt_full(const Tensor& z, const FilterBank& bank, std::size_t levels) {
  if (levels < 1) throw ParameterError("levels must be >= 1");
  const std::size_t T = z.rows();
  if (levels >= 64 || T < (std::size_t{1} << levels))
    throw DecompositionError("sequence too short: length " + std::to_string(T) + " < 2^" + std::to_string(levels));
  WaveletStack s;
  s.levels = levels;
  s.original_length = T;
  Tensor u = z;
  for (std::size_t m = 0; m < levels; ++m) {
    auto lv = dwt_level(u, bank);
    s.details.push_back(lv.detail);
    u = lv.approximation;
  }
  s.approximation = u;
  return s;
}

/// Inverse transform for a fixed orthonormal two-tap bank. Test oracle only;
/// the trainable path reconstructs with a learned linear map.
inline Tensor idwt_full(const WaveletStack& stack, const FilterBank& bank) {
  if (bank.length() != 2 || !bank.orthonormal(1e-12))
    throw ReconstructionError("idwt_full needs a fixed orthonormal two-tap filter bank");
  if (stack.levels < 1 || stack.details.size() != stack.levels)
    throw ReconstructionError("stack levels do not match its detail list");
  const auto lens = level_lengths(stack.original_length, stack.levels);
  const std::size_t D = stack.approximation.cols();
  if (stack.approximation.rows() != lens.back())
    throw ReconstructionError("approximation length does not match original length");
  for (std::size_t m = 0; m < stack.levels; ++m)
    if (stack.details[m].rows() != lens[m] || stack.details[m].cols() != D)
      throw ReconstructionError("detail level " + std::to_string(m + 1) + " has wrong shape " +
                                shape_str(stack.details[m].shape()));

  const double a00 = bank.y0.at(0), a01 = bank.y0.at(1), a10 = bank.y1.at(0), a11 = bank.y1.at(1);
  std::vector<double> u(stack.approximation.data().begin(), stack.approximation.data().end());
  for (std::size_t m = stack.levels; m-- > 0;) {
    const std::size_t n = lens[m];
    const std::size_t prev_len = m == 0 ? stack.original_length : lens[m - 1];
    auto g = stack.details[m].data();
    std::vector<double> padded(2 * n * D);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < D; ++d) {
        const double uj = u[j * D + d], gj = g[j * D + d];
        padded[(2 * j + 1) * D + d] = a00 * uj + a10 * gj;
        padded[(2 * j) * D + d] = a01 * uj + a11 * gj;
      }
    const std::size_t skip = 2 * n - prev_len;  // 0 or 1 leading pad row
    u.assign(padded.begin() + static_cast<std::ptrdiff_t>(skip * D), padded.end());
  }
  return Tensor({stack.original_length, D}, std::move(u));
}

/// Keeps the trailing ceil(rho * len) rows of every detail level and zeroes
/// the rest; shapes and the approximation are unchanged.
inline WaveletStack select_details(const WaveletStack& stack, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) throw ParameterError("keep_fraction must lie in (0, 1]");
  WaveletStack out = stack;
  if (keep_fraction == 1.0) return out;
  for (auto& g : out.details) {
    const std::size_t n = g.rows(), D = g.cols();
    const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n)));
    std::vector<double> mask(n * D, 0.0);
    for (std::size_t j = n - std::min(keep, n); j < n; ++j)
      for (std::size_t d = 0; d < D; ++d) mask[j * D + d] = 1.0;
    g = mul(g, Tensor(g.shape(), std::move(mask)));
  }
  return out;
}

}  // namespace wisdom
