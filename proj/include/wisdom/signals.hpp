#pragma once

// Synthetic signals and statistics used by the decomposition demos.

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "wisdom/errors.hpp"
#include "wisdom/rng.hpp"
#include "wisdom/wavelet.hpp"

namespace wisdom {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("pearson: need two equal-length series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Repeats each coefficient `factor` times and keeps the trailing `length`
/// samples, so coefficient n lines up with the samples it summarises.
inline std::vector<double> upsample_hold(const std::vector<double>& coeffs, std::size_t factor, std::size_t length) {
  std::vector<double> out;
  out.reserve(coeffs.size() * factor);
  for (double c : coeffs)
    for (std::size_t k = 0; k < factor; ++k) out.push_back(c);
  if (out.size() > length) out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(out.size() - length));
  return out;
}

/// Trailing moving average with window `w` (shorter at the start).
inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t w) {
  std::vector<double> out(x.size());
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i];
    if (i >= w) acc -= x[i - w];
    out[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  return out;
}

/// Three equal-length sinusoidal stages whose frequency doubles per stage.
/// Each stage spans whole periods, so all stages share mean 0 and variance
/// amplitude^2 / 2.
struct ChirpSpec {
  std::size_t stage_length = 256;
  std::vector<double> periods{128.0, 64.0, 32.0};
  double amplitude = std::numbers::sqrt2;
  double noise_std = std::numbers::sqrt2;  ///< N(0, 2) noise
};

struct ChirpSignal {
  std::vector<double> clean;
  std::vector<double> noisy;
};

inline ChirpSignal make_chirp(const ChirpSpec& spec, Rng& rng) {
  ChirpSignal s;
  for (double p : spec.periods)
    for (std::size_t i = 0; i < spec.stage_length; ++i)
      s.clean.push_back(spec.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / p));
  s.noisy.reserve(s.clean.size());
  for (double c : s.clean) s.noisy.push_back(c + normal(rng, 0.0, spec.noise_std));
  return s;
}

/// Column of a [T x D] tensor as a vector.
inline std::vector<double> column(const Tensor& t, std::size_t c) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t.at(i, c);
  return out;
}

inline Tensor column_tensor(const std::vector<double>& x) { return Tensor({x.size(), 1}, x); }

/// Fig. 1-style comparison: how well do the raw noisy samples and the level-M
/// fixed-Haar approximation track the noise-free trend, i.e. the level-M
/// approximation of the noise-free chirp held at sample resolution?
struct MotivatingResult {
  ChirpSignal signal;
  WaveletStack noisy_stack;
  std::vector<double> trend;   ///< upsampled u_M(clean), sample resolution
  double raw_corr = 0;         ///< corr(noisy, trend) at sample resolution
  double approx_corr = 0;      ///< corr(upsampled u_M(noisy), trend) at sample resolution
  double coeff_corr = 0;       ///< corr(u_M(noisy), u_M(clean)) at coefficient resolution
  double gain() const { return approx_corr - raw_corr; }
};

inline MotivatingResult motivating_example(const ChirpSpec& spec, Rng& rng, std::size_t levels = 2) {
  MotivatingResult r;
  r.signal = make_chirp(spec, rng);
  const auto bank = FilterBank::haar();
  const std::size_t T = r.signal.clean.size();
  r.noisy_stack = dwt_full(column_tensor(r.signal.noisy), bank, levels);
  const auto clean_stack = dwt_full(column_tensor(r.signal.clean), bank, levels);
  const auto u_noisy = column(r.noisy_stack.approximation, 0);
  r.trend = upsample_hold(column(clean_stack.approximation, 0), std::size_t{1} << levels, T);
  r.raw_corr = pearson(r.signal.noisy, r.trend);
  r.approx_corr = pearson(upsample_hold(u_noisy, std::size_t{1} << levels, T), r.trend);
  r.coeff_corr = pearson(u_noisy, column(clean_stack.approximation, 0));
  return r;
}

}  // namespace wisdom
