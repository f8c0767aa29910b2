#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"
#include "wisdom/signals.hpp"
#include "wisdom/wavelet.hpp"

using namespace wisdom;
using wisdom::testing::rand_tensor;

namespace {

const double kA = 1.0 / std::numbers::sqrt2;

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

double energy(const Tensor& t) {
  double e = 0;
  for (double x : t.data()) e += x * x;
  return e;
}

}  // namespace

TEST(FilterBank, HaarInitIsExact) {
  auto b = FilterBank::haar();
  ASSERT_EQ(b.length(), 2u);
  EXPECT_EQ(b.y0.at(0), kA);
  EXPECT_EQ(b.y0.at(1), kA);
  EXPECT_EQ(b.y1.at(0), kA);
  EXPECT_EQ(b.y1.at(1), -kA);
  EXPECT_TRUE(b.orthonormal());
  EXPECT_FALSE(b.y0.requires_grad());
  EXPECT_TRUE(FilterBank::haar(true).y0.requires_grad());
}

TEST(FilterBank, ZeroPaddedLongerHaar) {
  auto b = FilterBank::haar(false, 4);
  ASSERT_EQ(b.length(), 4u);
  EXPECT_EQ(b.y0.at(2), 0.0);
  EXPECT_EQ(b.y1.at(3), 0.0);
  EXPECT_TRUE(b.orthonormal());
  EXPECT_THROW(FilterBank::haar(false, 3), ParameterError);
  EXPECT_THROW(FilterBank::haar(false, 0), ParameterError);
}

TEST(DwtLevel, OnesExample) {
  // End alignment pairs (0,1) and (2,3): u = [sqrt2, sqrt2], g = [0, 0].
  auto lv = dwt_level(Tensor({4, 1}, {1, 1, 1, 1}), FilterBank::haar());
  ASSERT_EQ(lv.approximation.rows(), 2u);
  EXPECT_NEAR(lv.approximation.at(0), std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(lv.approximation.at(1), std::numbers::sqrt2, 1e-15);
  EXPECT_EQ(lv.detail.at(0), 0.0);
  EXPECT_EQ(lv.detail.at(1), 0.0);
}

TEST(DwtLevel, OddLengthPadsOnTheLeft) {
  // [a, b, c] -> padded [0, a, b, c]: u = [a, b + c] / sqrt2, g = [a, c - b] / sqrt2
  // with y1 = [1, -1]/sqrt2 applied as sum_k y1(k) x(2n + off - k).
  auto lv = dwt_level(Tensor({3, 1}, {1, 2, 4}), FilterBank::haar());
  ASSERT_EQ(lv.approximation.rows(), 2u);
  EXPECT_NEAR(lv.approximation.at(0), kA * 1.0, 1e-15);
  EXPECT_NEAR(lv.approximation.at(1), kA * 6.0, 1e-15);
  EXPECT_NEAR(lv.detail.at(0), kA * 1.0, 1e-15);
  EXPECT_NEAR(lv.detail.at(1), kA * 2.0, 1e-15);
}

TEST(DwtLevel, TooShortThrows) {
  EXPECT_THROW(dwt_level(Tensor({1, 1}, {1}), FilterBank::haar()), DecompositionError);
}

TEST(DwtFull, HalvingLengths) {
  auto s = dwt_full(Tensor::zeros({8, 1}), FilterBank::haar(), 3);
  ASSERT_EQ(s.details.size(), 3u);
  EXPECT_EQ(s.details[0].rows(), 4u);
  EXPECT_EQ(s.details[1].rows(), 2u);
  EXPECT_EQ(s.details[2].rows(), 1u);
  EXPECT_EQ(s.approximation.rows(), 1u);
  EXPECT_EQ(s.original_length, 8u);

  Rng rng(3);
  for (std::size_t T = 4; T <= 70; ++T)
    for (std::size_t M = 1; (std::size_t{1} << M) <= T && M <= 4; ++M) {
      auto st = dwt_full(rand_tensor(rng, {T, 2}, -1, 1, false), FilterBank::haar(), M);
      auto lens = level_lengths(T, M);
      std::size_t expect = T;
      for (std::size_t m = 0; m < M; ++m) {
        expect = (expect + 1) / 2;
        EXPECT_EQ(lens[m], expect);
        EXPECT_EQ(st.details[m].rows(), static_cast<std::size_t>(std::ceil(T / std::pow(2.0, m + 1.0))));
        EXPECT_EQ(st.details[m].cols(), 2u);
      }
      EXPECT_EQ(st.approximation.rows(), lens.back());
    }
}

TEST(DwtFull, Errors) {
  EXPECT_THROW(dwt_full(Tensor::zeros({8, 1}), FilterBank::haar(), 0), ParameterError);
  EXPECT_THROW(dwt_full(Tensor::zeros({7, 1}), FilterBank::haar(), 3), DecompositionError);
}

TEST(Idwt, RoundTripRandomSignals) {
  Rng rng(11);
  const auto bank = FilterBank::haar();
  for (std::size_t M = 1; M <= 3; ++M)
    for (int trial = 0; trial < 100; ++trial) {
      Tensor z = rand_tensor(rng, {64, 3}, -5, 5, false);
      EXPECT_LT(max_abs_diff(idwt_full(dwt_full(z, bank, M), bank), z), 1e-10);
    }
}

TEST(Idwt, RoundTripOddLengths) {
  Rng rng(12);
  const auto bank = FilterBank::haar();
  for (std::size_t T : {5u, 9u, 13u, 33u, 63u})
    for (std::size_t M = 1; (std::size_t{1} << M) <= T; ++M) {
      Tensor z = rand_tensor(rng, {T, 2}, -1, 1, false);
      EXPECT_LT(max_abs_diff(idwt_full(dwt_full(z, bank, M), bank), z), 1e-12) << "T=" << T << " M=" << M;
    }
}

TEST(Idwt, ZeroSignal) {
  const auto bank = FilterBank::haar();
  Tensor z = Tensor::zeros({64, 2});
  EXPECT_EQ(max_abs_diff(idwt_full(dwt_full(z, bank, 3), bank), z), 0.0);
}

TEST(Idwt, Errors) {
  const auto bank = FilterBank::haar();
  auto s = dwt_full(Tensor::zeros({16, 1}), bank, 2);
  auto bad = s;
  bad.details[1] = Tensor::zeros({3, 1});
  EXPECT_THROW(idwt_full(bad, bank), ReconstructionError);
  bad = s;
  bad.details.pop_back();
  EXPECT_THROW(idwt_full(bad, bank), ReconstructionError);
  FilterBank skew{Tensor({2}, {1.0, 0.5}), Tensor({2}, {0.5, -1.0})};
  EXPECT_THROW(idwt_full(s, skew), ReconstructionError);
  EXPECT_THROW(idwt_full(s, FilterBank::haar(false, 4)), ReconstructionError);
}

TEST(Dwt, Parseval) {
  Rng rng(13);
  const auto bank = FilterBank::haar();
  for (std::size_t M = 1; M <= 3; ++M)
    for (int trial = 0; trial < 100; ++trial) {
      Tensor z = rand_tensor(rng, {64, 2}, -3, 3, false);
      auto s = dwt_full(z, bank, M);
      double e = energy(s.approximation);
      for (const auto& g : s.details) e += energy(g);
      EXPECT_LT(std::abs(e - energy(z)) / energy(z), 1e-9);
    }
}

TEST(Dwt, ConstantKillsDetails) {
  const auto bank = FilterBank::haar();
  for (double c : {1.0, -2.5, 1e3}) {
    auto s = dwt_full(Tensor::full({64, 1}, c), bank, 3);
    for (const auto& g : s.details)
      for (double x : g.data()) EXPECT_EQ(x, 0.0);
  }
  // Odd length: only the first (pad-boundary) coefficient may be nonzero.
  auto s = dwt_full(Tensor::full({13, 1}, 2.0), bank, 2);
  for (const auto& g : s.details)
    for (std::size_t n = 1; n < g.rows(); ++n) EXPECT_EQ(g.at(n), 0.0);
}

TEST(Dwt, Causality) {
  // Coefficient n of level m summarises the padded level-(m-1) samples ending at
  // the position aligned with it; inputs after that support end never change it.
  Rng rng(14);
  const auto bank = FilterBank::haar();
  for (std::size_t T : {16u, 21u, 64u}) {
    const std::size_t M = 3;
    Tensor z = rand_tensor(rng, {T, 1}, -1, 1, false);
    auto base = dwt_full(z, bank, M);
    auto lens = level_lengths(T, M);
    for (std::size_t p = 0; p < T; ++p) {
      Tensor zp = z.clone();
      zp.mutable_data()[p] += 1.0;
      auto pert = dwt_full(zp, bank, M);
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t n = lens[m];
        const std::size_t block = std::size_t{1} << (m + 1);
        for (std::size_t j = 0; j < n; ++j) {
          // Coefficient j covers the block of original samples ending at
          // T - 1 - (n - 1 - j) * block.
          const std::size_t end = T - 1 - (n - 1 - j) * block;
          if (p > end) {
            EXPECT_EQ(pert.details[m].at(j), base.details[m].at(j)) << "T=" << T << " m=" << m << " j=" << j;
            if (m + 1 == M) {
              EXPECT_EQ(pert.approximation.at(j), base.approximation.at(j));
            }
          }
        }
      }
    }
  }
}

TEST(Dwt, TrailingCoefficientSeesNewestSample) {
  const auto bank = FilterBank::haar();
  for (std::size_t T : {8u, 9u, 64u}) {
    Tensor z = Tensor::zeros({T, 1});
    z.mutable_data()[T - 1] = 1.0;
    auto s = dwt_full(z, bank, 2);
    EXPECT_NE(s.details[0].at(s.details[0].rows() - 1), 0.0);
    EXPECT_NE(s.approximation.at(s.approximation.rows() - 1), 0.0);
  }
}

TEST(Dwt, ChannelIndependence) {
  Rng rng(15);
  const auto bank = FilterBank::haar();
  Tensor z = rand_tensor(rng, {32, 3}, -1, 1, false);
  auto joint = dwt_full(z, bank, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    auto single = dwt_full(column_tensor(column(z, c)), bank, 3);
    for (std::size_t m = 0; m < 3; ++m)
      for (std::size_t j = 0; j < single.details[m].rows(); ++j)
        EXPECT_EQ(joint.details[m].at(j, c), single.details[m].at(j));
    for (std::size_t j = 0; j < single.approximation.rows(); ++j)
      EXPECT_EQ(joint.approximation.at(j, c), single.approximation.at(j));
  }
}

TEST(Dwt, TrainableFiltersGetGradients) {
  Rng rng(16);
  auto bank = FilterBank::haar(true);
  Tensor z = rand_tensor(rng, {16, 2}, -1, 1, false);
  auto loss_fn = [&](const std::vector<Tensor>& in) {
    FilterBank b{in[0], in[1], true};
    auto s = dwt_full(z, b, 2);
    Tensor l = sum(square(s.approximation));
    for (const auto& g : s.details) l = l + sum(square(g));
    return l;
  };
  EXPECT_LT(wisdom::testing::gradcheck(loss_fn, {bank.y0, bank.y1}), 1e-6);
}

TEST(SelectDetails, IdentityAtOne) {
  Rng rng(17);
  auto s = dwt_full(rand_tensor(rng, {16, 2}, -1, 1, false), FilterBank::haar(), 2);
  auto k = select_details(s, 1.0);
  for (std::size_t m = 0; m < 2; ++m) EXPECT_EQ(max_abs_diff(k.details[m], s.details[m]), 0.0);
  EXPECT_EQ(max_abs_diff(k.approximation, s.approximation), 0.0);
}

TEST(SelectDetails, TrailingHalf) {
  WaveletStack s;
  s.levels = 1;
  s.original_length = 8;
  s.approximation = Tensor({4, 1}, {9, 9, 9, 9});
  s.details = {Tensor({4, 1}, {1, 2, 3, 4})};
  auto k = select_details(s, 0.5);
  EXPECT_EQ(k.details[0].at(0), 0.0);
  EXPECT_EQ(k.details[0].at(1), 0.0);
  EXPECT_EQ(k.details[0].at(2), 3.0);
  EXPECT_EQ(k.details[0].at(3), 4.0);
  EXPECT_EQ(max_abs_diff(k.approximation, s.approximation), 0.0);
  // ceil: 0.3 of 4 keeps 2 rows.
  auto k3 = select_details(s, 0.3);
  EXPECT_EQ(k3.details[0].at(1), 0.0);
  EXPECT_EQ(k3.details[0].at(2), 3.0);
}

TEST(SelectDetails, ShapesStableAndErrors) {
  auto s = dwt_full(Tensor::zeros({32, 2}), FilterBank::haar(), 3);
  for (double rho : {0.01, 0.25, 0.5, 0.77, 1.0}) {
    auto k = select_details(s, rho);
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(k.details[m].shape(), s.details[m].shape());
  }
  EXPECT_THROW(select_details(s, 0.0), ParameterError);
  EXPECT_THROW(select_details(s, -0.5), ParameterError);
  EXPECT_THROW(select_details(s, 1.5), ParameterError);
}

TEST(Signals, ChirpStagesShareMoments) {
  Rng rng(18);
  ChirpSpec spec;
  auto sig = make_chirp(spec, rng);
  ASSERT_EQ(sig.clean.size(), 3 * spec.stage_length);
  for (std::size_t st = 0; st < 3; ++st) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < spec.stage_length; ++i) m += sig.clean[st * spec.stage_length + i];
    m /= static_cast<double>(spec.stage_length);
    for (std::size_t i = 0; i < spec.stage_length; ++i) {
      const double d = sig.clean[st * spec.stage_length + i] - m;
      v += d * d;
    }
    v /= static_cast<double>(spec.stage_length);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, spec.amplitude * spec.amplitude / 2.0, 1e-12);
  }
}

TEST(Signals, ApproximationTracksMovingAverage) {
  // Level-M Haar approximation coefficient j is 2^{M/2} times the mean of the
  // 2^M-sample block ending at its aligned position, so it matches a trailing
  // moving average read at those positions.
  Rng rng(19);
  ChirpSpec spec;
  auto sig = make_chirp(spec, rng);
  for (const auto* x : {&sig.clean, &sig.noisy})
    for (std::size_t M : {1u, 2u, 3u}) {
      auto s = dwt_full(column_tensor(*x), FilterBank::haar(), M);
      const std::size_t block = std::size_t{1} << M;
      auto ma = moving_average(*x, block);
      std::vector<double> at_ends;
      for (std::size_t j = 0; j < s.approximation.rows(); ++j) at_ends.push_back(ma[block * j + block - 1]);
      EXPECT_GT(pearson(column(s.approximation, 0), at_ends), 0.95);
    }
  // The upsampled clean trend also tracks the sliding average everywhere.
  auto s = dwt_full(column_tensor(sig.clean), FilterBank::haar(), 2);
  EXPECT_GT(pearson(upsample_hold(column(s.approximation, 0), 4, sig.clean.size()), moving_average(sig.clean, 4)),
            0.95);
}

TEST(Signals, MotivatingExampleSnrGain) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng = make_rng(seed, "motivating");
    auto r = motivating_example(ChirpSpec{}, rng, 2);
    EXPECT_GT(r.approx_corr, r.raw_corr) << "seed " << seed;
    EXPECT_GT(r.coeff_corr, r.approx_corr) << "seed " << seed;
  }
}

TEST(Signals, DroppingOldDetailsDenoises) {
  Rng rng(20);
  auto sig = make_chirp(ChirpSpec{}, rng);
  const auto bank = FilterBank::haar();
  auto s = dwt_full(column_tensor(sig.noisy), bank, 2);
  const double full = pearson(column(idwt_full(select_details(s, 1.0), bank), 0), sig.clean);
  const double half = pearson(column(idwt_full(select_details(s, 0.5), bank), 0), sig.clean);
  EXPECT_NEAR(full, pearson(sig.noisy, sig.clean), 1e-12);
  EXPECT_GT(half, full);
}

TEST(Signals, PearsonBasics) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(pearson({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_THROW(pearson({1}, {1}), DimensionError);
}
