#pragma once

// Wavelet representation network Y_phi and the W network.
//
// Y_phi turns a latent sequence z into the wavelet task representation zhat.
// For every position t it decomposes the window of the last L latents ending
// at t (left zero-padded), keeps the most recent detail coefficients and maps
// the coefficients linearly to zhat_t:
//
//   zhat_t = sum_m <r_m, select(g_m(window_t))> + <r_u, u_M(window_t)>   (per channel)
//
// Because every window ends at t, zhat_t depends on z_{<=t} only. The weights
// r start as the last row of the exact inverse Haar transform, so the
// untrained network reproduces z exactly.
//
// W shares the low-pass filter with Y_phi. It maps the approximation u_M of
// the window ending at t through a small head (mixing channels) to a D-vector,
// trained with the wavelet TD target z_t + gamma * W_target(window_{t+1}).

#include <cmath>
#include <vector>

#include "wisdom/nn.hpp"
#include "wisdom/wavelet.hpp"

namespace wisdom {

/// Gathers windows of length L from a sequence z [T x D]:
///   out[l, k*D + d] = z[ends[k] - L + 1 + l, d]   if that row is >= starts[k],
/// zero otherwise. starts[k] marks the first row of the episode/chunk the
/// window belongs to, so windows never cross into another stream.
inline Tensor sliding_windows(const Tensor& z, const std::vector<std::int64_t>& ends,
                              const std::vector<std::int64_t>& starts, std::size_t L) {
  if (ends.size() != starts.size()) throw DimensionError("sliding_windows: ends/starts size mismatch");
  const std::size_t D = z.cols(), N = ends.size();
  const auto T = static_cast<std::int64_t>(z.rows());
  std::vector<std::int64_t> idx(L * N * D, -1);
  for (std::size_t k = 0; k < N; ++k) {
    if (ends[k] >= T) throw DimensionError("sliding_windows: window end past sequence end");
    for (std::size_t l = 0; l < L; ++l) {
      const std::int64_t row = ends[k] - static_cast<std::int64_t>(L) + 1 + static_cast<std::int64_t>(l);
      if (row < starts[k] || row < 0) continue;
      for (std::size_t d = 0; d < D; ++d)
        idx[(l * N + k) * D + d] = row * static_cast<std::int64_t>(D) + static_cast<std::int64_t>(d);
    }
  }
  return gather(z, {L, N * D}, std::move(idx));
}

/// Rows `rows` of z [T x D] as a [N x D] tensor (negative rows read zero).
inline Tensor gather_rows(const Tensor& z, const std::vector<std::int64_t>& rows) {
  const std::size_t D = z.cols();
  std::vector<std::int64_t> idx(rows.size() * D, -1);
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (rows[k] >= 0)
      for (std::size_t d = 0; d < D; ++d) idx[k * D + d] = rows[k] * static_cast<std::int64_t>(D) + static_cast<std::int64_t>(d);
  return gather(z, {rows.size(), D}, std::move(idx));
}

/// Per-window sum over rows of coeff [n x N*D] weighted by w [n x D]
/// (w tiled across windows). Returns [N x D].
inline Tensor weighted_row_sum(const Tensor& coeff, const Tensor& w, std::size_t N, std::size_t D) {
  const std::size_t n = coeff.rows();
  std::vector<std::int64_t> idx(n * N * D);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < N; ++k)
      for (std::size_t d = 0; d < D; ++d) idx[(j * N + k) * D + d] = static_cast<std::int64_t>(j * D + d);
  Tensor tiled = gather(w, {n, N * D}, std::move(idx));
  Tensor ones = Tensor::full({1, n}, 1.0);
  return reshape(matmul(ones, mul(coeff, tiled)), {N, D});
}

/// Level-M approximation of windows [L x N*D] using the low-pass filter only.
inline Tensor approximation_path(const Tensor& windows, const Tensor& y0, std::size_t levels) {
  Tensor u = windows;
  for (std::size_t m = 0; m < levels; ++m) {
    if (u.rows() < 2) throw DecompositionError("sequence too short: need at least 2 samples per level");
    u = conv1d_depthwise(u, y0, 2, 1, ConvAlign::end);
  }
  return u;
}

/// Reorders u_M [n x N*D] into per-window feature rows [N x n*D].
inline Tensor approximation_features(const Tensor& uM, std::size_t N, std::size_t D) {
  const std::size_t n = uM.rows();
  std::vector<std::int64_t> idx(N * n * D);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t d = 0; d < D; ++d)
        idx[(k * n + j) * D + d] = static_cast<std::int64_t>((j * N + k) * D + d);
  return gather(uM, {N, n * D}, std::move(idx));
}

/// Last row of the inverse Haar DWT: weight of every coefficient slot of a
/// length-L, M-level stack in the reconstruction of the final sample.
struct ReconRow {
  std::vector<Vec> detail;  ///< detail[m][j]
  Vec approx;
};

inline ReconRow haar_last_row(std::size_t L, std::size_t levels) {
  const auto bank = FilterBank::haar();
  const auto lens = level_lengths(L, levels);
  auto unit_stack = [&]() {
    WaveletStack s;
    s.levels = levels;
    s.original_length = L;
    for (std::size_t m = 0; m < levels; ++m) s.details.push_back(Tensor::zeros({lens[m], 1}));
    s.approximation = Tensor::zeros({lens.back(), 1});
    return s;
  };
  ReconRow r;
  for (std::size_t m = 0; m < levels; ++m) {
    Vec row(lens[m]);
    for (std::size_t j = 0; j < lens[m]; ++j) {
      auto s = unit_stack();
      s.details[m].mutable_data()[j] = 1.0;
      row[j] = idwt_full(s, bank).at(L - 1);
    }
    r.detail.push_back(std::move(row));
  }
  r.approx.resize(lens.back());
  for (std::size_t j = 0; j < lens.back(); ++j) {
    auto s = unit_stack();
    s.approximation.mutable_data()[j] = 1.0;
    r.approx[j] = idwt_full(s, bank).at(L - 1);
  }
  return r;
}

struct WaveletReprOptions {
  std::size_t window = 64;       ///< L
  std::size_t levels = 2;        ///< M
  double keep_fraction = 0.5;    ///< rho
  std::size_t filter_length = 2;
  bool trainable_filters = true;
};

struct ZhatResult {
  Tensor zhat;         ///< [N x D]
  WaveletStack stack;  ///< stack of the windows, [n_m x N*D] per level
};

class WaveletReprNet {
 public:
  WaveletReprNet() = default;
  WaveletReprNet(std::size_t latent_dim, WaveletReprOptions opt) : D_(latent_dim), opt_(opt) {
    if (opt_.levels < 1) throw ParameterError("levels must be >= 1");
    if (opt_.levels >= 32 || opt_.window < (std::size_t{1} << opt_.levels))
      throw ParameterError("window length must be >= 2^levels");
    if (!(opt_.keep_fraction > 0.0) || opt_.keep_fraction > 1.0) throw ParameterError("keep_fraction must lie in (0, 1]");
    bank_ = FilterBank::haar(opt_.trainable_filters, opt_.filter_length);
    const auto row = haar_last_row(opt_.window, opt_.levels);
    auto tile = [this](const Vec& v) {
      Vec w(v.size() * D_);
      for (std::size_t j = 0; j < v.size(); ++j)
        for (std::size_t d = 0; d < D_; ++d) w[j * D_ + d] = v[j];
      return Tensor({v.size(), D_}, std::move(w), true);
    };
    for (const auto& r : row.detail) r_detail_.push_back(tile(r));
    r_approx_ = tile(row.approx);
  }

  std::size_t window() const { return opt_.window; }
  std::size_t levels() const { return opt_.levels; }
  std::size_t latent_dim() const { return D_; }
  double keep_fraction() const { return opt_.keep_fraction; }
  const FilterBank& bank() const { return bank_; }
  const WaveletReprOptions& options() const { return opt_; }

  /// zhat for N windows [L x N*D].
  ZhatResult forward_windows(const Tensor& windows, std::size_t N) const {
    if (windows.rows() != opt_.window || windows.cols() != N * D_)
      throw DimensionError("forward_windows: expected [" + std::to_string(opt_.window) + "x" + std::to_string(N * D_) +
                           "], got " + shape_str(windows.shape()));
    ZhatResult out;
    out.stack = dwt_full(windows, bank_, opt_.levels);
    const auto kept = select_details(out.stack, opt_.keep_fraction);
    Tensor z = weighted_row_sum(kept.approximation, r_approx_, N, D_);
    for (std::size_t m = 0; m < opt_.levels; ++m) z = z + weighted_row_sum(kept.details[m], r_detail_[m], N, D_);
    out.zhat = z;
    return out;
  }

  /// zhat for every row of a sequence z [T x D] (windows ending at each row).
  Tensor forward_sequence(const Tensor& z) const {
    const std::size_t T = z.rows();
    std::vector<std::int64_t> ends(T), starts(T, 0);
    for (std::size_t t = 0; t < T; ++t) ends[t] = static_cast<std::int64_t>(t);
    return forward_windows(sliding_windows(z, ends, starts, opt_.window), T).zhat;
  }

  /// Spec-level forward: zhat [L x D] for a window z [L x D] plus the
  /// decomposition of z itself.
  ZhatResult forward_zhat(const Tensor& z) const {
    if (z.cols() != D_) throw DimensionError("forward_zhat: latent dim mismatch");
    if (z.rows() < (std::size_t{1} << opt_.levels))
      throw DecompositionError("sequence too short: length " + std::to_string(z.rows()) + " < 2^" +
                               std::to_string(opt_.levels));
    return {forward_sequence(z), dwt_full(z, bank_, opt_.levels)};
  }

  ParamList params() const {
    ParamList p;
    if (bank_.trainable) {
      p.emplace_back("y0", bank_.y0);
      p.emplace_back("y1", bank_.y1);
    }
    for (std::size_t m = 0; m < r_detail_.size(); ++m) p.emplace_back("recon.g" + std::to_string(m + 1), r_detail_[m]);
    p.emplace_back("recon.u", r_approx_);
    return p;
  }

  /// Every tensor, trainable or not (for checkpoints).
  ParamList state() const {
    ParamList p = params();
    if (!bank_.trainable) {
      p.emplace_back("y0", bank_.y0);
      p.emplace_back("y1", bank_.y1);
    }
    return p;
  }

 private:
  std::size_t D_ = 0;
  WaveletReprOptions opt_;
  FilterBank bank_;
  std::vector<Tensor> r_detail_;
  Tensor r_approx_;
};

/// W network: low-pass path (level-M approximation of the window) plus a head
/// that mixes channels. The online copy shares y0 with Y_phi.
class WNetwork {
 public:
  WNetwork() = default;
  WNetwork(Tensor y0, std::size_t window, std::size_t levels, std::size_t latent_dim,
           const std::vector<std::size_t>& hidden, Rng& rng)
      : y0_(std::move(y0)), hidden_(hidden), L_(window), M_(levels), D_(latent_dim) {
    n_ = level_lengths(L_, M_).back();
    head_ = Mlp(n_ * D_, hidden, D_, rng);
  }

  /// Structurally identical copy with its own (non-trainable) storage.
  WNetwork make_target() const {
    WNetwork t = *this;
    t.y0_ = y0_.clone(false);
    Rng dummy(0);
    t.head_ = Mlp(n_ * D_, hidden_, D_, dummy);
    ParamList src = head_.params(), dst = t.head_.params();
    copy_params(src, dst);
    for (auto& [_, p] : dst) p.set_requires_grad(false);
    return t;
  }

  /// Head applied to a precomputed approximation u_M [n x N*D].
  Tensor forward_approx(const Tensor& uM, std::size_t N) const {
    return head_.forward(approximation_features(uM, N, D_));
  }

  /// W(window) for N windows [L x N*D] -> [N x D].
  Tensor forward_windows(const Tensor& windows, std::size_t N) const {
    if (windows.rows() != L_ || windows.cols() != N * D_) throw DimensionError("W: window shape " + shape_str(windows.shape()));
    return forward_approx(approximation_path(windows, y0_, M_), N);
  }

  /// Head parameters only (y0 belongs to Y_phi's parameter list).
  ParamList head_params() const { return head_.params(); }
  /// Everything that defines the function (for soft updates and checkpoints).
  ParamList params_with_filter() const {
    ParamList p{{"y0", y0_}};
    append_params(p, "head.", head_.params());
    return p;
  }

  std::size_t window() const { return L_; }
  std::size_t levels() const { return M_; }
  std::size_t latent_dim() const { return D_; }

 private:
  Tensor y0_;
  std::vector<std::size_t> hidden_;
  Mlp head_;
  std::size_t L_ = 0, M_ = 0, D_ = 0, n_ = 0;
};

inline double weight_total(const Tensor& w) {
  double s = 0;
  for (double x : w.data()) s += x;
  return s;
}

/// 1/2 * weighted mean over rows of ||a - b||^2 (b is used as given).
inline Tensor half_mse_rows(const Tensor& a, const Tensor& b, const Tensor& row_weights = Tensor()) {
  Tensor err = row_sum(square(a - b));
  if (!row_weights.defined()) return scale(mean(err), 0.5);
  const double w = weight_total(row_weights);
  if (w <= 0.0) return Tensor::scalar(0.0);
  return scale(sum(mul(err, row_weights)), 0.5 / w);
}

/// Wavelet TD loss from precomputed pieces:
///   1/2 mean || W(window_t) - (z_t + gamma * W_target(window_{t+1})) ||^2
/// with z_t and the target branch detached.
inline Tensor wavelet_td_loss(const Tensor& w_t, const Tensor& z_t, const Tensor& w_target_t1, double gamma,
                              const Tensor& row_weights = Tensor()) {
  if (!(gamma >= 0.0) || gamma >= 1.0) throw ParameterError("gamma must lie in [0, 1)");
  if (w_t.shape() != z_t.shape() || w_t.shape() != w_target_t1.shape())
    throw DimensionError("wavelet_td_loss: shape mismatch");
  Tensor target = detach(z_t) + scale(detach(w_target_t1), gamma);
  return half_mse_rows(w_t, target, row_weights);
}

/// Spec-level TD loss over window batches: z_t is the last row of each
/// window in `win_t`, and `win_t1` holds the windows one step later.
inline Tensor wavelet_td_loss(const WNetwork& W, const WNetwork& W_target, const Tensor& win_t, const Tensor& win_t1,
                              std::size_t N, double gamma) {
  if (!(gamma >= 0.0) || gamma >= 1.0) throw ParameterError("gamma must lie in [0, 1)");
  Tensor target_next;
  {
    NoGradGuard ng;
    target_next = W_target.forward_windows(win_t1, N);
  }
  Tensor z_last = reshape(slice_rows(win_t, win_t.rows() - 1, win_t.rows()), {N, W.latent_dim()});
  return wavelet_td_loss(W.forward_windows(win_t, N), z_last, target_next, gamma);
}

/// AR loss: zhat_prev[k] was computed from inputs before the target step;
/// 1/2 weighted mean of ||zhat_prev - target||^2 with the target detached.
inline Tensor ar_loss(const Tensor& zhat_prev, const Tensor& target_z, const Tensor& row_weights = Tensor()) {
  if (zhat_prev.shape() != target_z.shape()) throw DimensionError("ar_loss: shape mismatch");
  return half_mse_rows(zhat_prev, detach(target_z), row_weights);
}

/// AR loss over one sequence: zhat_{t-1} (from z_{<=t-1}) predicts z_t, t = 1..L-1.
inline Tensor ar_loss_sequence(const WaveletReprNet& net, const Tensor& z) {
  const std::size_t L = z.rows();
  if (L < 2) throw DimensionError("ar_loss_sequence: need at least 2 steps");
  Tensor zhat = net.forward_sequence(z);
  return ar_loss(slice_rows(zhat, 0, L - 1), slice_rows(z, 1, L));
}

inline Tensor joint_loss(const Tensor& td, const Tensor& ar, double alpha_y) {
  if (alpha_y < 0.0) throw ParameterError("alpha_Y must be >= 0");
  return scale(td, alpha_y) + ar;
}

struct ContractionResult {
  double ratio = 0.0;
  bool pass = true;
  double numerator = 0.0, denominator = 0.0;
};

/// Theorem 1 harness: sup over the dataset of ||F W1 - F W2|| against
/// sup over the dataset of ||W1 - W2|| (sup norm over channels), where
/// F W(z_t) = z_t + gamma * W(z_{t+1}). `windows_t`/`windows_t1` hold N pairs.
inline ContractionResult contraction_check(const WNetwork& W1, const WNetwork& W2, const Tensor& windows_t,
                                           const Tensor& windows_t1, std::size_t N, double gamma) {
  if (!(gamma >= 0.0) || gamma >= 1.0) throw ParameterError("gamma must lie in [0, 1)");
  NoGradGuard ng;
  const std::size_t D = W1.latent_dim();
  Tensor z_last = reshape(slice_rows(windows_t, windows_t.rows() - 1, windows_t.rows()), {N, D});
  Tensor f1 = z_last + scale(W1.forward_windows(windows_t1, N), gamma);
  Tensor f2 = z_last + scale(W2.forward_windows(windows_t1, N), gamma);
  ContractionResult r;
  for (std::size_t i = 0; i < f1.numel(); ++i) r.numerator = std::max(r.numerator, std::abs(f1.at(i) - f2.at(i)));
  // W1 - W2 over every point of the dataset (both members of each pair).
  for (const Tensor* w : {&windows_t, &windows_t1}) {
    Tensor a = W1.forward_windows(*w, N), b = W2.forward_windows(*w, N);
    for (std::size_t i = 0; i < a.numel(); ++i) r.denominator = std::max(r.denominator, std::abs(a.at(i) - b.at(i)));
  }
  r.ratio = r.denominator == 0.0 ? 0.0 : r.numerator / r.denominator;
  r.pass = r.ratio <= gamma + 1e-9;
  return r;
}

}  // namespace wisdom
