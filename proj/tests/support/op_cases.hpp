#pragma once

// Random small instances of every differentiable op, shared by the unit and
// acceptance gradient suites. Each case draws fresh inputs and returns a
// scalar-valued function; non-scalar op outputs are contracted with a fixed
// random weighting so every output element contributes.

#include <functional>
#include <string>
#include <vector>

#include "wisdom/rng.hpp"
#include "wisdom/tensor.hpp"

namespace wisdom::testing {

struct OpInstance {
  std::vector<Tensor> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
};

struct OpCase {
  std::string name;
  std::function<OpInstance(Rng&)> make;
};

inline Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool rg = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(v), rg);
}

inline std::size_t rand_dim(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// sum(out * w) with a fixed random w matching out's shape.
inline std::function<Tensor(const std::vector<Tensor>&)> contract(
    Rng& rng, std::function<Tensor(const std::vector<Tensor>&)> op) {
  auto seed = rng();
  return [op, seed](const std::vector<Tensor>& in) {
    Tensor out = op(in);
    Rng wr(seed);
    Tensor w = rand_tensor(wr, out.shape(), -1.0, 1.0, false);
    return sum(mul(out, w));
  };
}

/// Values in [-1, 1] kept at least `gap` away from the listed kinks.
inline Tensor rand_away_from(Rng& rng, Shape shape, std::vector<double> kinks, double gap) {
  Tensor t = rand_tensor(rng, std::move(shape));
  for (auto& x : t.mutable_data())
    for (double k : kinks)
      if (std::abs(x - k) < gap) x = k + (x < k ? -gap : gap);
  return t;
}

inline std::vector<OpCase> op_cases() {
  using V = std::vector<Tensor>;
  std::vector<OpCase> c;
  auto unary_case = [&c](std::string name, std::function<Tensor(const Tensor&)> op, double lo, double hi) {
    c.push_back({name, [op, lo, hi](Rng& r) {
                   auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                   return OpInstance{{rand_tensor(r, {m, n}, lo, hi)},
                                     contract(r, [op](const V& in) { return op(in[0]); })};
                 }});
  };
  c.push_back({"matmul", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), k = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                 return OpInstance{{rand_tensor(r, {m, k}), rand_tensor(r, {k, n})},
                                   contract(r, [](const V& in) { return matmul(in[0], in[1]); })};
               }});
  auto binary_case = [&c](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
    c.push_back({name, [op](Rng& r) {
                   auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                   return OpInstance{{rand_tensor(r, {m, n}), rand_tensor(r, {m, n})},
                                     contract(r, [op](const V& in) { return op(in[0], in[1]); })};
                 }});
    c.push_back({name + "-scalar", [op](Rng& r) {
                   auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                   return OpInstance{{rand_tensor(r, {m, n}), rand_tensor(r, {1})},
                                     contract(r, [op](const V& in) { return op(in[0], in[1]); })};
                 }});
  };
  binary_case("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
  binary_case("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  binary_case("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  unary_case("tanh", [](const Tensor& x) { return tanh(x); }, -2.0, 2.0);
  c.push_back({"relu", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                 return OpInstance{{rand_away_from(r, {m, n}, {0.0}, 1e-3)},
                                   contract(r, [](const V& in) { return relu(in[0]); })};
               }});
  unary_case("softplus", [](const Tensor& x) { return softplus(x); }, -3.0, 3.0);
  unary_case("exp", [](const Tensor& x) { return exp(x); }, -2.0, 2.0);
  unary_case("log", [](const Tensor& x) { return log(x); }, 0.2, 3.0);
  unary_case("square", [](const Tensor& x) { return square(x); }, -2.0, 2.0);
  unary_case("scale", [](const Tensor& x) { return scale(x, -1.7); }, -2.0, 2.0);
  c.push_back({"clamp", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                 return OpInstance{{rand_away_from(r, {m, n}, {-0.5, 0.5}, 1e-3)},
                                   contract(r, [](const V& in) { return clamp(in[0], -0.5, 0.5); })};
               }});
  c.push_back({"minimum", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                 Tensor a = rand_tensor(r, {m, n});
                 Tensor b = rand_tensor(r, {m, n});
                 for (std::size_t i = 0; i < a.numel(); ++i)
                   if (std::abs(a.at(i) - b.at(i)) < 1e-3) b.mutable_data()[i] += 0.01;
                 return OpInstance{{a, b}, contract(r, [](const V& in) { return minimum(in[0], in[1]); })};
               }});
  unary_case("sum", [](const Tensor& x) { return sum(x); }, -1.0, 1.0);
  unary_case("mean", [](const Tensor& x) { return mean(x); }, -1.0, 1.0);
  unary_case("row_sum", [](const Tensor& x) { return row_sum(x); }, -1.0, 1.0);
  unary_case("transpose", [](const Tensor& x) { return transpose(x); }, -1.0, 1.0);
  c.push_back({"add_bias", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 4);
                 return OpInstance{{rand_tensor(r, {m, n}), rand_tensor(r, {n})},
                                   contract(r, [](const V& in) { return add_bias(in[0], in[1]); })};
               }});
  c.push_back({"gather", [](Rng& r) {
                 auto n = rand_dim(r, 2, 6);
                 std::vector<std::int64_t> idx(n + 2);
                 for (auto& i : idx) i = static_cast<std::int64_t>(rand_dim(r, 0, n)) - 1;  // -1 reads zero
                 return OpInstance{{rand_tensor(r, {n})}, contract(r, [idx](const V& in) {
                                     return gather(in[0], {idx.size()}, idx);
                                   })};
               }});
  c.push_back({"slice-concat", [](Rng& r) {
                 auto m = rand_dim(r, 1, 3), n = rand_dim(r, 2, 4);
                 return OpInstance{{rand_tensor(r, {m, n}), rand_tensor(r, {m, 2})},
                                   contract(r, [n](const V& in) {
                                     return concat_cols({slice_cols(in[0], 1, n), in[1], slice_cols(in[0], 0, 1)});
                                   })};
               }});
  c.push_back({"slice_rows-reshape", [](Rng& r) {
                 auto m = rand_dim(r, 2, 4), n = rand_dim(r, 1, 3);
                 return OpInstance{{rand_tensor(r, {m, n})}, contract(r, [m, n](const V& in) {
                                     return reshape(slice_rows(in[0], 1, m), {(m - 1) * n});
                                   })};
               }});
  c.push_back({"conv1d_causal", [](Rng& r) {
                 auto T = rand_dim(r, 1, 7), C = rand_dim(r, 1, 3), O = rand_dim(r, 1, 3), K = rand_dim(r, 1, 3);
                 auto stride = rand_dim(r, 1, 3), dil = rand_dim(r, 1, 2);
                 auto align = rand_dim(r, 0, 1) ? ConvAlign::end : ConvAlign::start;
                 return OpInstance{{rand_tensor(r, {T, C}), rand_tensor(r, {K, C, O})},
                                   contract(r, [stride, dil, align](const V& in) {
                                     return conv1d_causal(in[0], in[1], stride, dil, align);
                                   })};
               }});
  c.push_back({"conv1d_depthwise", [](Rng& r) {
                 auto T = rand_dim(r, 2, 8), C = rand_dim(r, 1, 3), K = rand_dim(r, 1, 4);
                 auto align = rand_dim(r, 0, 1) ? ConvAlign::end : ConvAlign::start;
                 return OpInstance{{rand_tensor(r, {T, C}), rand_tensor(r, {K})},
                                   contract(r, [align](const V& in) {
                                     return conv1d_depthwise(in[0], in[1], 2, 1, align);
                                   })};
               }});
  c.push_back({"gaussian_rsample", [](Rng& r) {
                 auto m = rand_dim(r, 1, 4), n = rand_dim(r, 1, 3);
                 Tensor noise = rand_tensor(r, {m, n}, -2.0, 2.0, false);
                 return OpInstance{{rand_tensor(r, {m, n}), rand_tensor(r, {m, n})},
                                   contract(r, [noise](const V& in) { return gaussian_rsample(in[0], in[1], noise); })};
               }});
  return c;
}

}  // namespace wisdom::testing
