#include "lungcadex/nn/layers.hpp"

#include <cmath>

#include "lungcadex/errors.hpp"

namespace lungcadex::nn {

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, float gain) {
  Linear l;
  l.weight = store.create_normal(name + ".weight", {in, out}, in, rng, gain);
  l.bias = store.create_filled(name + ".bias", {out}, 0.0f);
  return l;
}

Var Linear::operator()(const ParameterStore& store, const Var& x) const {
  return add_bias(matmul(x, store.at(weight)), store.at(bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, int dim) {
  return LayerNorm{store.create_filled(name + ".gain", {dim}, 1.0f), store.create_filled(name + ".bias", {dim}, 0.0f)};
}

Var LayerNorm::operator()(const ParameterStore& store, const Var& x) const {
  return layer_norm(x, store.at(gain), store.at(bias));
}

Attention Attention::create(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) throw ConfigError("attention width must be divisible by head count");
  Attention a;
  a.q = Linear::create(store, name + ".q", dim, dim, rng);
  a.k = Linear::create(store, name + ".k", dim, dim, rng);
  a.v = Linear::create(store, name + ".v", dim, dim, rng);
  a.out = Linear::create(store, name + ".out", dim, dim, rng);
  a.heads = heads;
  return a;
}

Var Attention::operator()(const ParameterStore& store, const Var& query, const Var& key, const Var& value) const {
  const Var qp = q(store, query);
  const Var kp = k(store, key);
  const Var vp = v(store, value);
  const int dim = qp.value().cols();
  const int head_dim = dim / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));
  if (heads == 1) {
    return out(store, matmul(softmax_rows(scale(matmul_nt(qp, kp), inv_sqrt)), vp));
  }
  std::vector<Var> per_head;
  per_head.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(qp, h * head_dim, head_dim);
    const Var kh = slice_cols(kp, h * head_dim, head_dim);
    const Var vh = slice_cols(vp, h * head_dim, head_dim);
    per_head.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt)), vh));
  }
  return out(store, concat_cols(per_head));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng) {
  return Mlp{Linear::create(store, name + ".fc1", in, hidden, rng), Linear::create(store, name + ".fc2", hidden, out, rng)};
}

Var Mlp::operator()(const ParameterStore& store, const Var& x) const { return fc2(store, gelu(fc1(store, x))); }

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name, int dim, int heads,
                                          int mlp_dim, Rng& rng) {
  TransformerBlock b;
  b.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  b.attention = Attention::create(store, name + ".attn", dim, heads, rng);
  b.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  b.mlp = Mlp::create(store, name + ".mlp", dim, mlp_dim, dim, rng);
  return b;
}

Var TransformerBlock::operator()(const ParameterStore& store, const Var& x) const {
  const Var h = norm1(store, x);
  const Var y = add(x, attention(store, h, h, h));
  return add(y, mlp(store, norm2(store, y)));
}

Conv2d Conv2d::create(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
                      int padding, Rng& rng, float gain) {
  Conv2d c;
  const int fan_in = in * kernel * kernel;
  c.weight = store.create_normal(name + ".weight", {out, fan_in}, fan_in, rng, gain);
  c.bias = store.create_filled(name + ".bias", {out}, 0.0f);
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  return c;
}

Var Conv2d::operator()(const ParameterStore& store, const Var& x) const {
  return conv2d(x, store.at(weight), store.at(bias), kernel, stride, padding);
}

Tensor sinusoidal_positions(int length, int dim) {
  Tensor t({length, dim});
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -2.0 * (i / 2) / static_cast<double>(dim));
      t.at(p, i) = static_cast<float>(i % 2 == 0 ? std::sin(p * rate) : std::cos(p * rate));
    }
  }
  return t;
}

}  // namespace lungcadex::nn
