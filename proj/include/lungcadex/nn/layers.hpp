#pragma once

#include <string>

#include "lungcadex/nn/ops.hpp"
#include "lungcadex/nn/parameters.hpp"

namespace lungcadex::nn {

struct Linear {
  int weight = -1;  // {in, out}
  int bias = -1;    // {out}

  static Linear create(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
                       float gain = 1.0f);
  Var operator()(const ParameterStore& store, const Var& x) const;
};

struct LayerNorm {
  int gain = -1;
  int bias = -1;

  static LayerNorm create(ParameterStore& store, const std::string& name, int dim);
  Var operator()(const ParameterStore& store, const Var& x) const;
};

/// Multi-head scaled dot-product attention with separate query and key/value inputs.
struct Attention {
  Linear q, k, v, out;
  int heads = 1;

  static Attention create(ParameterStore& store, const std::string& name, int dim, int heads, Rng& rng);
  Var operator()(const ParameterStore& store, const Var& query, const Var& key, const Var& value) const;
};

struct Mlp {
  Linear fc1, fc2;

  static Mlp create(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
  Var operator()(const ParameterStore& store, const Var& x) const;
};

/// Pre-norm self-attention block.
struct TransformerBlock {
  LayerNorm norm1, norm2;
  Attention attention;
  Mlp mlp;

  static TransformerBlock create(ParameterStore& store, const std::string& name, int dim, int heads,
                                 int mlp_dim, Rng& rng);
  Var operator()(const ParameterStore& store, const Var& x) const;
};

struct Conv2d {
  int weight = -1;  // {out, in * k * k}
  int bias = -1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  static Conv2d create(ParameterStore& store, const std::string& name, int in, int out, int kernel,
                       int stride, int padding, Rng& rng, float gain = 1.4142135f);
  Var operator()(const ParameterStore& store, const Var& x) const;
};

/// Fixed sinusoidal position table {length, dim}.
Tensor sinusoidal_positions(int length, int dim);

}  // namespace lungcadex::nn
