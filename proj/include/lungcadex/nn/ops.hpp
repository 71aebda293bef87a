#pragma once

#include <span>
#include <vector>

#include "lungcadex/nn/autograd.hpp"

namespace lungcadex::nn {

// Matrix ops work on rank-2 {rows, cols} tensors.
Var matmul(const Var& a, const Var& b);     ///< a @ b
Var matmul_nt(const Var& a, const Var& b);  ///< a @ b^T
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var add_bias(const Var& a, const Var& bias);  ///< bias of size cols, broadcast over rows
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
Var sum(const Var& a);
Var mean(const Var& a);

Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps = 1e-5f);
Var l2_normalize_rows(const Var& a, float eps = 1e-12f);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int start, int count);
Var slice_cols(const Var& a, int start, int count);
Var reshape(const Var& a, Shape shape);

/// Gathers rows of an embedding table.
Var embedding(const Var& table, std::span<const int> ids);

// Feature-map ops work on rank-3 {C, H, W} tensors.
/// weight is {out_channels, in_channels * k * k}, bias is {out_channels}.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding);
Var max_pool2d(const Var& x, int kernel, int stride, int padding);
/// {C, H, W} -> {1, C}
Var global_avg_pool(const Var& x);
/// Corner-aligned bilinear resampling of every channel.
Var upsample_bilinear(const Var& x, int out_height, int out_width);

}  // namespace lungcadex::nn
