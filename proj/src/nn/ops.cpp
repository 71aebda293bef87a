#include "lungcadex/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "lungcadex/errors.hpp"
#include "lungcadex/image.hpp"

namespace lungcadex::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMatrix>;
using MapCM = Eigen::Map<const RowMatrix>;

MapCM as_matrix(const Tensor& t, int rows, int cols) { return MapCM(t.data.data(), rows, cols); }
MapM as_matrix(Tensor& t, int rows, int cols) { return MapM(t.data.data(), rows, cols); }

void require_rank(const Var& v, int rank, const char* op) {
  if (v.value().rank() != rank) {
    throw ContractError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

/// Gradient buffer of input i, or nullptr when that input is not differentiable.
Tensor* input_grad(Node& node, std::size_t i) {
  Node& in = *node.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

const Tensor& input_value(Node& node, std::size_t i) { return node.inputs[i]->value; }

template <typename F>
Var unary_elementwise(const Var& a, F forward_and_derivative) {
  Tensor out(a.shape());
  auto derivative = std::make_shared<std::vector<float>>(out.size());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [y, dy] = forward_and_derivative(x[i]);
    out[i] = y;
    (*derivative)[i] = dy;
  }
  return Var::make(std::move(out), {a}, [derivative](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i] * (*derivative)[i];
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  if (b.value().rows() != k) throw ContractError("matmul: inner dimensions differ");
  Tensor out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return Var::make(std::move(out), {a, b}, [m, k, n](Node& node) {
    const auto dc = as_matrix(node.grad, m, n);
    if (Tensor* ga = input_grad(node, 0)) {
      as_matrix(*ga, m, k).noalias() += dc * as_matrix(input_value(node, 1), k, n).transpose();
    }
    if (Tensor* gb = input_grad(node, 1)) {
      as_matrix(*gb, k, n).noalias() += as_matrix(input_value(node, 0), m, k).transpose() * dc;
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int m = a.value().rows(), k = a.value().cols(), n = b.value().rows();
  if (b.value().cols() != k) throw ContractError("matmul_nt: inner dimensions differ");
  Tensor out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), n, k).transpose();
  return Var::make(std::move(out), {a, b}, [m, k, n](Node& node) {
    const auto dc = as_matrix(node.grad, m, n);
    if (Tensor* ga = input_grad(node, 0)) {
      as_matrix(*ga, m, k).noalias() += dc * as_matrix(input_value(node, 1), n, k);
    }
    if (Tensor* gb = input_grad(node, 1)) {
      as_matrix(*gb, n, k).noalias() += dc.transpose() * as_matrix(input_value(node, 0), m, k);
    }
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const int m = a.value().rows(), n = a.value().cols();
  Tensor out({n, m});
  as_matrix(out, n, m) = as_matrix(a.value(), m, n).transpose();
  return Var::make(std::move(out), {a}, [m, n](Node& node) {
    if (Tensor* g = input_grad(node, 0)) as_matrix(*g, m, n) += as_matrix(node.grad, n, m).transpose();
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& node) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = input_grad(node, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
      }
    }
  });
}

Var add_bias(const Var& a, const Var& bias) {
  require_rank(a, 2, "add_bias");
  const int m = a.value().rows(), n = a.value().cols();
  if (static_cast<int>(bias.value().size()) != n) throw ContractError("add_bias: bias length differs from cols");
  Tensor out = a.value();
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < n; ++c) out.at(r, c) += bias.value()[c];
  }
  return Var::make(std::move(out), {a, bias}, [m, n](Node& node) {
    if (Tensor* ga = input_grad(node, 0)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += node.grad[i];
    }
    if (Tensor* gb = input_grad(node, 1)) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) (*gb)[c] += node.grad.at(r, c);
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Var::make(std::move(out), {a, b}, [](Node& node) {
    const Tensor& va = input_value(node, 0);
    const Tensor& vb = input_value(node, 1);
    if (Tensor* ga = input_grad(node, 0)) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += node.grad[i] * vb[i];
    }
    if (Tensor* gb = input_grad(node, 1)) {
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += node.grad[i] * va[i];
    }
  });
}

Var scale(const Var& a, float factor) {
  Tensor out = a.value();
  for (float& v : out.data) v *= factor;
  return Var::make(std::move(out), {a}, [factor](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i] * factor;
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (float v : a.value().data) total += v;
  return Var::make(Tensor({1}, {static_cast<float>(total)}), {a}, [](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (float& v : g->data) v += node.grad[0];
    }
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0f / static_cast<float>(a.value().size())); }

Var relu(const Var& a) {
  return unary_elementwise(a, [](float x) { return std::pair{x > 0 ? x : 0.0f, x > 0 ? 1.0f : 0.0f}; });
}

Var gelu(const Var& a) {
  return unary_elementwise(a, [](float x) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
    const float inner = c * (x + 0.044715f * x * x * x);
    const float t = std::tanh(inner);
    const float y = 0.5f * x * (1.0f + t);
    const float dinner = c * (1.0f + 3.0f * 0.044715f * x * x);
    const float dy = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * dinner;
    return std::pair{y, dy};
  });
}

Var sigmoid(const Var& a) {
  return unary_elementwise(a, [](float x) {
    const float y = x >= 0 ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x));
    return std::pair{y, y * (1.0f - y)};
  });
}

Var softmax_rows(const Var& a) {
  require_rank(a, 2, "softmax_rows");
  const int m = a.value().rows(), n = a.value().cols();
  Tensor out({m, n});
  for (int r = 0; r < m; ++r) {
    float peak = -std::numeric_limits<float>::infinity();
    for (int c = 0; c < n; ++c) peak = std::max(peak, a.value().at(r, c));
    double total = 0.0;
    for (int c = 0; c < n; ++c) {
      out.at(r, c) = std::exp(a.value().at(r, c) - peak);
      total += out.at(r, c);
    }
    for (int c = 0; c < n; ++c) out.at(r, c) = static_cast<float>(out.at(r, c) / total);
  }
  return Var::make(std::move(out), {a}, [m, n](Node& node) {
    Tensor* g = input_grad(node, 0);
    if (!g) return;
    for (int r = 0; r < m; ++r) {
      double dot = 0.0;
      for (int c = 0; c < n; ++c) dot += node.grad.at(r, c) * node.value.at(r, c);
      for (int c = 0; c < n; ++c) {
        g->at(r, c) += node.value.at(r, c) * (node.grad.at(r, c) - static_cast<float>(dot));
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, float eps) {
  require_rank(x, 2, "layer_norm");
  const int m = x.value().rows(), n = x.value().cols();
  if (static_cast<int>(gain.value().size()) != n || static_cast<int>(bias.value().size()) != n) {
    throw ContractError("layer_norm: gain/bias length differs from cols");
  }
  Tensor out({m, n});
  auto normalized = std::make_shared<Tensor>(Shape{m, n});
  auto inv_std = std::make_shared<std::vector<float>>(m);
  for (int r = 0; r < m; ++r) {
    double mu = 0.0;
    for (int c = 0; c < n; ++c) mu += x.value().at(r, c);
    mu /= n;
    double var = 0.0;
    for (int c = 0; c < n; ++c) var += (x.value().at(r, c) - mu) * (x.value().at(r, c) - mu);
    var /= n;
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[r] = is;
    for (int c = 0; c < n; ++c) {
      const float xh = static_cast<float>(x.value().at(r, c) - mu) * is;
      normalized->at(r, c) = xh;
      out.at(r, c) = xh * gain.value()[c] + bias.value()[c];
    }
  }
  return Var::make(std::move(out), {x, gain, bias}, [m, n, normalized, inv_std](Node& node) {
    const Tensor& g = input_value(node, 1);
    if (Tensor* gx = input_grad(node, 0)) {
      std::vector<float> dxh(n);
      for (int r = 0; r < m; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (int c = 0; c < n; ++c) {
          dxh[c] = node.grad.at(r, c) * g[c];
          mean_d += dxh[c];
          mean_dx += dxh[c] * normalized->at(r, c);
        }
        mean_d /= n;
        mean_dx /= n;
        for (int c = 0; c < n; ++c) {
          gx->at(r, c) += (*inv_std)[r] *
                          static_cast<float>(dxh[c] - mean_d - normalized->at(r, c) * mean_dx);
        }
      }
    }
    if (Tensor* gg = input_grad(node, 1)) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) (*gg)[c] += node.grad.at(r, c) * normalized->at(r, c);
      }
    }
    if (Tensor* gb = input_grad(node, 2)) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) (*gb)[c] += node.grad.at(r, c);
      }
    }
  });
}

Var l2_normalize_rows(const Var& a, float eps) {
  require_rank(a, 2, "l2_normalize_rows");
  const int m = a.value().rows(), n = a.value().cols();
  Tensor out({m, n});
  auto norms = std::make_shared<std::vector<float>>(m);
  for (int r = 0; r < m; ++r) {
    double sq = 0.0;
    for (int c = 0; c < n; ++c) sq += double(a.value().at(r, c)) * a.value().at(r, c);
    const double norm = std::max(std::sqrt(sq), double(eps));
    (*norms)[r] = static_cast<float>(norm);
    for (int c = 0; c < n; ++c) out.at(r, c) = static_cast<float>(a.value().at(r, c) / norm);
  }
  return Var::make(std::move(out), {a}, [m, n, norms](Node& node) {
    Tensor* g = input_grad(node, 0);
    if (!g) return;
    for (int r = 0; r < m; ++r) {
      double dot = 0.0;
      for (int c = 0; c < n; ++c) dot += node.grad.at(r, c) * node.value.at(r, c);
      for (int c = 0; c < n; ++c) {
        g->at(r, c) += (node.grad.at(r, c) - node.value.at(r, c) * static_cast<float>(dot)) / (*norms)[r];
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const int n = parts.front().value().cols();
  int m = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.value().cols() != n) throw ContractError("concat_rows: column counts differ");
    m += p.value().rows();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + offset);
    offset += p.value().size();
  }
  return Var::make(std::move(out), parts, [](Node& node) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t len = node.inputs[k]->value.size();
      if (Tensor* g = input_grad(node, k)) {
        for (std::size_t i = 0; i < len; ++i) (*g)[i] += node.grad[off + i];
      }
      off += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const int m = parts.front().value().rows();
  int n = 0;
  for (const Var& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.value().rows() != m) throw ContractError("concat_cols: row counts differ");
    n += p.value().cols();
  }
  Tensor out({m, n});
  int col = 0;
  for (const Var& p : parts) {
    const int w = p.value().cols();
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < w; ++c) out.at(r, col + c) = p.value().at(r, c);
    }
    col += w;
  }
  return Var::make(std::move(out), parts, [m](Node& node) {
    int c0 = 0;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const int w = node.inputs[k]->value.cols();
      if (Tensor* g = input_grad(node, k)) {
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < w; ++c) g->at(r, c) += node.grad.at(r, c0 + c);
        }
      }
      c0 += w;
    }
  });
}

Var slice_rows(const Var& a, int start, int count) {
  require_rank(a, 2, "slice_rows");
  const int n = a.value().cols();
  if (start < 0 || count < 0 || start + count > a.value().rows()) throw ContractError("slice_rows: out of range");
  Tensor out({count, n});
  std::copy_n(a.value().data.begin() + std::size_t(start) * n, std::size_t(count) * n, out.data.begin());
  return Var::make(std::move(out), {a}, [start, n](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) (*g)[std::size_t(start) * n + i] += node.grad[i];
    }
  });
}

Var slice_cols(const Var& a, int start, int count) {
  require_rank(a, 2, "slice_cols");
  const int m = a.value().rows();
  if (start < 0 || count < 0 || start + count > a.value().cols()) throw ContractError("slice_cols: out of range");
  Tensor out({m, count});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < count; ++c) out.at(r, c) = a.value().at(r, start + c);
  }
  return Var::make(std::move(out), {a}, [m, start, count](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < count; ++c) g->at(r, start + c) += node.grad.at(r, c);
      }
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) throw ContractError("reshape: element count differs");
  Tensor out(std::move(shape), a.value().data);
  return Var::make(std::move(out), {a}, [](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += node.grad[i];
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding");
  const int vocab = table.value().rows(), n = table.value().cols();
  const int count = static_cast<int>(ids.size());
  auto rows = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  Tensor out({count, n});
  for (int i = 0; i < count; ++i) {
    if ((*rows)[i] < 0 || (*rows)[i] >= vocab) throw ContractError("embedding: id out of range");
    for (int c = 0; c < n; ++c) out.at(i, c) = table.value().at((*rows)[i], c);
  }
  return Var::make(std::move(out), {table}, [rows, n](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t i = 0; i < rows->size(); ++i) {
        for (int c = 0; c < n; ++c) g->at((*rows)[i], c) += node.grad.at(static_cast<int>(i), c);
      }
    }
  });
}

namespace {

struct ConvGeometry {
  int channels, height, width, kernel, stride, padding, out_height, out_width;
};

void im2col(const float* x, const ConvGeometry& g, float* cols) {
  const int out_area = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        float* row = cols + (std::size_t(c) * g.kernel * g.kernel + ky * g.kernel + kx) * out_area;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            const bool inside = iy >= 0 && iy < g.height && ix >= 0 && ix < g.width;
            row[oy * g.out_width + ox] = inside ? x[(std::size_t(c) * g.height + iy) * g.width + ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeometry& g, float* dx) {
  const int out_area = g.out_height * g.out_width;
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const float* row = cols + (std::size_t(c) * g.kernel * g.kernel + ky * g.kernel + kx) * out_area;
        for (int oy = 0; oy < g.out_height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (int ox = 0; ox < g.out_width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            dx[(std::size_t(c) * g.height + iy) * g.width + ix] += row[oy * g.out_width + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int padding) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 2, "conv2d weight");
  ConvGeometry g{x.value().dim(0), x.value().dim(1), x.value().dim(2), kernel, stride, padding, 0, 0};
  g.out_height = (g.height + 2 * padding - kernel) / stride + 1;
  g.out_width = (g.width + 2 * padding - kernel) / stride + 1;
  const int patch = g.channels * kernel * kernel;
  const int out_channels = weight.value().rows();
  if (weight.value().cols() != patch) throw ContractError("conv2d: weight columns != in_channels * k * k");
  if (static_cast<int>(bias.value().size()) != out_channels) throw ContractError("conv2d: bias length");
  if (g.out_height <= 0 || g.out_width <= 0) throw ContractError("conv2d: input smaller than kernel");
  const int area = g.out_height * g.out_width;

  auto cols = std::make_shared<Tensor>(Shape{patch, area});
  im2col(x.value().data.data(), g, cols->data.data());
  Tensor out({out_channels, g.out_height, g.out_width});
  auto om = as_matrix(out, out_channels, area);
  om.noalias() = as_matrix(weight.value(), out_channels, patch) * as_matrix(*cols, patch, area);
  for (int o = 0; o < out_channels; ++o) om.row(o).array() += bias.value()[o];

  return Var::make(std::move(out), {x, weight, bias}, [g, cols, patch, out_channels, area](Node& node) {
    const auto dout = as_matrix(node.grad, out_channels, area);
    if (Tensor* gw = input_grad(node, 1)) {
      as_matrix(*gw, out_channels, patch).noalias() += dout * as_matrix(*cols, patch, area).transpose();
    }
    if (Tensor* gb = input_grad(node, 2)) {
      for (int o = 0; o < out_channels; ++o) (*gb)[o] += dout.row(o).sum();
    }
    if (Tensor* gx = input_grad(node, 0)) {
      Tensor dcols({patch, area});
      as_matrix(dcols, patch, area).noalias() =
          as_matrix(input_value(node, 1), out_channels, patch).transpose() * dout;
      col2im(dcols.data.data(), g, gx->data.data());
    }
  });
}

Var max_pool2d(const Var& x, int kernel, int stride, int padding) {
  require_rank(x, 3, "max_pool2d");
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  const int oh = (h + 2 * padding - kernel) / stride + 1;
  const int ow = (w + 2 * padding - kernel) / stride + 1;
  Tensor out({c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_index = 0;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const int iy = oy * stride - padding + ky, ix = ox * stride - padding + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            const std::size_t idx = (std::size_t(ch) * h + iy) * w + ix;
            if (x.value()[idx] > best) {
              best = x.value()[idx];
              best_index = idx;
            }
          }
        }
        const std::size_t o = (std::size_t(ch) * oh + oy) * ow + ox;
        out[o] = best;
        (*argmax)[o] = best_index;
      }
    }
  }
  return Var::make(std::move(out), {x}, [argmax](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (std::size_t o = 0; o < argmax->size(); ++o) (*g)[(*argmax)[o]] += node.grad[o];
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 3, "global_avg_pool");
  const int c = x.value().dim(0);
  const int area = x.value().dim(1) * x.value().dim(2);
  Tensor out({1, c});
  for (int ch = 0; ch < c; ++ch) {
    double total = 0.0;
    for (int i = 0; i < area; ++i) total += x.value()[std::size_t(ch) * area + i];
    out[ch] = static_cast<float>(total / area);
  }
  return Var::make(std::move(out), {x}, [c, area](Node& node) {
    if (Tensor* g = input_grad(node, 0)) {
      for (int ch = 0; ch < c; ++ch) {
        const float d = node.grad[ch] / static_cast<float>(area);
        for (int i = 0; i < area; ++i) (*g)[std::size_t(ch) * area + i] += d;
      }
    }
  });
}

Var upsample_bilinear(const Var& x, int out_height, int out_width) {
  require_rank(x, 3, "upsample_bilinear");
  const int c = x.value().dim(0), h = x.value().dim(1), w = x.value().dim(2);
  auto ty = std::make_shared<LinearTaps>(bilinear_taps(h, out_height));
  auto tx = std::make_shared<LinearTaps>(bilinear_taps(w, out_width));
  Tensor out({c, out_height, out_width});
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x.value().data.data() + std::size_t(ch) * h * w;
    float* dst = out.data.data() + std::size_t(ch) * out_height * out_width;
    for (int y = 0; y < out_height; ++y) {
      const float fy = ty->frac[y];
      const float* r0 = src + std::size_t(ty->lo[y]) * w;
      const float* r1 = src + std::size_t(ty->hi[y]) * w;
      for (int xo = 0; xo < out_width; ++xo) {
        const float fx = tx->frac[xo];
        const float top = r0[tx->lo[xo]] * (1 - fx) + r0[tx->hi[xo]] * fx;
        const float bottom = r1[tx->lo[xo]] * (1 - fx) + r1[tx->hi[xo]] * fx;
        dst[std::size_t(y) * out_width + xo] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return Var::make(std::move(out), {x}, [c, h, w, out_height, out_width, ty, tx](Node& node) {
    Tensor* g = input_grad(node, 0);
    if (!g) return;
    for (int ch = 0; ch < c; ++ch) {
      float* dsrc = g->data.data() + std::size_t(ch) * h * w;
      const float* dd = node.grad.data.data() + std::size_t(ch) * out_height * out_width;
      for (int y = 0; y < out_height; ++y) {
        const float fy = ty->frac[y];
        float* r0 = dsrc + std::size_t(ty->lo[y]) * w;
        float* r1 = dsrc + std::size_t(ty->hi[y]) * w;
        for (int xo = 0; xo < out_width; ++xo) {
          const float fx = tx->frac[xo];
          const float d = dd[std::size_t(y) * out_width + xo];
          r0[tx->lo[xo]] += d * (1 - fy) * (1 - fx);
          r0[tx->hi[xo]] += d * (1 - fy) * fx;
          r1[tx->lo[xo]] += d * fy * (1 - fx);
          r1[tx->hi[xo]] += d * fy * fx;
        }
      }
    }
  });
}

}  // namespace lungcadex::nn
