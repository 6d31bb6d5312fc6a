#include "amdm/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace amdm::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

[[noreturn]] void shape_error(std::string_view prim, const std::string& detail) {
  throw std::invalid_argument(std::string(prim) + ": " + detail);
}

void require_rank(std::string_view prim, const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    shape_error(prim, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                          to_string(t.shape()));
}

Tensor& ensure(Tensor* grad) { return *grad; }

// im2col for a 3x3 stencil with zero padding: col is [C*9, H*W].
void im2col3x3(const double* x, std::size_t C, std::size_t H, std::size_t W, double* col) {
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    const double* xc = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < H; ++y) {
          double* dst = row + y * W;
          const long yy = static_cast<long>(y) + dy;
          if (yy < 0 || yy >= static_cast<long>(H)) {
            std::fill(dst, dst + W, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(yy) * W;
          if (dx == 0) {
            std::memcpy(dst, src, W * sizeof(double));
          } else if (dx < 0) {
            dst[0] = 0.0;
            if (W > 1) std::memcpy(dst + 1, src, (W - 1) * sizeof(double));
          } else {
            if (W > 1) std::memcpy(dst, src + 1, (W - 1) * sizeof(double));
            dst[W - 1] = 0.0;
          }
        }
      }
    }
  }
}

void col2im3x3(const double* col, std::size_t C, std::size_t H, std::size_t W, double* x) {
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    double* xc = x + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < H; ++y) {
          const long yy = static_cast<long>(y) + dy;
          if (yy < 0 || yy >= static_cast<long>(H)) continue;
          const double* src = row + y * W;
          double* dst = xc + static_cast<std::size_t>(yy) * W;
          if (dx == 0) {
            for (std::size_t i = 0; i < W; ++i) dst[i] += src[i];
          } else if (dx < 0) {
            for (std::size_t i = 1; i < W; ++i) dst[i - 1] += src[i];
          } else {
            for (std::size_t i = 0; i + 1 < W; ++i) dst[i + 1] += src[i];
          }
        }
      }
    }
  }
}

// Broadcasting between equal-rank tensors. Strides are zero on broadcast axes.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;

  Broadcast(std::string_view prim, const Shape& a, const Shape& b) {
    if (a.size() != b.size())
      shape_error(prim, "rank mismatch " + to_string(a) + " vs " + to_string(b));
    const std::size_t r = a.size();
    out.resize(r);
    stride_a.assign(r, 0);
    stride_b.assign(r, 0);
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = r; i-- > 0;) {
      if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
        shape_error(prim, "cannot broadcast " + to_string(a) + " with " + to_string(b) +
                              " at axis " + std::to_string(i));
      out[i] = std::max(a[i], b[i]);
      stride_a[i] = a[i] == 1 ? 0 : sa;
      stride_b[i] = b[i] == 1 ? 0 : sb;
      sa *= a[i];
      sb *= b[i];
    }
  }

  // fn(out_offset, a_offset, b_offset, n, inc_a, inc_b) per innermost row.
  template <typename Fn>
  void rows(Fn&& fn) const {
    const std::size_t r = out.size();
    const std::size_t inner = out[r - 1];
    const std::size_t outer = numel(out) / inner;
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t ia = 0, ib = 0;
      for (std::size_t k = 0; k + 1 < r; ++k) {
        ia += idx[k] * stride_a[k];
        ib += idx[k] * stride_b[k];
      }
      fn(o * inner, ia, ib, inner, stride_a[r - 1], stride_b[r - 1]);
      for (std::size_t k = r - 1; k-- > 0;) {
        if (++idx[k] < out[k]) break;
        idx[k] = 0;
      }
    }
  }
};

}  // namespace

std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kInput: return "input";
    case Primitive::kParam: return "param";
    case Primitive::kConv1x1: return "conv2d_1x1";
    case Primitive::kConv3x3: return "conv2d_3x3";
    case Primitive::kAvgPoolAxis: return "avg_pool_axis";
    case Primitive::kRelu: return "relu";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kMul: return "elementwise_mul";
    case Primitive::kAdd: return "elementwise_add";
    case Primitive::kScale: return "scale";
    case Primitive::kConcat: return "concat_channels";
    case Primitive::kGroupNorm: return "group_norm";
    case Primitive::kLinear: return "linear";
    case Primitive::kDownsample: return "downsample2";
    case Primitive::kUpsample: return "upsample2";
    case Primitive::kSlice: return "slice_channels";
    case Primitive::kReshape: return "reshape";
    case Primitive::kCrop: return "crop";
  }
  return "unknown";
}

// --- Gradients ---------------------------------------------------------------

const Tensor& Gradients::operator[](std::string_view param) const {
  const Tensor* t = find(param);
  if (!t) throw std::out_of_range("gradients: no parameter named '" + std::string(param) + "'");
  return *t;
}

const Tensor* Gradients::find(std::string_view param) const {
  auto it = params_.find(param);
  return it == params_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::wrt(Var leaf) const {
  auto it = leaves_.find(leaf.id);
  if (it == leaves_.end()) throw std::out_of_range("gradients: leaf has no gradient");
  return it->second;
}

// --- Graph -------------------------------------------------------------------

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("graph: unknown variable");
  return nodes_[v.id];
}

Var Graph::input(Tensor value, bool requires_grad) {
  Node n{Primitive::kInput, {}, std::move(value), nullptr, requires_grad, {}};
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::param(std::string name, Tensor value) {
  if (param_index_.contains(name))
    throw std::invalid_argument("graph: parameter '" + name + "' registered twice");
  Node n{Primitive::kParam, {}, std::move(value), nullptr, true, name};
  nodes_.push_back(std::move(n));
  param_index_.emplace(std::move(name), nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
Primitive Graph::primitive(Var v) const { return node(v).kind; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Var Graph::record(Primitive kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  if (consumed_) throw std::logic_error("graph: cannot record after backward()");
  Node n{kind, {}, std::move(value), std::move(backward), false, {}};
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  if (!n.requires_grad) n.backward = nullptr;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Gradients Graph::backward(Var output, const Tensor& seed) {
  if (consumed_) throw std::logic_error("graph: backward() called twice on the same graph");
  const Node& out = node(output);
  if (seed.shape() != out.value.shape())
    throw std::invalid_argument("backward: seed shape " + to_string(seed.shape()) +
                                " != output shape " + to_string(out.value.shape()));
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[output.id] = seed;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (grads[i].empty() || !n.backward) continue;
    std::vector<const Tensor*> in(n.inputs.size());
    std::vector<Tensor*> gin(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t j = n.inputs[k];
      in[k] = &nodes_[j].value;
      if (!nodes_[j].requires_grad) continue;
      if (grads[j].empty()) grads[j] = Tensor(nodes_[j].value.shape(), 0.0);
      gin[k] = &grads[j];
    }
    n.backward(BackwardArgs{grads[i], n.value, in, gin});
    if (n.kind != Primitive::kInput && n.kind != Primitive::kParam) grads[i] = Tensor();
  }

  Gradients result;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind == Primitive::kParam) {
      Tensor g = grads[i].empty() ? Tensor(n.value.shape(), 0.0) : std::move(grads[i]);
      result.params_.emplace(n.param_name, std::move(g));
    } else if (n.kind == Primitive::kInput && n.requires_grad) {
      Tensor g = grads[i].empty() ? Tensor(n.value.shape(), 0.0) : std::move(grads[i]);
      result.leaves_.emplace(i, std::move(g));
    }
  }
  for (const auto& [name, idx] : param_index_) result.leaves_.emplace(idx, result.params_[name]);
  return result;
}

// --- primitives -----------------------------------------------------------------

Var conv2d_1x1(Graph& g, Var xv, Var wv, Var bv) {
  constexpr std::string_view kName = "conv2d_1x1";
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  require_rank(kName, x, 3, "input");
  require_rank(kName, w, 2, "weight");
  require_rank(kName, b, 1, "bias");
  const std::size_t ci = x.dim(0), co = w.dim(0), hw = x.dim(1) * x.dim(2);
  if (w.dim(1) != ci || b.dim(0) != co)
    shape_error(kName, "input " + to_string(x.shape()) + ", weight " + to_string(w.shape()) +
                           ", bias " + to_string(b.shape()));
  Tensor y({co, x.dim(1), x.dim(2)});
  MapMat Y(y.data(), co, hw);
  Y.noalias() = ConstMapMat(w.data(), co, ci) * ConstMapMat(x.data(), ci, hw);
  for (std::size_t o = 0; o < co; ++o) Y.row(o).array() += b[o];

  return g.record(Primitive::kConv1x1, {xv, wv, bv}, std::move(y),
                  [ci, co, hw](const Graph::BackwardArgs& a) {
                    ConstMapMat G(a.grad_out.data(), co, hw);
                    if (a.grad_in[0])
                      MapMat(ensure(a.grad_in[0]).data(), ci, hw).noalias() +=
                          ConstMapMat(a.in[1]->data(), co, ci).transpose() * G;
                    if (a.grad_in[1])
                      MapMat(ensure(a.grad_in[1]).data(), co, ci).noalias() +=
                          G * ConstMapMat(a.in[0]->data(), ci, hw).transpose();
                    if (a.grad_in[2])
                      MapVec(ensure(a.grad_in[2]).data(), co) += G.rowwise().sum();
                  });
}

Var conv2d_3x3(Graph& g, Var xv, Var wv, Var bv) {
  constexpr std::string_view kName = "conv2d_3x3";
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  require_rank(kName, x, 3, "input");
  require_rank(kName, w, 4, "weight");
  require_rank(kName, b, 1, "bias");
  const std::size_t ci = x.dim(0), co = w.dim(0), H = x.dim(1), W = x.dim(2), hw = H * W;
  if (w.dim(1) != ci || w.dim(2) != 3 || w.dim(3) != 3 || b.dim(0) != co)
    shape_error(kName, "input " + to_string(x.shape()) + ", weight " + to_string(w.shape()) +
                           ", bias " + to_string(b.shape()));
  const std::size_t k = ci * 9;
  std::unique_ptr<double[]> col(new double[k * hw]);  // fully written by im2col
  im2col3x3(x.data(), ci, H, W, col.get());
  Tensor y({co, H, W});
  MapMat Y(y.data(), co, hw);
  Y.noalias() = ConstMapMat(w.data(), co, k) * ConstMapMat(col.get(), k, hw);
  for (std::size_t o = 0; o < co; ++o) Y.row(o).array() += b[o];

  return g.record(Primitive::kConv3x3, {xv, wv, bv}, std::move(y),
                  [ci, co, H, W, hw, k](const Graph::BackwardArgs& a) {
                    ConstMapMat G(a.grad_out.data(), co, hw);
                    if (a.grad_in[1]) {
                      std::unique_ptr<double[]> c(new double[k * hw]);
                      im2col3x3(a.in[0]->data(), ci, H, W, c.get());
                      MapMat(ensure(a.grad_in[1]).data(), co, k).noalias() +=
                          G * ConstMapMat(c.get(), k, hw).transpose();
                    }
                    if (a.grad_in[0]) {
                      std::unique_ptr<double[]> dcol(new double[k * hw]);
                      MapMat(dcol.get(), k, hw).noalias() =
                          ConstMapMat(a.in[1]->data(), co, k).transpose() * G;
                      col2im3x3(dcol.get(), ci, H, W, ensure(a.grad_in[0]).data());
                    }
                    if (a.grad_in[2])
                      MapVec(ensure(a.grad_in[2]).data(), co) += G.rowwise().sum();
                  });
}

Var avg_pool_axis(Graph& g, Var xv, std::size_t axis) {
  const Tensor& x = g.value(xv);
  if (axis >= x.rank())
    shape_error("avg_pool_axis", "axis " + std::to_string(axis) + " out of range for " +
                                     to_string(x.shape()));
  const std::size_t n = x.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape s = x.shape();
  s[axis] = 1;
  Tensor y(s, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = y.data() + o * inner;
    for (std::size_t j = 0; j < n; ++j) {
      const double* src = x.data() + (o * n + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < inner; ++i) dst[i] *= inv;
  }
  return g.record(Primitive::kAvgPoolAxis, {xv}, std::move(y),
                  [outer, inner, n, inv](const Graph::BackwardArgs& a) {
                    Tensor& gx = ensure(a.grad_in[0]);
                    for (std::size_t o = 0; o < outer; ++o) {
                      const double* src = a.grad_out.data() + o * inner;
                      for (std::size_t j = 0; j < n; ++j) {
                        double* dst = gx.data() + (o * n + j) * inner;
                        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                      }
                    }
                  });
}

Var relu(Graph& g, Var xv) {
  Tensor y = g.value(xv);
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return g.record(Primitive::kRelu, {xv}, std::move(y), [](const Graph::BackwardArgs& a) {
    Tensor& gx = ensure(a.grad_in[0]);
    const double* x = a.in[0]->data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (x[i] > 0.0) gx[i] += a.grad_out[i];
  });
}

Var sigmoid(Graph& g, Var xv) {
  Tensor y = g.value(xv);
  for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  return g.record(Primitive::kSigmoid, {xv}, std::move(y), [](const Graph::BackwardArgs& a) {
    Tensor& gx = ensure(a.grad_in[0]);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = a.out[i];
      gx[i] += a.grad_out[i] * s * (1.0 - s);
    }
  });
}

Var mul(Graph& g, Var av, Var bv) {
  const Tensor& A = g.value(av);
  const Tensor& B = g.value(bv);
  Broadcast bc("elementwise_mul", A.shape(), B.shape());
  Tensor y(bc.out);
  bc.rows([&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa,
              std::size_t sb) {
    for (std::size_t i = 0; i < n; ++i) y[o + i] = A[ia + i * sa] * B[ib + i * sb];
  });
  return g.record(Primitive::kMul, {av, bv}, std::move(y), [bc](const Graph::BackwardArgs& a) {
    const Tensor& A = *a.in[0];
    const Tensor& B = *a.in[1];
    Tensor* ga = a.grad_in[0];
    Tensor* gb = a.grad_in[1];
    bc.rows([&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa,
                std::size_t sb) {
      for (std::size_t i = 0; i < n; ++i) {
        const double go = a.grad_out[o + i];
        if (ga) (*ga)[ia + i * sa] += go * B[ib + i * sb];
        if (gb) (*gb)[ib + i * sb] += go * A[ia + i * sa];
      }
    });
  });
}

Var add(Graph& g, Var av, Var bv) {
  const Tensor& A = g.value(av);
  const Tensor& B = g.value(bv);
  Broadcast bc("elementwise_add", A.shape(), B.shape());
  Tensor y(bc.out);
  bc.rows([&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa,
              std::size_t sb) {
    for (std::size_t i = 0; i < n; ++i) y[o + i] = A[ia + i * sa] + B[ib + i * sb];
  });
  return g.record(Primitive::kAdd, {av, bv}, std::move(y), [bc](const Graph::BackwardArgs& a) {
    Tensor* ga = a.grad_in[0];
    Tensor* gb = a.grad_in[1];
    bc.rows([&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa,
                std::size_t sb) {
      for (std::size_t i = 0; i < n; ++i) {
        const double go = a.grad_out[o + i];
        if (ga) (*ga)[ia + i * sa] += go;
        if (gb) (*gb)[ib + i * sb] += go;
      }
    });
  });
}

Var scale(Graph& g, Var xv, double factor) {
  Tensor y = g.value(xv);
  for (double& v : y.values()) v *= factor;
  return g.record(Primitive::kScale, {xv}, std::move(y), [factor](const Graph::BackwardArgs& a) {
    Tensor& gx = ensure(a.grad_in[0]);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * a.grad_out[i];
  });
}

Var concat_channels(Graph& g, std::span<const Var> xs) {
  if (xs.empty()) shape_error("concat_channels", "no inputs");
  std::vector<Tensor> parts;
  parts.reserve(xs.size());
  std::vector<std::size_t> sizes;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    if (t.rank() != g.value(xs[0]).rank() ||
        !std::equal(t.shape().begin() + 1, t.shape().end(), g.value(xs[0]).shape().begin() + 1))
      shape_error("concat_channels", "trailing dims differ: " + to_string(g.value(xs[0]).shape()) +
                                         " vs " + to_string(t.shape()));
    parts.push_back(t);
    sizes.push_back(t.size());
  }
  Tensor y = concat0(parts);
  return g.record(Primitive::kConcat, std::vector<Var>(xs.begin(), xs.end()), std::move(y),
                  [sizes](const Graph::BackwardArgs& a) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < sizes.size(); ++k) {
                      if (a.grad_in[k]) {
                        Tensor& gk = *a.grad_in[k];
                        for (std::size_t i = 0; i < sizes[k]; ++i) gk[i] += a.grad_out[off + i];
                      }
                      off += sizes[k];
                    }
                  });
}

Var group_norm(Graph& g, Var xv, Var gammav, Var betav, std::size_t groups) {
  constexpr std::string_view kName = "group_norm";
  const Tensor& x = g.value(xv);
  const Tensor& gamma = g.value(gammav);
  const Tensor& beta = g.value(betav);
  if (x.rank() < 2) shape_error(kName, "input must have rank >= 2, got " + to_string(x.shape()));
  const std::size_t C = x.dim(0);
  if (groups == 0 || C % groups != 0)
    shape_error(kName, std::to_string(groups) + " groups do not divide " + std::to_string(C) +
                           " channels");
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    shape_error(kName, "gamma " + to_string(gamma.shape()) + " / beta " +
                           to_string(beta.shape()) + " must be [" + std::to_string(C) + "]");
  const std::size_t spatial = x.size() / C;
  const std::size_t per_group = C / groups;
  const std::size_t n = per_group * spatial;

  Tensor xhat(x.shape());
  std::vector<double> inv_std(groups);
  Tensor y(x.shape());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* src = x.data() + gi * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kGroupNormEps);
    inv_std[gi] = is;
    for (std::size_t c = 0; c < per_group; ++c) {
      const std::size_t ch = gi * per_group + c;
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = ch * spatial + s;
        xhat[i] = (x[i] - mean) * is;
        y[i] = xhat[i] * gamma[ch] + beta[ch];
      }
    }
  }
  return g.record(
      Primitive::kGroupNorm, {xv, gammav, betav}, std::move(y),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, per_group, spatial,
       n](const Graph::BackwardArgs& a) {
        const Tensor& gamma = *a.in[1];
        const Tensor& go = a.grad_out;
        if (a.grad_in[1] || a.grad_in[2]) {
          for (std::size_t ch = 0; ch < groups * per_group; ++ch) {
            double dg = 0.0, db = 0.0;
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = ch * spatial + s;
              dg += go[i] * xhat[i];
              db += go[i];
            }
            if (a.grad_in[1]) (*a.grad_in[1])[ch] += dg;
            if (a.grad_in[2]) (*a.grad_in[2])[ch] += db;
          }
        }
        if (!a.grad_in[0]) return;
        Tensor& gx = *a.grad_in[0];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t c = 0; c < per_group; ++c) {
            const std::size_t ch = gi * per_group + c;
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = ch * spatial + s;
              const double d = go[i] * gamma[ch];
              sum_d += d;
              sum_dx += d * xhat[i];
            }
          }
          const double mean_d = sum_d * inv_n, mean_dx = sum_dx * inv_n;
          for (std::size_t c = 0; c < per_group; ++c) {
            const std::size_t ch = gi * per_group + c;
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = ch * spatial + s;
              const double d = go[i] * gamma[ch];
              gx[i] += inv_std[gi] * (d - mean_d - xhat[i] * mean_dx);
            }
          }
        }
      });
}

Var linear(Graph& g, Var xv, Var wv, Var bv) {
  constexpr std::string_view kName = "linear";
  const Tensor& x = g.value(xv);
  const Tensor& w = g.value(wv);
  const Tensor& b = g.value(bv);
  require_rank(kName, x, 1, "input");
  require_rank(kName, w, 2, "weight");
  const std::size_t in = x.dim(0), out = w.dim(0);
  if (w.dim(1) != in || b.shape() != Shape{out})
    shape_error(kName, "input " + to_string(x.shape()) + ", weight " + to_string(w.shape()) +
                           ", bias " + to_string(b.shape()));
  Tensor y = b;
  MapVec(y.data(), out).noalias() += ConstMapMat(w.data(), out, in) * ConstMapVec(x.data(), in);
  return g.record(Primitive::kLinear, {xv, wv, bv}, std::move(y),
                  [in, out](const Graph::BackwardArgs& a) {
                    ConstMapVec G(a.grad_out.data(), out);
                    if (a.grad_in[0])
                      MapVec(a.grad_in[0]->data(), in).noalias() +=
                          ConstMapMat(a.in[1]->data(), out, in).transpose() * G;
                    if (a.grad_in[1])
                      MapMat(a.grad_in[1]->data(), out, in).noalias() +=
                          G * ConstMapVec(a.in[0]->data(), in).transpose();
                    if (a.grad_in[2]) MapVec(a.grad_in[2]->data(), out) += G;
                  });
}

Var downsample2(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  require_rank("downsample2", x, 3, "input");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2) shape_error("downsample2", "odd spatial dims in " + to_string(x.shape()));
  const std::size_t h = H / 2, w = W / 2;
  Tensor y({C, h, w});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double* p = x.data() + (c * H + 2 * i) * W + 2 * j;
        y[(c * h + i) * w + j] = 0.25 * (p[0] + p[1] + p[W] + p[W + 1]);
      }
  return g.record(Primitive::kDownsample, {xv}, std::move(y),
                  [C, H, W, h, w](const Graph::BackwardArgs& a) {
                    Tensor& gx = ensure(a.grad_in[0]);
                    for (std::size_t c = 0; c < C; ++c)
                      for (std::size_t i = 0; i < h; ++i)
                        for (std::size_t j = 0; j < w; ++j) {
                          const double v = 0.25 * a.grad_out[(c * h + i) * w + j];
                          double* p = gx.data() + (c * H + 2 * i) * W + 2 * j;
                          p[0] += v;
                          p[1] += v;
                          p[W] += v;
                          p[W + 1] += v;
                        }
                  });
}

Var upsample2(Graph& g, Var xv) {
  const Tensor& x = g.value(xv);
  require_rank("upsample2", x, 3, "input");
  const std::size_t C = x.dim(0), h = x.dim(1), w = x.dim(2), H = 2 * h, W = 2 * w;
  Tensor y({C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) y[(c * H + i) * W + j] = x[(c * h + i / 2) * w + j / 2];
  return g.record(Primitive::kUpsample, {xv}, std::move(y),
                  [C, H, W, h, w](const Graph::BackwardArgs& a) {
                    Tensor& gx = ensure(a.grad_in[0]);
                    for (std::size_t c = 0; c < C; ++c)
                      for (std::size_t i = 0; i < H; ++i)
                        for (std::size_t j = 0; j < W; ++j)
                          gx[(c * h + i / 2) * w + j / 2] += a.grad_out[(c * H + i) * W + j];
                  });
}

Var slice_channels(Graph& g, Var xv, std::size_t begin, std::size_t count) {
  const Tensor& x = g.value(xv);
  if (x.rank() < 1 || count == 0 || begin + count > x.dim(0))
    shape_error("slice_channels", "rows [" + std::to_string(begin) + ", " +
                                      std::to_string(begin + count) + ") of " +
                                      to_string(x.shape()));
  Tensor y = x.slice0(begin, count);
  const std::size_t off = begin * (x.size() / x.dim(0));
  return g.record(Primitive::kSlice, {xv}, std::move(y), [off](const Graph::BackwardArgs& a) {
    Tensor& gx = ensure(a.grad_in[0]);
    for (std::size_t i = 0; i < a.grad_out.size(); ++i) gx[off + i] += a.grad_out[i];
  });
}

Var reshape(Graph& g, Var xv, Shape shape) {
  const Tensor& x = g.value(xv);
  if (numel(shape) != x.size())
    shape_error("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  Tensor y = x.reshaped(std::move(shape));
  return g.record(Primitive::kReshape, {xv}, std::move(y), [](const Graph::BackwardArgs& a) {
    Tensor& gx = ensure(a.grad_in[0]);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a.grad_out[i];
  });
}

Var crop(Graph& g, Var xv, std::size_t height, std::size_t width) {
  const Tensor& x = g.value(xv);
  require_rank("crop", x, 3, "input");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (height == 0 || width == 0 || height > H || width > W)
    shape_error("crop", "window " + std::to_string(height) + "x" + std::to_string(width) +
                            " does not fit " + to_string(x.shape()));
  Tensor y({C, height, width});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < height; ++i)
      std::memcpy(y.data() + (c * height + i) * width, x.data() + (c * H + i) * W,
                  width * sizeof(double));
  return g.record(Primitive::kCrop, {xv}, std::move(y),
                  [C, H, W, height, width](const Graph::BackwardArgs& a) {
                    Tensor& gx = ensure(a.grad_in[0]);
                    for (std::size_t c = 0; c < C; ++c)
                      for (std::size_t i = 0; i < height; ++i)
                        for (std::size_t j = 0; j < width; ++j)
                          gx[(c * H + i) * W + j] += a.grad_out[(c * height + i) * width + j];
                  });
}

}  // namespace amdm::ad
