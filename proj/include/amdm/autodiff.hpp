#pragma once

// Tape-based reverse-mode differentiation over a closed set of primitives.
//
// A Graph records every primitive applied to its Vars in execution order, so
// the tape is topologically sorted by construction. backward() walks it once,
// in reverse, and can only be called once per graph.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amdm/tensor.hpp"

namespace amdm::ad {

enum class Primitive : std::uint8_t {
  kInput,
  kParam,
  kConv1x1,
  kConv3x3,
  kAvgPoolAxis,
  kRelu,
  kSigmoid,
  kMul,
  kAdd,
  kScale,
  kConcat,
  kGroupNorm,
  kLinear,
  kDownsample,
  kUpsample,
  kSlice,
  kReshape,
  kCrop,
};

std::string_view primitive_name(Primitive p);

struct Var {
  static constexpr std::size_t kInvalid = static_cast<std::size_t>(-1);
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/// Gradients of <seed, output> with respect to every parameter leaf, plus any
/// input leaf created with requires_grad.
class Gradients {
 public:
  const Tensor& operator[](std::string_view param) const;
  const Tensor* find(std::string_view param) const;
  const Tensor& wrt(Var leaf) const;
  const std::map<std::string, Tensor, std::less<>>& params() const noexcept { return params_; }

 private:
  friend class Graph;
  std::map<std::string, Tensor, std::less<>> params_;
  std::map<std::size_t, Tensor> leaves_;
};

class Graph {
 public:
  struct BackwardArgs {
    const Tensor& grad_out;
    const Tensor& out;
    std::span<const Tensor* const> in;
    // nullptr where the input does not require a gradient.
    std::span<Tensor* const> grad_in;
  };
  using BackwardFn = std::function<void(const BackwardArgs&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(Tensor value, bool requires_grad = false);
  Var param(std::string name, Tensor value);

  const Tensor& value(Var v) const;
  Primitive primitive(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  Gradients backward(Var output, const Tensor& seed);

  /// Appends a node. Used by the primitive implementations.
  Var record(Primitive kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

 private:
  struct Node {
    Primitive kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
  };
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t, std::less<>> param_index_;
  bool consumed_ = false;
};

// --- primitives -------------------------------------------------------------
// Feature maps are [C, H, W]. Shape violations throw std::invalid_argument with
// the primitive name and offending dimensions.

/// weight [C_out, C_in], bias [C_out].
Var conv2d_1x1(Graph& g, Var x, Var weight, Var bias);
/// weight [C_out, C_in, 3, 3], bias [C_out]; zero padding keeps H and W.
Var conv2d_3x3(Graph& g, Var x, Var weight, Var bias);
/// Mean over one axis; that axis keeps size 1.
Var avg_pool_axis(Graph& g, Var x, std::size_t axis);
Var relu(Graph& g, Var x);
Var sigmoid(Graph& g, Var x);
/// Elementwise with broadcasting over size-1 dims (equal rank required).
Var mul(Graph& g, Var a, Var b);
Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
/// Concatenate along axis 0.
Var concat_channels(Graph& g, std::span<const Var> xs);
/// gamma, beta [C]; variance gets kGroupNormEps added.
Var group_norm(Graph& g, Var x, Var gamma, Var beta, std::size_t groups);
/// x [in], weight [out, in], bias [out].
Var linear(Graph& g, Var x, Var weight, Var bias);
/// 2x2 average pooling, H and W must be even.
Var downsample2(Graph& g, Var x);
/// Nearest-neighbour 2x upsampling.
Var upsample2(Graph& g, Var x);
Var slice_channels(Graph& g, Var x, std::size_t begin, std::size_t count);
Var reshape(Graph& g, Var x, Shape shape);
/// Keep the top-left [C, height, width] window.
Var crop(Graph& g, Var x, std::size_t height, std::size_t width);

inline constexpr double kGroupNormEps = 1e-6;

}  // namespace amdm::ad
