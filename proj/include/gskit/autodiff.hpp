// Reverse-mode differentiation over a fixed set of batched image operators.
//
// Activations are N x C x H x W tensors; vectors are N x C. A Graph records
// every node in creation order and backward() replays the rules in reverse.
// Gradients are allocated lazily and only for nodes that depend on a
// variable.

#pragma once

#include "gskit/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace gskit::ad {

class Graph;

/// Handle to a graph node.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  /// Gradient accumulated so far (zeros if nothing has flowed in yet).
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Index dim(Index axis) const { return value().dim(axis); }
  bool requires_grad() const;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives gradients.
  Var variable(Tensor value);

  /// Adds `g` to the gradient of `v`; the seed for backward().
  void seed(Var v, const Tensor& g);
  /// Runs every backward rule in reverse creation order.
  void backward();

  std::size_t size() const { return nodes_.size(); }

  // Operator plumbing.
  using Rule = std::function<void(const Tensor& out_grad)>;
  Var record(Tensor value, bool requires_grad, Rule rule);
  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)]->value; }
  Tensor& grad(int id);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)]->requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Rule rule;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
};

enum class NormKind { instance, batch };

inline constexpr double kNormEps = 1e-5;

/// Cross-correlation. x: N x Ci x H x W, w: Co x Ci x k x k, b: Co.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
Var relu(Var x);
/// Per-channel standardization (over H x W per sample for instance, over
/// N x H x W for batch), then gamma * xhat + beta. gamma, beta: C.
Var normalize(Var x, Var gamma, Var beta, NormKind kind, double eps = kNormEps);
/// Instance-standardizes x and applies style: N x 2C (scales then shifts).
Var adain(Var x, Var style, double eps = kNormEps);
/// Bilinear upsampling with half-pixel centers (align_corners = false).
Var upsample_bilinear(Var x, int factor);

struct FeaturePoint {
  Index batch = 0;
  double x = 0;  // column in feature coordinates
  double y = 0;  // row in feature coordinates
};
/// Bilinear read of every channel at each point: P x C. Points must lie in
/// [0, W-1] x [0, H-1].
Var extract_at(Var x, const std::vector<FeaturePoint>& points);
/// Rows of x selected by batch index: P x ... from N x ...
Var gather(Var x, const std::vector<Index>& index);
Var concat_channels(Var a, Var b);
/// x: N x Ci, w: Co x Ci, b: Co.
Var linear(Var x, Var w, Var b);
/// Softmax over axis 1 of N x C x H x W or N x C.
Var softmax(Var x);

/// Bilinear weights of a length-`in` axis upsampled by `factor`
/// ((in * factor) x in, half-pixel centers, edge-clamped).
Eigen::MatrixXd upsample_matrix(Index in, int factor);

}  // namespace gskit::ad
