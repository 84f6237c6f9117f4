#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qarm/mat.hpp"
#include "qarm/rng.hpp"

namespace qarm {

// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat w;
  Mat g;

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), w(rows, cols), g(rows, cols) {}

  void zero_grad() { g.fill(0.0); }

  void init_normal(Rng& rng, double scale) {
    for (double& v : w.a) v = scale * rng.normal();
  }

  // Uniform Glorot range from fan-in/fan-out.
  void init_xavier(Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& v : w.a) v = rng.uniform(-r, r);
  }
};

// Reverse-mode tape over small dense matrices. Nodes are created in
// topological order by construction; backward() walks them in reverse.
// Values for leaves alias the Param (no copy); gradients accumulate into
// Param::g. Constants take no gradient, which is exactly how frozen
// representation inputs stay out of the update path.
class Tape {
 public:
  using NodeId = std::size_t;

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Mat& val(NodeId id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  const Mat& grad(NodeId id) const { return nodes_[id].grad; }

  // ---- graph construction -------------------------------------------

  NodeId constant(Mat v);
  NodeId constant_view(const Mat* v);  // caller keeps v alive
  NodeId leaf(Param& p);
  // Selected rows of a table param; backward scatters into those rows.
  NodeId gather(Param& p, std::vector<std::size_t> rows);
  // Selected rows of a frozen matrix; no gradient path.
  NodeId gather_const(const Mat& m, const std::vector<std::size_t>& rows);

  NodeId matmul(NodeId a, NodeId b, bool trans_a = false,
                bool trans_b = false);
  NodeId add(NodeId a, NodeId b);             // same shape
  NodeId add_rowvec(NodeId a, NodeId bias);   // bias is 1 x cols
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId softmax_rows(NodeId a);
  NodeId transpose(NodeId a);
  NodeId concat_cols(const std::vector<NodeId>& parts);  // equal row counts
  NodeId concat_rows(const std::vector<NodeId>& parts);  // equal col counts
  NodeId mean_rows(NodeId a);                            // 1 x cols
  NodeId flatten_rows(NodeId a);                         // 1 x rows*cols
  NodeId row_l2_normalize(NodeId a);

  // Mean over rows of (logsumexp(row) - row[i][i]); the in-batch softmax
  // cross-entropy against the diagonal. Input must be square.
  NodeId xent_diag_mean(NodeId logits);

  // Stable binary cross-entropy on a 1x1 logit node.
  NodeId bce_with_logit(NodeId logit, double label);

  NodeId add_scalars(const std::vector<NodeId>& terms);

  // ---- execution ------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and propagates to every param touched.
  void backward(NodeId loss);

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;  // leaf/constant_view alias
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> back;  // nullptr for leaves/constants
    Param* param = nullptr;                  // leaf / gather target
    std::vector<std::size_t> gather_rows;
  };

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }
  Mat& grad_buf(NodeId id);
  const Mat& value_of(NodeId id) const { return val(id); }

  std::vector<Node> nodes_;
};

// Plain SGD with optional momentum (default none). grad_scale is applied
// once per step, e.g. 1/batch for mean-loss updates.
struct Sgd {
  double lr = 0.1;
  double momentum = 0.0;
  std::vector<Mat> velocity;  // lazily sized to params

  void step(std::vector<Param*>& params, double grad_scale = 1.0);
};

}  // namespace qarm
