#include "qarm/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace qarm {

namespace {

// C (+)= op(A) * op(B)
void gemm_acc(const Mat& A, bool ta, const Mat& B, bool tb, Mat& C) {
  const std::size_t m = ta ? A.cols : A.rows;
  const std::size_t k = ta ? A.rows : A.cols;
  const std::size_t n = tb ? B.rows : B.cols;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? A.at(p, i) : A.at(i, p);
      if (av == 0.0) continue;
      double* crow = C.a.data() + i * n;
      if (!tb) {
        const double* brow = B.a.data() + p * B.cols;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * B.at(j, p);
      }
    }
  }
}

}  // namespace

Mat& Tape::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.a.empty()) {
    const Mat& v = val(id);
    n.grad = Mat(v.rows, v.cols);
  }
  return n.grad;
}

Tape::NodeId Tape::constant(Mat v) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = false;
  return push(std::move(n));
}

Tape::NodeId Tape::constant_view(const Mat* v) {
  Node n;
  n.external = v;
  n.needs_grad = false;
  return push(std::move(n));
}

Tape::NodeId Tape::leaf(Param& p) {
  Node n;
  n.external = &p.w;
  n.needs_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Tape::NodeId Tape::gather(Param& p, std::vector<std::size_t> rows) {
  Node n;
  n.value = Mat(rows.size(), p.w.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= p.w.rows)
      throw std::invalid_argument("gather: row out of range in " + p.name);
    std::copy(p.w.row(rows[i]).begin(), p.w.row(rows[i]).end(),
              n.value.row(i).begin());
  }
  n.needs_grad = true;
  n.param = &p;
  n.gather_rows = std::move(rows);
  return push(std::move(n));
}

Tape::NodeId Tape::gather_const(const Mat& m,
                                const std::vector<std::size_t>& rows) {
  Mat v(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows)
      throw std::invalid_argument("gather_const: row out of range");
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), v.row(i).begin());
  }
  return constant(std::move(v));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b, bool trans_a, bool trans_b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  const std::size_t m = trans_a ? A.cols : A.rows;
  const std::size_t ka = trans_a ? A.rows : A.cols;
  const std::size_t kb = trans_b ? B.cols : B.rows;
  const std::size_t n = trans_b ? B.rows : B.cols;
  if (ka != kb) throw std::invalid_argument("matmul: inner dim mismatch");

  Node node;
  node.value = Mat(m, n);
  gemm_acc(A, trans_a, B, trans_b, node.value);
  node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  node.back = [a, b, trans_a, trans_b](Tape& t, Node& self) {
    const Mat& G = self.grad;
    if (t.nodes_[a].needs_grad) {
      Mat& ga = t.grad_buf(a);
      // dA = G * B^T (untransposed A); transposed cases move the transpose.
      if (!trans_a)
        gemm_acc(G, false, t.val(b), !trans_b, ga);
      else
        gemm_acc(t.val(b), trans_b, G, true, ga);
    }
    if (t.nodes_[b].needs_grad) {
      Mat& gb = t.grad_buf(b);
      if (!trans_b)
        gemm_acc(t.val(a), !trans_a, G, false, gb);
      else
        gemm_acc(G, true, t.val(a), trans_a, gb);
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
  Node node;
  node.value = A;
  for (std::size_t i = 0; i < B.a.size(); ++i) node.value.a[i] += B.a[i];
  node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  node.back = [a, b](Tape& t, Node& self) {
    for (NodeId src : {a, b}) {
      if (!t.nodes_[src].needs_grad) continue;
      Mat& g = t.grad_buf(src);
      for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += self.grad.a[i];
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId bias) {
  const Mat& A = val(a);
  const Mat& B = val(bias);
  if (B.rows != 1 || B.cols != A.cols)
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
  Node node;
  node.value = A;
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < A.cols; ++c) node.value.at(r, c) += B.at(0, c);
  node.needs_grad = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  node.back = [a, bias](Tape& t, Node& self) {
    if (t.nodes_[a].needs_grad) {
      Mat& g = t.grad_buf(a);
      for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += self.grad.a[i];
    }
    if (t.nodes_[bias].needs_grad) {
      Mat& g = t.grad_buf(bias);
      for (std::size_t r = 0; r < self.grad.rows; ++r)
        for (std::size_t c = 0; c < self.grad.cols; ++c)
          g.at(0, c) += self.grad.at(r, c);
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::relu(NodeId a) {
  Node node;
  node.value = val(a);
  for (double& v : node.value.a) v = v > 0.0 ? v : 0.0;
  node.needs_grad = nodes_[a].needs_grad;
  node.back = [a](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    const Mat& x = t.val(a);
    for (std::size_t i = 0; i < g.a.size(); ++i)
      if (x.a[i] > 0.0) g.a[i] += self.grad.a[i];
  };
  return push(std::move(node));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  Node node;
  node.value = val(a);
  for (double& v : node.value.a) v = 1.0 / (1.0 + std::exp(-v));
  node.needs_grad = nodes_[a].needs_grad;
  NodeId self_id = nodes_.size();
  node.back = [a, self_id](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    const Mat& y = t.val(self_id);
    for (std::size_t i = 0; i < g.a.size(); ++i)
      g.a[i] += self.grad.a[i] * y.a[i] * (1.0 - y.a[i]);
  };
  return push(std::move(node));
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Node node;
  node.value = val(a);
  for (double& v : node.value.a) v *= c;
  node.needs_grad = nodes_[a].needs_grad;
  node.back = [a, c](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += c * self.grad.a[i];
  };
  return push(std::move(node));
}

Tape::NodeId Tape::softmax_rows(NodeId a) {
  const Mat& A = val(a);
  Node node;
  node.value = Mat(A.rows, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) {
    double mx = A.at(r, 0);
    for (std::size_t c = 1; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < A.cols; ++c) {
      const double e = std::exp(A.at(r, c) - mx);
      node.value.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < A.cols; ++c) node.value.at(r, c) /= sum;
  }
  node.needs_grad = nodes_[a].needs_grad;
  NodeId self_id = nodes_.size();
  node.back = [a, self_id](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    const Mat& y = t.val(self_id);
    for (std::size_t r = 0; r < y.rows; ++r) {
      double dotgy = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c)
        dotgy += self.grad.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols; ++c)
        g.at(r, c) += y.at(r, c) * (self.grad.at(r, c) - dotgy);
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::transpose(NodeId a) {
  const Mat& A = val(a);
  Node node;
  node.value = Mat(A.cols, A.rows);
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < A.cols; ++c) node.value.at(c, r) = A.at(r, c);
  node.needs_grad = nodes_[a].needs_grad;
  node.back = [a](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    for (std::size_t r = 0; r < self.grad.rows; ++r)
      for (std::size_t c = 0; c < self.grad.cols; ++c)
        g.at(c, r) += self.grad.at(r, c);
  };
  return push(std::move(node));
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const std::size_t rows = val(parts[0]).rows;
  std::size_t cols = 0;
  bool needs = false;
  for (NodeId p : parts) {
    if (val(p).rows != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += val(p).cols;
    needs = needs || nodes_[p].needs_grad;
  }
  Node node;
  node.value = Mat(rows, cols);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Mat& m = val(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(m.row(r).begin(), m.row(r).end(),
                node.value.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += m.cols;
  }
  node.needs_grad = needs;
  node.back = [parts](Tape& t, Node& self) {
    std::size_t off = 0;
    for (NodeId p : parts) {
      const std::size_t c = t.val(p).cols;
      if (t.nodes_[p].needs_grad) {
        Mat& g = t.grad_buf(p);
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t j = 0; j < c; ++j)
            g.at(r, j) += self.grad.at(r, off + j);
      }
      off += c;
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const std::size_t cols = val(parts[0]).cols;
  std::size_t rows = 0;
  bool needs = false;
  for (NodeId p : parts) {
    if (val(p).cols != cols)
      throw std::invalid_argument("concat_rows: col mismatch");
    rows += val(p).rows;
    needs = needs || nodes_[p].needs_grad;
  }
  Node node;
  node.value = Mat(rows, cols);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Mat& m = val(p);
    std::copy(m.a.begin(), m.a.end(),
              node.value.a.begin() + static_cast<std::ptrdiff_t>(off * cols));
    off += m.rows;
  }
  node.needs_grad = needs;
  node.back = [parts](Tape& t, Node& self) {
    std::size_t off = 0;
    for (NodeId p : parts) {
      const std::size_t r = t.val(p).rows;
      if (t.nodes_[p].needs_grad) {
        Mat& g = t.grad_buf(p);
        for (std::size_t i = 0; i < r * g.cols; ++i)
          g.a[i] += self.grad.a[off * g.cols + i];
      }
      off += r;
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::mean_rows(NodeId a) {
  const Mat& A = val(a);
  if (A.rows == 0) throw std::invalid_argument("mean_rows: empty");
  Node node;
  node.value = Mat(1, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r)
    for (std::size_t c = 0; c < A.cols; ++c)
      node.value.at(0, c) += A.at(r, c);
  const double inv = 1.0 / static_cast<double>(A.rows);
  for (double& v : node.value.a) v *= inv;
  node.needs_grad = nodes_[a].needs_grad;
  node.back = [a, inv](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < g.cols; ++c)
        g.at(r, c) += inv * self.grad.at(0, c);
  };
  return push(std::move(node));
}

Tape::NodeId Tape::flatten_rows(NodeId a) {
  const Mat& A = val(a);
  Node node;
  node.value = Mat(1, A.rows * A.cols);
  node.value.a = A.a;
  node.needs_grad = nodes_[a].needs_grad;
  node.back = [a](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += self.grad.a[i];
  };
  return push(std::move(node));
}

Tape::NodeId Tape::row_l2_normalize(NodeId a) {
  const Mat& A = val(a);
  Node node;
  node.value = Mat(A.rows, A.cols);
  std::vector<double> norms(A.rows);
  for (std::size_t r = 0; r < A.rows; ++r) {
    norms[r] = std::max(norm2(A.row(r)), 1e-12);
    for (std::size_t c = 0; c < A.cols; ++c)
      node.value.at(r, c) = A.at(r, c) / norms[r];
  }
  node.needs_grad = nodes_[a].needs_grad;
  NodeId self_id = nodes_.size();
  node.back = [a, self_id, norms](Tape& t, Node& self) {
    if (!t.nodes_[a].needs_grad) return;
    Mat& g = t.grad_buf(a);
    const Mat& y = t.val(self_id);
    for (std::size_t r = 0; r < y.rows; ++r) {
      double gy = 0.0;
      for (std::size_t c = 0; c < y.cols; ++c)
        gy += self.grad.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols; ++c)
        g.at(r, c) += (self.grad.at(r, c) - gy * y.at(r, c)) / norms[r];
    }
  };
  return push(std::move(node));
}

Tape::NodeId Tape::xent_diag_mean(NodeId logits) {
  const Mat& A = val(logits);
  if (A.rows != A.cols)
    throw std::invalid_argument("xent_diag_mean: square input required");
  const std::size_t n = A.rows;

  // softmax rows cached for the backward pass
  Mat probs(n, n);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = A.at(r, 0);
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, A.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double e = std::exp(A.at(r, c) - mx);
      probs.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < n; ++c) probs.at(r, c) /= sum;
    loss += mx + std::log(sum) - A.at(r, r);
  }
  loss /= static_cast<double>(n);

  Node node;
  node.value = Mat(1, 1);
  node.value.at(0, 0) = loss;
  node.needs_grad = nodes_[logits].needs_grad;
  node.back = [logits, probs, n](Tape& t, Node& self) {
    if (!t.nodes_[logits].needs_grad) return;
    Mat& g = t.grad_buf(logits);
    const double s = self.grad.at(0, 0) / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        g.at(r, c) += s * (probs.at(r, c) - (r == c ? 1.0 : 0.0));
  };
  return push(std::move(node));
}

Tape::NodeId Tape::bce_with_logit(NodeId logit, double label) {
  const Mat& Z = val(logit);
  if (Z.rows != 1 || Z.cols != 1)
    throw std::invalid_argument("bce_with_logit: scalar logit required");
  const double z = Z.at(0, 0);
  // softplus(z) - y*z, stabilized
  const double loss = std::max(z, 0.0) - label * z + std::log1p(std::exp(-std::abs(z)));

  Node node;
  node.value = Mat(1, 1);
  node.value.at(0, 0) = loss;
  node.needs_grad = nodes_[logit].needs_grad;
  node.back = [logit, z, label](Tape& t, Node& self) {
    if (!t.nodes_[logit].needs_grad) return;
    Mat& g = t.grad_buf(logit);
    const double p = 1.0 / (1.0 + std::exp(-z));
    g.at(0, 0) += self.grad.at(0, 0) * (p - label);
  };
  return push(std::move(node));
}

Tape::NodeId Tape::add_scalars(const std::vector<NodeId>& terms) {
  if (terms.empty()) throw std::invalid_argument("add_scalars: empty");
  double total = 0.0;
  bool needs = false;
  for (NodeId t : terms) {
    const Mat& v = val(t);
    if (v.rows != 1 || v.cols != 1)
      throw std::invalid_argument("add_scalars: non-scalar term");
    total += v.at(0, 0);
    needs = needs || nodes_[t].needs_grad;
  }
  Node node;
  node.value = Mat(1, 1);
  node.value.at(0, 0) = total;
  node.needs_grad = needs;
  node.back = [terms](Tape& t, Node& self) {
    for (NodeId src : terms) {
      if (!t.nodes_[src].needs_grad) continue;
      t.grad_buf(src).at(0, 0) += self.grad.at(0, 0);
    }
  };
  return push(std::move(node));
}

void Tape::backward(NodeId loss) {
  const Mat& lv = val(loss);
  if (lv.rows != 1 || lv.cols != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  grad_buf(loss).at(0, 0) = 1.0;

  for (std::size_t i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.a.empty()) continue;
    if (n.back) {
      n.back(*this, n);
    } else if (n.param) {
      if (n.gather_rows.empty() && n.external) {
        // dense leaf
        for (std::size_t j = 0; j < n.grad.a.size(); ++j)
          n.param->g.a[j] += n.grad.a[j];
      } else {
        for (std::size_t r = 0; r < n.gather_rows.size(); ++r) {
          auto dst = n.param->g.row(n.gather_rows[r]);
          auto src = n.grad.row(r);
          for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
      }
    }
  }
}

void Sgd::step(std::vector<Param*>& params, double grad_scale) {
  if (momentum != 0.0 && velocity.size() != params.size()) {
    velocity.clear();
    for (Param* p : params) velocity.emplace_back(p->w.rows, p->w.cols);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (momentum == 0.0) {
      for (std::size_t j = 0; j < p.w.a.size(); ++j)
        p.w.a[j] -= lr * grad_scale * p.g.a[j];
    } else {
      Mat& v = velocity[i];
      for (std::size_t j = 0; j < p.w.a.size(); ++j) {
        v.a[j] = momentum * v.a[j] + grad_scale * p.g.a[j];
        p.w.a[j] -= lr * v.a[j];
      }
    }
    p.zero_grad();
  }
}

}  // namespace qarm
