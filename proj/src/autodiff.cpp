#include "avatar/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "avatar/kernels.hpp"

namespace avatar::ad {

int Graph::push(Tensor value, std::function<void(Graph&)> back) {
  Node n;
  n.owned = std::move(value);
  if (grad_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buf(int node) {
  Node& n = nodes_[node];
  if (n.grad.size() == 0) {
    const Tensor& v = value(node);
    n.grad = Tensor(v.rows, v.cols);
  }
  return n.grad;
}

int Graph::leaf(const Tensor* value, int param_id) {
  Node n;
  n.ext = value;
  n.param_id = param_id;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Tensor value) { return push(std::move(value), {}); }

int Graph::matmul(int a, int b) {
  Tensor out;
  kern::matmul(out, value(a), value(b));
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, b](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor ga, gb;
      kern::matmul_nt(ga, go, g.value(b));  // dA = dC * B^T
      kern::matmul_tn(gb, g.value(a), go);  // dB = A^T * dC
      Tensor& gaa = g.grad_buf(a);
      Tensor& gbb = g.grad_buf(b);
      for (int i = 0; i < ga.size(); ++i) gaa.d[i] += ga.d[i];
      for (int i = 0; i < gb.size(); ++i) gbb.d[i] += gb.d[i];
    };
  return id;
}

int Graph::matmul_nt(int a, int b) {
  Tensor out;
  kern::matmul_nt(out, value(a), value(b));
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, b](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor ga, gb;
      kern::matmul(ga, go, g.value(b));     // dA = dC * B
      kern::matmul_tn(gb, go, g.value(a));  // dB = dC^T * A
      Tensor& gaa = g.grad_buf(a);
      Tensor& gbb = g.grad_buf(b);
      for (int i = 0; i < ga.size(); ++i) gaa.d[i] += ga.d[i];
      for (int i = 0; i < gb.size(); ++i) gbb.d[i] += gb.d[i];
    };
  return id;
}

int Graph::add(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out.d[i] += tb.d[i];
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, b](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      Tensor& gb = g.grad_buf(b);
      for (int i = 0; i < go.size(); ++i) {
        ga.d[i] += go.d[i];
        gb.d[i] += go.d[i];
      }
    };
  return id;
}

int Graph::sub(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out = ta;
  for (int i = 0; i < out.size(); ++i) out.d[i] -= tb.d[i];
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, b](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      Tensor& gb = g.grad_buf(b);
      for (int i = 0; i < go.size(); ++i) {
        ga.d[i] += go.d[i];
        gb.d[i] -= go.d[i];
      }
    };
  return id;
}

int Graph::add_rowvec(int a, int bias) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(bias);
  if (tb.rows != 1 || tb.cols != ta.cols) throw std::invalid_argument("add_rowvec: bias shape");
  Tensor out = ta;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) += tb.at(0, c);
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, bias](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      Tensor& gb = g.grad_buf(bias);
      for (int r = 0; r < go.rows; ++r)
        for (int c = 0; c < go.cols; ++c) {
          ga.at(r, c) += go.at(r, c);
          gb.at(0, c) += go.at(r, c);
        }
    };
  return id;
}

int Graph::scale(int a, double s) {
  Tensor out = value(a);
  for (double& x : out.d) x *= s;
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, s](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      for (int i = 0; i < go.size(); ++i) ga.d[i] += s * go.d[i];
    };
  return id;
}

int Graph::relu(int a) {
  Tensor out = value(a);
  for (double& x : out.d) x = x > 0.0 ? x : 0.0;
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      const Tensor& in = g.value(a);
      Tensor& ga = g.grad_buf(a);
      for (int i = 0; i < go.size(); ++i)
        if (in.d[i] > 0.0) ga.d[i] += go.d[i];
    };
  return id;
}

int Graph::tanh_(int a) {
  Tensor out = value(a);
  for (double& x : out.d) x = std::tanh(x);
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      const Tensor& y = g.value(id);
      Tensor& ga = g.grad_buf(a);
      for (int i = 0; i < go.size(); ++i) ga.d[i] += go.d[i] * (1.0 - y.d[i] * y.d[i]);
    };
  return id;
}

int Graph::softmax_rows(int a, bool causal) {
  const Tensor& in = value(a);
  if (causal && in.rows != in.cols)
    throw std::invalid_argument("softmax_rows: causal mask needs a square input");
  Tensor out(in.rows, in.cols);
  for (int r = 0; r < in.rows; ++r) {
    const int limit = causal ? r + 1 : in.cols;
    double mx = -1e300;
    for (int c = 0; c < limit; ++c) mx = std::max(mx, in.at(r, c));
    double z = 0.0;
    for (int c = 0; c < limit; ++c) {
      out.at(r, c) = std::exp(in.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (int c = 0; c < limit; ++c) out.at(r, c) /= z;
    for (int c = limit; c < in.cols; ++c) out.at(r, c) = 0.0;
  }
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      const Tensor& y = g.value(id);
      Tensor& ga = g.grad_buf(a);
      for (int r = 0; r < y.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < y.cols; ++c) dot += go.at(r, c) * y.at(r, c);
        for (int c = 0; c < y.cols; ++c) ga.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
      }
    };
  return id;
}

int Graph::layernorm_rows(int x, int gain, int bias, double eps) {
  const Tensor& in = value(x);
  const Tensor& gn = value(gain);
  const Tensor& bs = value(bias);
  if (gn.cols != in.cols || bs.cols != in.cols)
    throw std::invalid_argument("layernorm_rows: gain/bias shape");
  const int n = in.cols;
  Tensor out(in.rows, n);
  Tensor xhat(in.rows, n);
  std::vector<double> inv_std(in.rows);
  for (int r = 0; r < in.rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < n; ++c) mu += in.at(r, c);
    mu /= n;
    double var = 0.0;
    for (int c = 0; c < n; ++c) {
      const double dv = in.at(r, c) - mu;
      var += dv * dv;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < n; ++c) {
      xhat.at(r, c) = (in.at(r, c) - mu) * is;
      out.at(r, c) = gn.at(0, c) * xhat.at(r, c) + bs.at(0, c);
    }
  }
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, x, gain, bias, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      const Tensor& gn = g.value(gain);
      Tensor& gx = g.grad_buf(x);
      Tensor& gg = g.grad_buf(gain);
      Tensor& gb = g.grad_buf(bias);
      const int n = go.cols;
      for (int r = 0; r < go.rows; ++r) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int c = 0; c < n; ++c) {
          const double dy = go.at(r, c) * gn.at(0, c);
          sum_dy += dy;
          sum_dy_xhat += dy * xhat.at(r, c);
          gg.at(0, c) += go.at(r, c) * xhat.at(r, c);
          gb.at(0, c) += go.at(r, c);
        }
        for (int c = 0; c < n; ++c) {
          const double dy = go.at(r, c) * gn.at(0, c);
          gx.at(r, c) +=
              inv_std[r] * (dy - sum_dy / n - xhat.at(r, c) * sum_dy_xhat / n);
        }
      }
    };
  return id;
}

int Graph::rows_gather(int table, std::vector<int> ids) {
  const Tensor& tb = value(table);
  Tensor out(static_cast<int>(ids.size()), tb.cols);
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tb.rows) throw std::out_of_range("rows_gather: id out of range");
    std::copy(tb.row(ids[r]), tb.row(ids[r]) + tb.cols, out.row(static_cast<int>(r)));
  }
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, table, ids = std::move(ids)](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& gt = g.grad_buf(table);
      for (size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < go.cols; ++c) gt.at(ids[r], c) += go.at(static_cast<int>(r), c);
    };
  return id;
}

int Graph::slice_cols(int a, int c0, int c1) {
  const Tensor& in = value(a);
  if (c0 < 0 || c1 > in.cols || c0 >= c1) throw std::out_of_range("slice_cols: bad range");
  Tensor out(in.rows, c1 - c0);
  for (int r = 0; r < in.rows; ++r)
    std::copy(in.row(r) + c0, in.row(r) + c1, out.row(r));
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a, c0](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      for (int r = 0; r < go.rows; ++r)
        for (int c = 0; c < go.cols; ++c) ga.at(r, c0 + c) += go.at(r, c);
    };
  return id;
}

int Graph::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int rows = value(parts[0]).rows;
  int total = 0;
  for (int p : parts) {
    if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
    total += value(p).cols;
  }
  Tensor out(rows, total);
  int off = 0;
  for (int p : parts) {
    const Tensor& t = value(p);
    for (int r = 0; r < rows; ++r)
      std::copy(t.row(r), t.row(r) + t.cols, out.row(r) + off);
    off += t.cols;
  }
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, parts](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      int off = 0;
      for (int p : parts) {
        Tensor& gp = g.grad_buf(p);
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += go.at(r, off + c);
        off += gp.cols;
      }
    };
  return id;
}

int Graph::mean_rows(int a) {
  const Tensor& in = value(a);
  Tensor out(1, in.cols);
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c) out.at(0, c) += in.at(r, c);
  for (int c = 0; c < in.cols; ++c) out.at(0, c) /= in.rows;
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, a](Graph& g) {
      const Tensor& go = g.nodes_[id].grad;
      Tensor& ga = g.grad_buf(a);
      const double inv = 1.0 / ga.rows;
      for (int r = 0; r < ga.rows; ++r)
        for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.at(0, c) * inv;
    };
  return id;
}

int Graph::cross_entropy_sum(int logits, std::vector<int> targets) {
  const Tensor& in = value(logits);
  if (static_cast<int>(targets.size()) != in.rows)
    throw std::invalid_argument("cross_entropy_sum: one target per row required");
  double loss = 0.0;
  for (int r = 0; r < in.rows; ++r) {
    double mx = -1e300;
    for (int c = 0; c < in.cols; ++c) mx = std::max(mx, in.at(r, c));
    double z = 0.0;
    for (int c = 0; c < in.cols; ++c) z += std::exp(in.at(r, c) - mx);
    loss += mx + std::log(z) - in.at(r, targets[r]);
  }
  Tensor out(1, 1);
  out.at(0, 0) = loss;
  int id = push(std::move(out), {});
  if (grad_)
    nodes_[id].back = [id, logits, targets = std::move(targets)](Graph& g) {
      const double seed = g.nodes_[id].grad.at(0, 0);
      const Tensor& in = g.value(logits);
      Tensor& gl = g.grad_buf(logits);
      for (int r = 0; r < in.rows; ++r) {
        double mx = -1e300;
        for (int c = 0; c < in.cols; ++c) mx = std::max(mx, in.at(r, c));
        double z = 0.0;
        for (int c = 0; c < in.cols; ++c) z += std::exp(in.at(r, c) - mx);
        for (int c = 0; c < in.cols; ++c) {
          double p = std::exp(in.at(r, c) - mx) / z;
          if (c == targets[r]) p -= 1.0;
          gl.at(r, c) += seed * p;
        }
      }
    };
  return id;
}

void Graph::backward(int out, const Tensor& seed) {
  if (!grad_) throw std::logic_error("backward on a no-grad graph");
  if (!seed.same_shape(value(out))) throw std::invalid_argument("backward: seed shape");
  grad_buf(out);
  nodes_[out].grad = seed;
  for (int i = out; i >= 0; --i)
    if (nodes_[i].back && nodes_[i].grad.size() > 0) nodes_[i].back(*this);
}

void Graph::backward_scalar(int out, double seed) {
  Tensor s(1, 1);
  s.at(0, 0) = seed;
  backward(out, s);
}

void Graph::for_each_leaf_grad(const std::function<void(int, const Tensor&)>& fn) const {
  for (const Node& n : nodes_)
    if (n.param_id >= 0 && n.grad.size() > 0) fn(n.param_id, n.grad);
}

}  // namespace avatar::ad
