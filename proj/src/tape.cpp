#include "tstar/tape.hpp"

#include <cassert>
#include <cmath>

#include "tstar/nbdist.hpp"

namespace tstar::nn {

double softplus_value(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_value(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(back), nullptr});
  return static_cast<Id>(nodes_.size()) - 1;
}

Tensor& Tape::grad_of(Id id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.rows, node.value.cols);
  return node.grad;
}

Tape::Id Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tape::Id Tape::param(const Tensor& value, Tensor* grad_sink) {
  Id id = push(value, nullptr);
  nodes_[id].sink = grad_sink;
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  Tensor out;
  matmul_into(nodes_[a].value, nodes_[b].value, out, false);
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    matmul_nt_into(g, t.nodes_[b].value, t.grad_of(a), true);
    matmul_tn_into(t.nodes_[a].value, g, t.grad_of(b), true);
  });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  Tensor out;
  matmul_nt_into(nodes_[a].value, nodes_[b].value, out, false);
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    matmul_into(g, t.nodes_[b].value, t.grad_of(a), true);
    matmul_tn_into(g, t.nodes_[a].value, t.grad_of(b), true);
  });
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vb = nodes_[b].value;
  assert(va.same_shape(vb));
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    Tensor& gb = t.grad_of(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i];
      gb.data[i] += g.data[i];
    }
  });
}

Tape::Id Tape::add_rowvec(Id a, Id row) {
  const Tensor& va = nodes_[a].value;
  const Tensor& vr = nodes_[row].value;
  assert(vr.rows == 1 && vr.cols == va.cols);
  Tensor out = va;
  for (std::size_t i = 0; i < va.rows; ++i)
    for (std::size_t j = 0; j < va.cols; ++j) out.at(i, j) += vr.at(0, j);
  return push(std::move(out), [a, row](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    Tensor& gr = t.grad_of(row);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) {
        ga.at(i, j) += g.at(i, j);
        gr.at(0, j) += g.at(i, j);
      }
  });
}

Tape::Id Tape::add_const(Id a, const Tensor& t) {
  const Tensor& va = nodes_[a].value;
  assert(va.same_shape(t));
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += t.data[i];
  return push(std::move(out), [a](Tape& tp, const Tensor& g) {
    Tensor& ga = tp.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
}

Tape::Id Tape::hadamard_const(Id a, Tensor mask) {
  const Tensor& va = nodes_[a].value;
  assert(va.same_shape(mask));
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
  return push(std::move(out), [a, m = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * m.data[i];
  });
}

Tape::Id Tape::affine(Id a, double mult, double shift) {
  Tensor out = nodes_[a].value;
  for (double& v : out.data) v = v * mult + shift;
  return push(std::move(out), [a, mult](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * mult;
  });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  assert(!parts.empty());
  const std::size_t rows = nodes_[parts[0]].value.rows;
  std::size_t cols = 0;
  for (Id p : parts) {
    assert(nodes_[p].value.rows == rows);
    cols += nodes_[p].value.cols;
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (Id p : parts) {
    const Tensor& v = nodes_[p].value;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols; ++j) out.at(i, offset + j) = v.at(i, j);
    offset += v.cols;
  }
  return push(std::move(out), [parts](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (Id p : parts) {
      Tensor& gp = t.grad_of(p);
      for (std::size_t i = 0; i < gp.rows; ++i)
        for (std::size_t j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(i, offset + j);
      offset += gp.cols;
    }
  });
}

Tape::Id Tape::slice_cols(Id a, std::size_t begin, std::size_t n) {
  const Tensor& va = nodes_[a].value;
  assert(begin + n <= va.cols);
  Tensor out(va.rows, n);
  for (std::size_t i = 0; i < va.rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = va.at(i, begin + j);
  return push(std::move(out), [a, begin](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga.at(i, begin + j) += g.at(i, j);
  });
}

Tape::Id Tape::slice_rows(Id a, std::size_t begin, std::size_t n) {
  const Tensor& va = nodes_[a].value;
  assert(begin + n <= va.rows);
  Tensor out(n, va.cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < va.cols; ++j) out.at(i, j) = va.at(begin + i, j);
  return push(std::move(out), [a, begin](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga.at(begin + i, j) += g.at(i, j);
  });
}

Tape::Id Tape::broadcast_row(Id row, std::size_t n_rows) {
  const Tensor& vr = nodes_[row].value;
  assert(vr.rows == 1);
  Tensor out(n_rows, vr.cols);
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t j = 0; j < vr.cols; ++j) out.at(i, j) = vr.at(0, j);
  return push(std::move(out), [row](Tape& t, const Tensor& g) {
    Tensor& gr = t.grad_of(row);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gr.at(0, j) += g.at(i, j);
  });
}

Tape::Id Tape::gather_row(Id table, std::size_t row) {
  const Tensor& vt = nodes_[table].value;
  assert(row < vt.rows);
  Tensor out(1, vt.cols);
  for (std::size_t j = 0; j < vt.cols; ++j) out.at(0, j) = vt.at(row, j);
  return push(std::move(out), [table, row](Tape& t, const Tensor& g) {
    Tensor& gt = t.grad_of(table);
    for (std::size_t j = 0; j < g.cols; ++j) gt.at(row, j) += g.at(0, j);
  });
}

Tape::Id Tape::softmax_rows(Id a) {
  const Tensor& va = nodes_[a].value;
  Tensor out(va.rows, va.cols);
  for (std::size_t i = 0; i < va.rows; ++i) {
    double mx = va.at(i, 0);
    for (std::size_t j = 1; j < va.cols; ++j) mx = std::max(mx, va.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < va.cols; ++j) {
      const double e = std::exp(va.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < va.cols; ++j) out.at(i, j) /= sum;
  }
  Id id = push(std::move(out), nullptr);
  nodes_[id].back = [a, id](Tape& t, const Tensor& g) {
    const Tensor& y = t.nodes_[id].value;
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < g.cols; ++j)
        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return id;
}

Tape::Id Tape::relu(Id a) {
  const Tensor& va = nodes_[a].value;
  Tensor out = va;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[a].value;
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
  });
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

Tape::Id Tape::gelu(Id a) {
  const Tensor& va = nodes_[a].value;
  Tensor out = va;
  for (double& v : out.data) v = gelu_value(v);
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[a].value;
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * gelu_derivative(x.data[i]);
  });
}

Tape::Id Tape::softplus(Id a) {
  const Tensor& va = nodes_[a].value;
  Tensor out = va;
  for (double& v : out.data) v = softplus_value(v);
  return push(std::move(out), [a](Tape& t, const Tensor& g) {
    const Tensor& x = t.nodes_[a].value;
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * sigmoid_value(x.data[i]);
  });
}

Tape::Id Tape::layer_norm_rows(Id a, Id gamma, Id beta) {
  constexpr double kEps = 1e-5;
  const Tensor& x = nodes_[a].value;
  const Tensor& g = nodes_[gamma].value;
  const Tensor& b = nodes_[beta].value;
  assert(g.rows == 1 && g.cols == x.cols && b.rows == 1 && b.cols == x.cols);

  Tensor xhat(x.rows, x.cols);
  Tensor inv_std(x.rows, 1);
  Tensor out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(x.cols);
    double var = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.cols);
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std.at(i, 0) = inv;
    for (std::size_t j = 0; j < x.cols; ++j) {
      xhat.at(i, j) = (x.at(i, j) - mean) * inv;
      out.at(i, j) = g.at(0, j) * xhat.at(i, j) + b.at(0, j);
    }
  }
  return push(std::move(out), [a, gamma, beta, xh = std::move(xhat),
                               inv = std::move(inv_std)](Tape& t, const Tensor& grad) {
    const Tensor& gm = t.nodes_[gamma].value;
    Tensor& ga = t.grad_of(a);
    Tensor& gg = t.grad_of(gamma);
    Tensor& gb = t.grad_of(beta);
    const std::size_t n = grad.cols;
    for (std::size_t i = 0; i < grad.rows; ++i) {
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dy = grad.at(i, j);
        gb.at(0, j) += dy;
        gg.at(0, j) += dy * xh.at(i, j);
        const double dxhat = dy * gm.at(0, j);
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xh.at(i, j);
      }
      mean_dxhat /= static_cast<double>(n);
      mean_dxhat_xhat /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double dxhat = grad.at(i, j) * gm.at(0, j);
        ga.at(i, j) += inv.at(i, 0) * (dxhat - mean_dxhat - xh.at(i, j) * mean_dxhat_xhat);
      }
    }
  });
}

Tape::Id Tape::nb_nll(Id mu, Id r, double target) {
  const double mu_v = nodes_[mu].value.at(0, 0);
  const double r_v = nodes_[r].value.at(0, 0);
  const nb::NllGrad res = nb::nll_with_grad({mu_v, r_v}, target);
  Tensor out(1, 1);
  out.at(0, 0) = res.nll;
  return push(std::move(out), [mu, r, res](Tape& t, const Tensor& g) {
    t.grad_of(mu).at(0, 0) += g.at(0, 0) * res.d_mu;
    t.grad_of(r).at(0, 0) += g.at(0, 0) * res.d_r;
  });
}

void Tape::backward(Id root, double seed) {
  Tensor& g = grad_of(root);
  for (double& v : g.data) v = seed;
  for (Id id = root; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) continue;
    if (node.sink) {
      for (std::size_t i = 0; i < node.grad.size(); ++i) node.sink->data[i] += node.grad.data[i];
    }
    if (node.back) node.back(*this, node.grad);
  }
}

}  // namespace tstar::nn
