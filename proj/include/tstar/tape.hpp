#pragma once

#include <functional>
#include <vector>

#include "tstar/tensor.hpp"

namespace tstar::nn {

// Reverse-mode differentiation over a per-forward-pass tape. Parameters enter
// as leaves bound to an external gradient sink; backward() accumulates into
// those sinks, so one tape per example composes into batch gradients by
// seeding each backward pass with 1/batch_size.
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor value);
  Id param(const Tensor& value, Tensor* grad_sink);

  Id matmul(Id a, Id b);
  Id matmul_nt(Id a, Id b);  // a * b^T
  Id add(Id a, Id b);
  Id add_rowvec(Id a, Id row);            // row broadcast over a's rows
  Id add_const(Id a, const Tensor& t);    // constant offset (positional encoding)
  Id hadamard_const(Id a, Tensor mask);   // dropout masks
  Id affine(Id a, double mult, double shift);
  Id concat_cols(const std::vector<Id>& parts);
  Id slice_cols(Id a, std::size_t begin, std::size_t n);
  Id slice_rows(Id a, std::size_t begin, std::size_t n);
  Id broadcast_row(Id row, std::size_t n_rows);
  Id gather_row(Id table, std::size_t row);
  Id softmax_rows(Id a);
  Id relu(Id a);
  Id gelu(Id a);
  Id softplus(Id a);
  Id layer_norm_rows(Id a, Id gamma, Id beta);
  // -log NB(target; mu, r); mu and r are 1x1 nodes.
  Id nb_nll(Id mu, Id r, double target);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  void backward(Id root, double seed = 1.0);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Tensor&)> back;  // pulls grad into parents
    Tensor* sink = nullptr;
  };

  Id push(Tensor value, std::function<void(Tape&, const Tensor&)> back);
  Tensor& grad_of(Id id);

  std::vector<Node> nodes_;
};

double softplus_value(double x);
double sigmoid_value(double x);

}  // namespace tstar::nn
