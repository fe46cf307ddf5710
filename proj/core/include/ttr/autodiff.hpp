// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace ttr::ad {

using Matrix = Eigen::MatrixXd;

/// Handle into a Tape. Cheap to copy; valid until Tape::reset().
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so reverse iteration is a valid reverse-topological order. One tape
/// per training step; build the graph, call backward() once, read gradients.
///
/// Not thread-safe; forward math is pure, so independent tapes can run on
/// independent threads.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  /// Gradient-tracked input (parameters, waveforms under test).
  Var leaf(Matrix value);
  /// Same storage as leaf; named differently where gradients are not read.
  Var constant(Matrix value) { return leaf(std::move(value)); }

  const Matrix& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  /// Seeds d(root)/d(root) = 1 (root must be 1x1) and sweeps the tape in
  /// reverse. Gradients accumulate; callable once per tape.
  void backward(Var root);

  void reset();
  std::size_t size() const { return nodes_.size(); }

  // -- elementwise ---------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);              // Hadamard
  Var cdiv(Var a, Var b);             // elementwise a/b
  Var scale(Var a, double s);
  Var add_scalar(Var a, double c);
  Var tanh_(Var a);
  Var sigmoid(Var a);
  Var gelu(Var a);                    // exact erf form
  Var log_(Var a);                    // natural log, positive input
  Var log1p_(Var a);
  Var sqrt_(Var a);

  // -- linear algebra ------------------------------------------------------
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var smul(Var s, Var a);             // scalar (1x1) times matrix

  // -- shape ---------------------------------------------------------------
  Var rows(Var a, int r0, int n);
  Var cols(Var a, int c0, int n);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var select_cols(Var a, const std::vector<int>& idx);

  // -- reductions / broadcasts ---------------------------------------------
  Var sum_all(Var a);                 // 1x1
  Var mean_cols(Var a);               // DxN -> Dx1
  Var col_sums(Var a);                // DxN -> 1xN (sum over rows)
  Var broadcast_add_col(Var x, Var b);  // DxN + Dx1

  // -- neural-net composites -----------------------------------------------
  Var softmax_cols(Var a);
  /// Per-column normalization with learned gain/shift (Dx1 each).
  Var layer_norm_cols(Var x, Var gain, Var shift);

  // -- signal framing ------------------------------------------------------
  /// x is Nx1. Returns frame_len x count with frame t = x[t*hop .. t*hop+frame_len),
  /// zero-padded past the end of x.
  Var frame_signal(Var x, int frame_len, int hop, int count);
  /// frames is LxP laid on a hop grid; returns out_len x 1 overlap-add.
  Var overlap_add(Var frames, int hop, int out_len);
  /// x is CxP. Returns (C*k)xP where row block j holds x shifted by
  /// (j - k/2)*dilation columns, zero-padded ("same" convolution layout).
  Var im2col(Var x, int kernel, int dilation);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  Var push(Matrix value, std::function<void(Tape&)> back);
  Matrix& grad_ref(Var v) { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  std::vector<Node> nodes_;
  bool swept_ = false;
};

/// Numerical guard: throws ttr::NumericError if the value holds NaN/Inf.
void check_finite(const Tape& t, Var v, const char* what);

}  // namespace ttr::ad
