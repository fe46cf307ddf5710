// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "ttr/errors.hpp"

namespace ttr::ad {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value) { return push(std::move(value), {}); }

void Tape::backward(Var root) {
  if (swept_) throw std::logic_error("Tape::backward called twice");
  const Matrix& rv = val(root);
  if (rv.rows() != 1 || rv.cols() != 1)
    throw std::invalid_argument("Tape::backward: root must be 1x1");
  grad_ref(root)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  swept_ = true;
}

void Tape::reset() {
  nodes_.clear();
  swept_ = false;
}

Var Tape::add(Var a, Var b) {
  require_same_shape(val(a), val(b), "add");
  return push(val(a) + val(b), [a, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    t.grad_ref(a) += t.grad(out);
    t.grad_ref(b) += t.grad(out);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(val(a), val(b), "sub");
  return push(val(a) - val(b), [a, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    t.grad_ref(a) += t.grad(out);
    t.grad_ref(b) -= t.grad(out);
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(val(a), val(b), "mul");
  return push(val(a).cwiseProduct(val(b)),
              [a, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a) += t.grad(out).cwiseProduct(t.val(b));
                t.grad_ref(b) += t.grad(out).cwiseProduct(t.val(a));
              });
}

Var Tape::cdiv(Var a, Var b) {
  require_same_shape(val(a), val(b), "cdiv");
  return push(val(a).cwiseQuotient(val(b)),
              [a, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a) += t.grad(out).cwiseQuotient(t.val(b));
                t.grad_ref(b) -=
                    t.grad(out).cwiseProduct(t.val(out)).cwiseQuotient(t.val(b));
              });
}

Var Tape::scale(Var a, double s) {
  return push(val(a) * s, [a, s, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    t.grad_ref(a) += s * t.grad(out);
  });
}

Var Tape::add_scalar(Var a, double c) {
  return push((val(a).array() + c).matrix(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a) += t.grad(out);
              });
}

Var Tape::tanh_(Var a) {
  return push(val(a).array().tanh().matrix(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).array() +=
                    t.grad(out).array() * (1.0 - t.val(out).array().square());
              });
}

Var Tape::sigmoid(Var a) {
  Matrix y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
  return push(std::move(y), [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    const auto& y = t.val(out).array();
    t.grad_ref(a).array() += t.grad(out).array() * y * (1.0 - y);
  });
}

Var Tape::gelu(Var a) {
  Matrix y = val(a).unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return push(std::move(y), [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    const Matrix d = t.val(a).unaryExpr([](double v) {
      const double phi = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      return cdf + v * phi;
    });
    t.grad_ref(a).array() += t.grad(out).array() * d.array();
  });
}

Var Tape::log_(Var a) {
  return push(val(a).array().log().matrix(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).array() += t.grad(out).array() / t.val(a).array();
              });
}

Var Tape::log1p_(Var a) {
  return push(val(a).unaryExpr([](double v) { return std::log1p(v); }),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).array() += t.grad(out).array() / (1.0 + t.val(a).array());
              });
}

Var Tape::sqrt_(Var a) {
  return push(val(a).array().sqrt().matrix(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).array() += t.grad(out).array() / (2.0 * t.val(out).array());
              });
}

Var Tape::matmul(Var a, Var b) {
  if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: inner dim mismatch");
  return push(val(a) * val(b), [a, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    t.grad_ref(a) += t.grad(out) * t.val(b).transpose();
    t.grad_ref(b) += t.val(a).transpose() * t.grad(out);
  });
}

Var Tape::transpose(Var a) {
  return push(val(a).transpose(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a) += t.grad(out).transpose();
              });
}

Var Tape::smul(Var s, Var a) {
  const Matrix& sv = val(s);
  if (sv.rows() != 1 || sv.cols() != 1) throw std::invalid_argument("smul: scalar must be 1x1");
  return push(sv(0, 0) * val(a),
              [s, a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a) += t.val(s)(0, 0) * t.grad(out);
                t.grad_ref(s)(0, 0) += (t.grad(out).cwiseProduct(t.val(a))).sum();
              });
}

Var Tape::rows(Var a, int r0, int n) {
  if (r0 < 0 || n < 1 || r0 + n > val(a).rows()) throw std::invalid_argument("rows: out of range");
  return push(val(a).middleRows(r0, n),
              [a, r0, n, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).middleRows(r0, n) += t.grad(out);
              });
}

Var Tape::cols(Var a, int c0, int n) {
  if (c0 < 0 || n < 1 || c0 + n > val(a).cols()) throw std::invalid_argument("cols: out of range");
  return push(val(a).middleCols(c0, n),
              [a, c0, n, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).middleCols(c0, n) += t.grad(out);
              });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts[0]).cols();
  for (Var p : parts) {
    if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += val(p).rows();
  }
  Matrix m(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    m.middleRows(r, val(p).rows()) = val(p);
    r += val(p).rows();
  }
  return push(std::move(m),
              [parts, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                Eigen::Index r = 0;
                for (Var p : parts) {
                  t.grad_ref(p) += t.grad(out).middleRows(r, t.val(p).rows());
                  r += t.val(p).rows();
                }
              });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index cols = 0;
  const Eigen::Index rows = val(parts[0]).rows();
  for (Var p : parts) {
    if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += val(p).cols();
  }
  Matrix m(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    m.middleCols(c, val(p).cols()) = val(p);
    c += val(p).cols();
  }
  return push(std::move(m),
              [parts, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                Eigen::Index c = 0;
                for (Var p : parts) {
                  t.grad_ref(p) += t.grad(out).middleCols(c, t.val(p).cols());
                  c += t.val(p).cols();
                }
              });
}

Var Tape::select_cols(Var a, const std::vector<int>& idx) {
  Matrix m(val(a).rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= val(a).cols())
      throw std::invalid_argument("select_cols: index out of range");
    m.col(static_cast<Eigen::Index>(j)) = val(a).col(idx[j]);
  }
  return push(std::move(m),
              [a, idx, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                for (std::size_t j = 0; j < idx.size(); ++j)
                  t.grad_ref(a).col(idx[j]) += t.grad(out).col(static_cast<Eigen::Index>(j));
              });
}

Var Tape::sum_all(Var a) {
  Matrix m(1, 1);
  m(0, 0) = val(a).sum();
  return push(std::move(m), [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    t.grad_ref(a).array() += t.grad(out)(0, 0);
  });
}

Var Tape::mean_cols(Var a) {
  const double inv_n = 1.0 / static_cast<double>(val(a).cols());
  return push(val(a).rowwise().sum() * inv_n,
              [a, inv_n, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).colwise() += Eigen::VectorXd(inv_n * t.grad(out).col(0));
              });
}

Var Tape::col_sums(Var a) {
  return push(val(a).colwise().sum(),
              [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(a).rowwise() += Eigen::RowVectorXd(t.grad(out).row(0));
              });
}

Var Tape::broadcast_add_col(Var x, Var b) {
  if (val(b).cols() != 1 || val(b).rows() != val(x).rows())
    throw std::invalid_argument("broadcast_add_col: b must be Dx1");
  return push(val(x).colwise() + Eigen::VectorXd(val(b).col(0)),
              [x, b, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
                t.grad_ref(x) += t.grad(out);
                t.grad_ref(b) += t.grad(out).rowwise().sum();
              });
}

Var Tape::softmax_cols(Var a) {
  Matrix y = val(a);
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    auto col = y.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp();
    col /= col.sum();
  }
  return push(std::move(y), [a, out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    const Matrix& y = t.val(out);
    const Matrix& g = t.grad(out);
    const Eigen::RowVectorXd dots = (g.cwiseProduct(y)).colwise().sum();
    const Matrix centered = g.rowwise() - dots;
    t.grad_ref(a) += y.cwiseProduct(centered);
  });
}

Var Tape::layer_norm_cols(Var x, Var gain, Var shift) {
  const Matrix& xv = val(x);
  const Eigen::Index d = xv.rows();
  if (val(gain).rows() != d || val(gain).cols() != 1 || val(shift).rows() != d ||
      val(shift).cols() != 1)
    throw std::invalid_argument("layer_norm_cols: gain/shift must be Dx1");

  Matrix xhat(d, xv.cols());
  Eigen::RowVectorXd inv_std(xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    const double mu = xv.col(c).mean();
    const double var = (xv.col(c).array() - mu).square().mean();
    inv_std(c) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.col(c) = (xv.col(c).array() - mu) * inv_std(c);
  }
  Matrix y = ((xhat.array().colwise() * val(gain).col(0).array()).colwise() +
              val(shift).col(0).array())
                 .matrix();
  return push(std::move(y), [x, gain, shift, xhat = std::move(xhat),
                             inv_std = std::move(inv_std),
                             out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    const Matrix& g = t.grad(out);
    t.grad_ref(shift) += g.rowwise().sum();
    t.grad_ref(gain) += (g.cwiseProduct(xhat)).rowwise().sum();
    const Matrix dxhat = (g.array().colwise() * t.val(gain).col(0).array()).matrix();
    // d/dx of (x - mu)/std per column.
    for (Eigen::Index c = 0; c < xhat.cols(); ++c) {
      const double m1 = dxhat.col(c).mean();
      const double m2 = (dxhat.col(c).cwiseProduct(xhat.col(c))).mean();
      t.grad_ref(x).col(c).array() +=
          inv_std(c) * (dxhat.col(c).array() - m1 - xhat.col(c).array() * m2);
    }
  });
}

Var Tape::frame_signal(Var x, int frame_len, int hop, int count) {
  const Matrix& xv = val(x);
  if (xv.cols() != 1) throw std::invalid_argument("frame_signal: x must be Nx1");
  if (frame_len < 1 || hop < 1 || count < 1)
    throw std::invalid_argument("frame_signal: bad framing");
  const Eigen::Index n = xv.rows();
  Matrix f = Matrix::Zero(frame_len, count);
  for (int t = 0; t < count; ++t) {
    for (int i = 0; i < frame_len; ++i) {
      const Eigen::Index src = static_cast<Eigen::Index>(t) * hop + i;
      if (src < n) f(i, t) = xv(src, 0);
    }
  }
  return push(std::move(f), [x, frame_len, hop, count,
                             out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    Matrix& gx = t.grad_ref(x);
    const Matrix& g = t.grad(out);
    const Eigen::Index n = gx.rows();
    for (int c = 0; c < count; ++c)
      for (int i = 0; i < frame_len; ++i) {
        const Eigen::Index dst = static_cast<Eigen::Index>(c) * hop + i;
        if (dst < n) gx(dst, 0) += g(i, c);
      }
  });
}

Var Tape::overlap_add(Var frames, int hop, int out_len) {
  const Matrix& f = val(frames);
  if (hop < 1 || out_len < 1) throw std::invalid_argument("overlap_add: bad layout");
  Matrix y = Matrix::Zero(out_len, 1);
  for (Eigen::Index p = 0; p < f.cols(); ++p)
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const Eigen::Index dst = p * hop + i;
      if (dst < out_len) y(dst, 0) += f(i, p);
    }
  return push(std::move(y), [frames, hop, out_len,
                             out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    Matrix& gf = t.grad_ref(frames);
    const Matrix& g = t.grad(out);
    for (Eigen::Index p = 0; p < gf.cols(); ++p)
      for (Eigen::Index i = 0; i < gf.rows(); ++i) {
        const Eigen::Index src = p * hop + i;
        if (src < out_len) gf(i, p) += g(src, 0);
      }
  });
}

Var Tape::im2col(Var x, int kernel, int dilation) {
  const Matrix& xv = val(x);
  if (kernel < 1 || dilation < 1) throw std::invalid_argument("im2col: bad kernel/dilation");
  const Eigen::Index c = xv.rows();
  const Eigen::Index p = xv.cols();
  Matrix m = Matrix::Zero(c * kernel, p);
  const int center = kernel / 2;
  for (int j = 0; j < kernel; ++j) {
    const Eigen::Index shift = static_cast<Eigen::Index>(j - center) * dilation;
    for (Eigen::Index col = 0; col < p; ++col) {
      const Eigen::Index src = col + shift;
      if (src >= 0 && src < p) m.block(j * c, col, c, 1) = xv.col(src);
    }
  }
  return push(std::move(m), [x, kernel, dilation,
                             out = Var{static_cast<std::int32_t>(nodes_.size())}](Tape& t) {
    Matrix& gx = t.grad_ref(x);
    const Matrix& g = t.grad(out);
    const Eigen::Index c = gx.rows();
    const Eigen::Index p = gx.cols();
    const int center = kernel / 2;
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index shift = static_cast<Eigen::Index>(j - center) * dilation;
      for (Eigen::Index col = 0; col < p; ++col) {
        const Eigen::Index src = col + shift;
        if (src >= 0 && src < p) gx.col(src) += g.block(j * c, col, c, 1);
      }
    }
  });
}

void check_finite(const Tape& t, Var v, const char* what) {
  if (!t.val(v).allFinite()) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace ttr::ad
