#include "amrt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amrt/error.hpp"
#include "amrt/kernels.hpp"

namespace amrt {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok)
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols));
}

void add_into(Matrix& dst, const Matrix& src, double s = 1.0) {
  for (std::size_t n = 0; n < dst.values.size(); ++n) dst.values[n] += s * src.values[n];
}

}  // namespace

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != r * c) throw ShapeError("matrix data length does not match shape");
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols != k.cols || q.cols == 0) throw ShapeError("attention: Q and K widths differ");
  if (k.rows != v.rows) throw ShapeError("attention: K and V row counts differ");
  Matrix scores(q.rows, k.rows);
  kernels::matmul_nt(q.values, k.values, scores.values, q.rows, q.cols, k.rows,
                     1.0 / std::sqrt(static_cast<double>(q.cols)));
  kernels::softmax_rows(scores.values, scores.rows, scores.cols);
  Matrix out(q.rows, v.cols);
  kernels::matmul(scores.values, v.values, out.values, q.rows, k.rows, v.cols);
  return out;
}

Tape::Id Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tape::Id Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols == B.rows, "matmul", A, B);
  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = Matrix(A.rows, B.cols);
  kernels::matmul(A.values, B.values, n.value.values, A.rows, A.cols, B.cols);
  return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b, double alpha) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.cols == B.cols, "matmul_nt", A, B);
  Node n;
  n.op = Op::matmul_nt;
  n.a = a;
  n.b = b;
  n.scalar = alpha;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = Matrix(A.rows, B.rows);
  kernels::matmul_nt(A.values, B.values, n.value.values, A.rows, A.cols, B.rows, alpha);
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows == B.rows && A.cols == B.cols, "add", A, B);
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = A;
  add_into(n.value, B);
  return push(std::move(n));
}

Tape::Id Tape::add_row(Id a, Id bias) {
  const Matrix& A = value(a);
  const Matrix& B = value(bias);
  require(B.rows == 1 && A.cols == B.cols, "add_row", A, B);
  Node n;
  n.op = Op::add_row;
  n.a = a;
  n.b = bias;
  n.requires_grad = nodes_[a].requires_grad || nodes_[bias].requires_grad;
  n.value = A;
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) n.value(i, j) += B.values[j];
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Matrix& A = value(a);
  const Matrix& B = value(b);
  require(A.rows == B.rows && A.cols == B.cols, "mul", A, B);
  Node n;
  n.op = Op::mul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  n.value = A;
  for (std::size_t k = 0; k < A.size(); ++k) n.value.values[k] *= B.values[k];
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double s) {
  Node n;
  n.op = Op::scale;
  n.a = a;
  n.scalar = s;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = value(a);
  for (auto& v : n.value.values) v *= s;
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n;
  n.op = Op::relu;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = value(a);
  for (auto& v : n.value.values) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id a) {
  Node n;
  n.op = Op::softmax;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = value(a);
  if (n.value.cols == 0) throw ShapeError("softmax over empty rows");
  kernels::softmax_rows(n.value.values, n.value.rows, n.value.cols);
  return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias, double eps) {
  const Matrix& X = value(x);
  const Matrix& G = value(gain);
  const Matrix& B = value(bias);
  require(G.rows == 1 && G.cols == X.cols, "layer_norm gain", X, G);
  require(B.rows == 1 && B.cols == X.cols, "layer_norm bias", X, B);
  Node n;
  n.op = Op::layer_norm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  n.requires_grad =
      nodes_[x].requires_grad || nodes_[gain].requires_grad || nodes_[bias].requires_grad;
  n.value = Matrix(X.rows, X.cols);
  // saved: xhat (rows*cols) followed by rstd per row
  n.saved.resize(X.size() + X.rows);
  const double inv_n = 1.0 / static_cast<double>(X.cols);
  for (std::size_t i = 0; i < X.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < X.cols; ++j) mean += X(i, j);
    mean *= inv_n;
    double var = 0.0;
    for (std::size_t j = 0; j < X.cols; ++j) var += (X(i, j) - mean) * (X(i, j) - mean);
    var *= inv_n;
    const double rstd = 1.0 / std::sqrt(var + eps);
    n.saved[X.size() + i] = rstd;
    for (std::size_t j = 0; j < X.cols; ++j) {
      const double xhat = (X(i, j) - mean) * rstd;
      n.saved[i * X.cols + j] = xhat;
      n.value(i, j) = G.values[j] * xhat + B.values[j];
    }
  }
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, std::size_t begin, std::size_t end) {
  const Matrix& A = value(a);
  if (begin > end || end > A.cols) throw ShapeError("slice_cols: range outside matrix");
  Node n;
  n.op = Op::slice;
  n.a = a;
  n.offset = begin;
  n.requires_grad = nodes_[a].requires_grad;
  n.value = Matrix(A.rows, end - begin);
  for (std::size_t i = 0; i < A.rows; ++i)
    std::copy_n(A.values.begin() + static_cast<std::ptrdiff_t>(i * A.cols + begin), end - begin,
                n.value.values.begin() + static_cast<std::ptrdiff_t>(i * (end - begin)));
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw ShapeError("concat_cols needs at least one part");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  Node n;
  n.op = Op::concat;
  for (Id p : parts) {
    if (value(p).rows != rows) throw ShapeError("concat_cols: row counts differ");
    cols += value(p).cols;
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parts.assign(parts.begin(), parts.end());
  n.value = Matrix(rows, cols);
  std::size_t off = 0;
  for (Id p : parts) {
    const Matrix& P = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols; ++j) n.value(i, off + j) = P(i, j);
    off += P.cols;
  }
  return push(std::move(n));
}

Tape::Id Tape::nmse(Id pred, const Matrix& label) {
  const Matrix& P = value(pred);
  require(P.rows == label.rows && P.cols == label.cols, "nmse", P, label);
  Node n;
  n.op = Op::nmse;
  n.a = pred;
  n.requires_grad = nodes_[pred].requires_grad;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double d = P.values[k] - label.values[k];
    num += d * d;
    den += label.values[k] * label.values[k];
  }
  if (den == 0.0) {
    zero_label_fallback_ = true;
    den = static_cast<double>(std::max<std::size_t>(P.size(), 1));
  }
  n.scalar = den;
  n.saved = label.values;
  n.value = Matrix(1, 1, num / den);
  return push(std::move(n));
}

Matrix& Tape::grad_of(Id id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

void Tape::backward(Id root) {
  if (value(root).rows != 1 || value(root).cols != 1)
    throw ShapeError("backward needs a scalar root");
  for (auto& n : nodes_) n.grad = Matrix();
  grad_of(root).values[0] = 1.0;
  for (Id id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || n.op == Op::leaf) continue;
    backprop(n);
  }
}

void Tape::backprop(Node& n) {
  const Matrix& dy = n.grad;
  auto wants = [&](Id id) { return nodes_[id].requires_grad; };

  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      const Matrix& A = value(n.a);
      const Matrix& B = value(n.b);
      if (wants(n.a)) {
        Matrix tmp(A.rows, A.cols);
        kernels::matmul_nt(dy.values, B.values, tmp.values, dy.rows, dy.cols, B.rows);
        add_into(grad_of(n.a), tmp);
      }
      if (wants(n.b))
        kernels::matmul_tn_acc(A.values, dy.values, grad_of(n.b).values, B.rows, A.rows, B.cols);
      break;
    }
    case Op::matmul_nt: {
      const Matrix& A = value(n.a);
      const Matrix& B = value(n.b);
      if (wants(n.a)) {
        Matrix tmp(A.rows, A.cols);
        kernels::matmul(dy.values, B.values, tmp.values, dy.rows, dy.cols, B.cols);
        add_into(grad_of(n.a), tmp, n.scalar);
      }
      if (wants(n.b)) {
        Matrix tmp(B.rows, B.cols);
        kernels::matmul_tn_acc(dy.values, A.values, tmp.values, B.rows, dy.rows, A.cols);
        add_into(grad_of(n.b), tmp, n.scalar);
      }
      break;
    }
    case Op::add:
      if (wants(n.a)) add_into(grad_of(n.a), dy);
      if (wants(n.b)) add_into(grad_of(n.b), dy);
      break;
    case Op::add_row:
      if (wants(n.a)) add_into(grad_of(n.a), dy);
      if (wants(n.b)) {
        Matrix& db = grad_of(n.b);
        for (std::size_t i = 0; i < dy.rows; ++i)
          for (std::size_t j = 0; j < dy.cols; ++j) db.values[j] += dy(i, j);
      }
      break;
    case Op::mul: {
      const Matrix& A = value(n.a);
      const Matrix& B = value(n.b);
      if (wants(n.a)) {
        Matrix& da = grad_of(n.a);
        for (std::size_t k = 0; k < dy.size(); ++k) da.values[k] += dy.values[k] * B.values[k];
      }
      if (wants(n.b)) {
        Matrix& db = grad_of(n.b);
        for (std::size_t k = 0; k < dy.size(); ++k) db.values[k] += dy.values[k] * A.values[k];
      }
      break;
    }
    case Op::scale:
      add_into(grad_of(n.a), dy, n.scalar);
      break;
    case Op::relu: {
      const Matrix& A = value(n.a);
      Matrix& da = grad_of(n.a);
      for (std::size_t k = 0; k < dy.size(); ++k)
        if (A.values[k] > 0.0) da.values[k] += dy.values[k];
      break;
    }
    case Op::softmax: {
      const Matrix& y = n.value;
      Matrix& da = grad_of(n.a);
      for (std::size_t i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols; ++j) da(i, j) += y(i, j) * (dy(i, j) - dot);
      }
      break;
    }
    case Op::layer_norm: {
      const Matrix& G = value(n.b);
      const std::size_t rows = n.value.rows, cols = n.value.cols;
      const double* xhat = n.saved.data();
      const double* rstd = n.saved.data() + rows * cols;
      if (wants(n.b)) {
        Matrix& dg = grad_of(n.b);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) dg.values[j] += dy(i, j) * xhat[i * cols + j];
      }
      if (wants(n.c)) {
        Matrix& db = grad_of(n.c);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) db.values[j] += dy(i, j);
      }
      if (wants(n.a)) {
        Matrix& dx = grad_of(n.a);
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double d = dy(i, j) * G.values[j];
            mean_d += d;
            mean_dx += d * xhat[i * cols + j];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t j = 0; j < cols; ++j) {
            const double d = dy(i, j) * G.values[j];
            dx(i, j) += rstd[i] * (d - mean_d - xhat[i * cols + j] * mean_dx);
          }
        }
      }
      break;
    }
    case Op::slice: {
      Matrix& da = grad_of(n.a);
      for (std::size_t i = 0; i < dy.rows; ++i)
        for (std::size_t j = 0; j < dy.cols; ++j) da(i, n.offset + j) += dy(i, j);
      break;
    }
    case Op::concat: {
      std::size_t off = 0;
      for (Id p : n.parts) {
        const std::size_t w = value(p).cols;
        if (wants(p)) {
          Matrix& dp = grad_of(p);
          for (std::size_t i = 0; i < dy.rows; ++i)
            for (std::size_t j = 0; j < w; ++j) dp(i, j) += dy(i, off + j);
        }
        off += w;
      }
      break;
    }
    case Op::nmse: {
      const Matrix& P = value(n.a);
      Matrix& dp = grad_of(n.a);
      const double s = 2.0 * dy.values[0] / n.scalar;
      for (std::size_t k = 0; k < P.size(); ++k) dp.values[k] += s * (P.values[k] - n.saved[k]);
      break;
    }
  }
}

}  // namespace amrt
