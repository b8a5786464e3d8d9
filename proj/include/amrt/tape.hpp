#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace amrt {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> v);

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  std::size_t size() const noexcept { return values.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// softmax(Q K^T / sqrt(d_k)) V without recording gradients.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
// evaluation order, which is a topological order; backward() walks it in
// reverse and accumulates gradients additively at fan-out.
class Tape {
 public:
  using Id = std::size_t;

  Id leaf(Matrix value, bool requires_grad = false);

  Id matmul(Id a, Id b);
  // alpha * A * B^T
  Id matmul_nt(Id a, Id b, double alpha = 1.0);
  Id add(Id a, Id b);
  // A + 1 * bias, bias is 1 x cols
  Id add_row(Id a, Id bias);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id relu(Id a);
  Id softmax_rows(Id a);
  // Row-wise normalization with 1 x cols gain and bias.
  Id layer_norm(Id x, Id gain, Id bias, double eps = 1e-5);
  Id slice_cols(Id a, std::size_t begin, std::size_t end);
  Id concat_cols(std::span<const Id> parts);
  // sum((pred - label)^2) / sum(label^2) as a 1 x 1 node; falls back to the
  // plain mean squared error when the label is identically zero.
  Id nmse(Id pred, const Matrix& label);

  const Matrix& value(Id id) const { return nodes_[id].value; }
  // Zero-sized until backward() reaches the node.
  const Matrix& grad(Id id) const { return nodes_[id].grad; }
  bool zero_label_fallback() const noexcept { return zero_label_fallback_; }

  // Seeds d(root)/d(root) = 1; root must be 1 x 1.
  void backward(Id root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf, matmul, matmul_nt, add, add_row, mul, scale, relu, softmax, layer_norm, slice, concat,
    nmse
  };

  struct Node {
    Op op = Op::leaf;
    Id a = 0;
    Id b = 0;
    Id c = 0;
    double scalar = 0.0;
    std::size_t offset = 0;
    bool requires_grad = false;
    Matrix value;
    Matrix grad;
    std::vector<double> saved;  // op-specific: label, per-row stats, ...
    std::vector<Id> parts;
  };

  Id push(Node node);
  Matrix& grad_of(Id id);
  void backprop(Node& node);

  std::vector<Node> nodes_;
  bool zero_label_fallback_ = false;
};

}  // namespace amrt
