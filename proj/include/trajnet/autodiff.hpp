#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trajnet/tensor.hpp"

namespace trajnet {

/// A learnable array with its accumulated gradient. Owned by a model,
/// bound onto a tape for each forward pass.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Recorded operation. `backward` reads this node's grad and adds the
/// contributions into the parents' grads.
struct DiffNode {
  Tensor value;
  Tensor grad;
  std::vector<std::size_t> parents;
  std::string_view op;
  std::function<void(Tape&, const DiffNode&)> backward;
  bool requires_grad = false;
  bool leaf = false;
  Parameter* bound = nullptr;
};

/// Define-by-run record of operations in creation order.
///
/// Nodes are appended as operations execute, so creation order is a valid
/// topological order. backward() walks it in reverse exactly once. Interior
/// gradients are reset at the start of every backward() call while leaf
/// gradients accumulate, so calling backward() twice without zero_grad()
/// doubles every leaf gradient.
///
/// A tape is single-threaded. Concurrent evaluations each use their own tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var parameter(Parameter& param);

  /// Append a node. Used by the op implementations; parents must belong to this tape.
  Var record(Tensor value, std::vector<Var> parents, std::string_view op,
             std::function<void(Tape&, const DiffNode&)> backward);

  void backward(const Var& root);
  void zero_grad();

  /// Add every bound parameter's leaf gradient into Parameter::grad.
  void flush_parameter_grads();

  DiffNode& node(std::size_t id) { return nodes_[id]; }
  const DiffNode& node(std::size_t id) const { return nodes_[id]; }
  Tensor& grad_of(std::size_t id) { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  Var push(DiffNode node);
  std::deque<DiffNode> nodes_;  // deque keeps node references stable while recording
};

enum class UnaryKind { identity, tanh, sigmoid, relu, exp };

// Dense products. Matrices are rank-2; a rank-1 operand is not promoted.
Var matmul(const Var& a, const Var& b);
/// a · bᵀ, the form used to apply a weight stored as [out x in] to row-batched inputs.
Var matmul_nt(const Var& a, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// X[N x C] + b[C] added to every row.
Var add_rowwise(const Var& x, const Var& bias);

Var unary(const Var& x, UnaryKind kind);
inline Var tanh(const Var& x) { return unary(x, UnaryKind::tanh); }
inline Var sigmoid(const Var& x) { return unary(x, UnaryKind::sigmoid); }
inline Var relu(const Var& x) { return unary(x, UnaryKind::relu); }
inline Var exp(const Var& x) { return unary(x, UnaryKind::exp); }

/// Max-subtracted softmax over a rank-1 tensor, or over each row of a rank-2 tensor.
Var softmax(const Var& x);

Var concat(const Var& a, const Var& b, std::size_t axis);
/// Stack rank-2 blocks along axis 0.
Var concat_rows(std::span<const Var> parts);
/// Half-open range [begin, end) along `axis`.
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);

Var sum(const Var& x);
Var dot(const Var& a, const Var& b);

double apply_unary(UnaryKind kind, double x);

// Raw kernels shared with the layers. Shapes are the caller's responsibility.
namespace kernels {
// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
}  // namespace kernels

}  // namespace trajnet
