#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dbkd {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major float64 array. Parameters live in Tensors owned by a Model;
// the Tape references them by pointer while a forward pass is alive.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);

  std::size_t size() const { return data.size(); }
  double item() const;

  void zero_grad();

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
  }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the lifetime of the Tape.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::span<const double> value() const;
  double item() const;
  std::size_t size() const { return value().size(); }
  Tensor to_tensor() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run recording of one forward pass. Nodes are appended in
// execution order, which is a topological order of the DAG, so backward is
// a single reverse sweep that visits each node exactly once.
class Tape {
 public:
  // Receives the tape and the id of the node whose grad is ready.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(Shape shape, std::vector<double> value);
  // Leaf bound to an external tensor; backward accumulates into t.grad when
  // t.requires_grad is set. The tensor must outlive backward().
  Var parameter(Tensor& t);

  // Appends an op node. Rejects non-finite values with NumericError.
  Var record(std::string_view op, Shape shape, std::vector<double> value,
             std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool needs_grad(Var v) const;
  std::string_view op(Var v) const;

  const Shape& shape_of(std::size_t id) const { return nodes_[id].shape; }
  const std::vector<double>& value_of(std::size_t id) const { return nodes_[id].value; }
  const std::vector<double>& grad_of(std::size_t id) const { return nodes_[id].grad; }
  std::size_t input_id(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  // Adds `g` into the gradient buffer of node `id` if it participates in backward.
  void accumulate(std::size_t id, std::span<const double> g);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Smallest |pre-activation| seen by any relu on this tape.
  double relu_margin() const { return relu_margin_; }
  void note_relu_input(double v);

 private:
  struct Node {
    std::string op;
    Shape shape;
    std::vector<double> value;
    std::vector<std::size_t> inputs;
    bool needs_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
    Tensor* leaf = nullptr;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  double relu_margin_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Differentiable primitives. All inputs must live on the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// a * factor + offset, elementwise.
Var affine(Var a, double factor, double offset);
Var square(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
// Clamps into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);

// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);

// Valid cross-correlation. x is [C x L] or [B x C x L]; kernels are
// [O x C/groups x K]; output length floor((L - K) / stride) + 1.
Var conv1d(Var x, Var kernels, std::size_t stride, std::size_t groups = 1);

// Adds bias[j] to every element whose axis-1 index is j. Works for
// [B x N] (dense) and [B x O x L] (conv) activations.
Var add_bias(Var x, Var bias);

Var reshape(Var a, Shape shape);
// Mean over the last axis: [B x C x L] -> [B x C].
Var mean_last_axis(Var a);
// Per-sample channel Gram matrix divided by length: [B x C x L] -> [B x C x C].
// Equals the Pearson correlation matrix when each channel is standardized.
Var channel_correlation(Var x);

// Row-wise softmax of z / temperature on a [B x M] input.
Var softmax_rows(Var logits, double temperature);
// out[b] = a[b, index[b]] for a [B x M] input.
Var pick(Var a, std::span<const int> index);

// Copies the value onto `tape` as a constant (stop-gradient).
Var detach(Var a, Tape& tape);

}  // namespace dbkd
