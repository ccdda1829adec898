// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "msmpc/tensor.hpp"

namespace msmpc::ad {

class Tape;

/// Handle to a tensor-valued node recorded on a tape.
struct Value {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& tensor() const;
  const std::vector<std::size_t>& shape() const;
  std::size_t numel() const { return tensor().numel(); }
};

/// Gradients of one backward pass, indexed by node id. Untouched nodes
/// (including untouched leaves) hold zero tensors of the node's shape.
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor> g) : grads_(std::move(g)) {}
  const Tensor& at(Value v) const { return grads_.at(v.id); }
  const Tensor& at(std::size_t id) const { return grads_.at(id); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<Tensor> grads_;
};

/// Records primitive operations in execution order; backward replays them in
/// exact reverse order. Single-owner during recording; independent tapes on
/// independent threads are safe.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& grads)>;

  /// A differentiable input (parameter, feature matrix, constant).
  Value leaf(Tensor value);

  Value record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  /// Gradients of a scalar loss w.r.t. every node on the tape.
  Gradients backward(Value loss) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;  // empty for leaves
  };
  std::vector<Node> nodes_;
};

// ---- primitive operations (each records one node on the owning tape) ----

Value add(Value a, Value b);                    // elementwise
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value matmul(Value a, Value b);                 // [m,k] x [k,n] -> [m,n]
Value concat(const std::vector<Value>& xs, std::size_t axis);
Value slice(Value x, std::size_t axis, std::size_t start, std::size_t len);
Value reshape(Value x, std::vector<std::size_t> shape);

Value reduce_sum(Value x);                      // all elements -> scalar
Value reduce_mean(Value x);
Value reduce_sum(Value x, std::size_t axis);    // rank-2, axis 0 or 1
Value reduce_mean(Value x, std::size_t axis);
Value reduce_max(Value x, std::size_t axis);    // ties: first attaining index
Value reduce_min(Value x, std::size_t axis);

Value sigmoid(Value x);
Value tanh(Value x);
Value relu(Value x);                            // gradient at 0 is 0
Value selu(Value x);
Value log(Value x);
Value abs(Value x);                             // gradient at 0 is 0
Value clamp(Value x, double lo, double hi);     // gradient passes iff lo < x < hi
Value affine(Value x, double scale, double shift);  // scale*x + shift

Value stack(const std::vector<Value>& rows);    // k vectors [d] -> [k,d]

/// out[i,:] = x[idx[i],:]; idx entry -1 yields a zero row (no gradient flow).
Value gather_rows(Value x, std::vector<long> idx);

/// [n,u] + [u], the row vector added to every row.
Value add_rowvec(Value x, Value b);

/// Row segments [offsets[s], offsets[s+1]) of x reduce to out[s,:].
/// Empty segments: zeros for sum/mean, fault for max/min (no identity).
Value segment_sum(Value x, std::vector<std::size_t> offsets);
Value segment_mean(Value x, std::vector<std::size_t> offsets);
Value segment_max(Value x, std::vector<std::size_t> offsets);
Value segment_min(Value x, std::vector<std::size_t> offsets);

// ---- finite-difference oracle ----

/// Builds f on a fresh tape at `points`, compares backward gradients against
/// central differences component-wise. Relative error denominator is
/// max(|analytic|, |numeric|, 1e-8). Faults if f is non-deterministic across
/// the probe evaluations or does not produce a scalar.
double gradient_check(
    const std::function<Value(Tape&, const std::vector<Value>&)>& f,
    const std::vector<Tensor>& points, double epsilon);

/// Single-input convenience.
double gradient_check(const std::function<Value(Tape&, Value)>& f,
                      const Tensor& point, double epsilon);

}  // namespace msmpc::ad
