#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "fluidfm/tensor/tensor.hpp"

namespace fluidfm::tensor {

/// Gradients per input tensor, positionally aligned with the op's inputs.
/// An undefined entry means zero.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

class GradMap {
 public:
  /// Accumulated gradient of the loss w.r.t. leaf t; zeros if none flowed.
  Tensor grad(const Tensor& t) const;
  bool has(const Tensor& t) const;
  void put(const void* id, Tensor g);

 private:
  std::unordered_map<const void*, Tensor> grads_;
};

/// Records one trainer thread's primitive applications in topological order.
/// A tape is single-threaded by construction; parallelism happens across
/// tapes (one per worker), never inside one.
class Tape {
 public:
  /// Node id of a tensor on this tape, or -1.
  int node_of(const Tensor& t) const;
  /// Registers t as a leaf if not yet present; returns its node id.
  int ensure_leaf(const Tensor& t);
  /// Records an op application. input_nodes may contain -1 for inputs whose
  /// gradient is not needed; backward still returns positional grads.
  int record(std::vector<int> input_nodes, BackwardFn backward, const Tensor& out);

  size_t num_nodes() const { return nodes_.size(); }

  /// Reverse accumulation from a scalar loss. Raises NonScalarLoss /
  /// DetachedNode per the contract. Returns gradients for every leaf.
  GradMap backward(const Tensor& loss) const;

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn backward;  // empty for leaves
    std::vector<int64_t> shape;
    const void* identity;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> index_;
};

/// The active tape of the current thread (nullptr when none). Ops record on
/// it automatically when any input requires a gradient.
Tape* active_tape();

/// RAII scope making a fresh tape active on this thread.
class TapeScope {
 public:
  TapeScope();
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape& tape() { return tape_; }

 private:
  Tape tape_;
  Tape* prev_;
};

/// Convenience: backward through the given tape (spec-level entry point).
inline GradMap backward(const Tape& tape, const Tensor& loss) { return tape.backward(loss); }

}  // namespace fluidfm::tensor
