#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vidseq/tensor.hpp"

namespace vidseq {

/// Define-by-run tape. Operations append a node whenever any input requires
/// grad; nodes are therefore stored in topological order by construction.
/// One Graph belongs to one forward/backward pass on one thread.
class Graph {
 public:
  // Receives the finished output (values and accumulated grad).
  using BackwardFn = std::function<void(const TensorImpl& output)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward);

  /// Reverse accumulation from a scalar loss into every requires_grad
  /// ancestor. May be called once per recording; reset() re-arms the tape.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace vidseq
