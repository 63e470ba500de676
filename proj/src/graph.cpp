#include "vidseq/graph.hpp"

#include "vidseq/errors.hpp"

namespace vidseq {

void Graph::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward) {
  if (consumed_) throw ContractError("graph already ran backward; call reset() before recording");
  Node node;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.shared_impl());
  node.output = output.shared_impl();
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1 || !loss.shape().empty()) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (consumed_) throw ContractError("backward called twice without reset()");

  std::size_t end = nodes_.size();
  while (end > 0 && nodes_[end - 1].output.get() != loss.impl()) --end;
  if (end == 0) throw ContractError("loss was not produced by this graph");

  consumed_ = true;
  loss.impl()->grad[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) {
    auto& node = nodes_[i];
    node.backward(*node.output);
  }
}

void Graph::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace vidseq
