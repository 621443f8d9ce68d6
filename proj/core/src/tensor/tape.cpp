#include "fluidfm/tensor/tape.hpp"

#include "fluidfm/util/errors.hpp"

namespace fluidfm::tensor {

namespace {
thread_local Tape* t_active = nullptr;
}

Tape* active_tape() { return t_active; }

TapeScope::TapeScope() : prev_(t_active) { t_active = &tape_; }
TapeScope::~TapeScope() { t_active = prev_; }

Tensor GradMap::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

bool GradMap::has(const Tensor& t) const { return grads_.count(t.id()) > 0; }

void GradMap::put(const void* id, Tensor g) { grads_[id] = std::move(g); }

int Tape::node_of(const Tensor& t) const {
  auto it = index_.find(t.id());
  return it == index_.end() ? -1 : it->second;
}

int Tape::ensure_leaf(const Tensor& t) {
  auto it = index_.find(t.id());
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, nullptr, t.shape(), t.id()});
  index_.emplace(t.id(), id);
  return id;
}

int Tape::record(std::vector<int> input_nodes, BackwardFn backward, const Tensor& out) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(input_nodes), std::move(backward), out.shape(), out.id()});
  index_.emplace(out.id(), id);
  return id;
}

GradMap Tape::backward(const Tensor& loss) const {
  require(loss.size() == 1, Err::NonScalarLoss, "loss must be scalar-shaped");
  const int root = node_of(loss);
  require(root >= 0, Err::DetachedNode, "loss is not on this tape");

  // dense per-node accumulation buffers; empty = zero
  std::vector<std::vector<double>> accum(nodes_.size());
  accum[static_cast<size_t>(root)] = std::vector<double>(1, 1.0);

  GradMap result;
  for (int i = root; i >= 0; --i) {
    auto& gbuf = accum[static_cast<size_t>(i)];
    if (gbuf.empty()) continue;
    const Node& node = nodes_[static_cast<size_t>(i)];
    if (!node.backward) {
      // leaf: expose accumulated gradient
      result.put(node.identity, make_tensor(node.shape, std::move(gbuf)));
      continue;
    }
    const Tensor grad_out = make_tensor(node.shape, std::move(gbuf));
    gbuf.clear();
    std::vector<Tensor> gs = node.backward(grad_out);
    require(gs.size() == node.inputs.size(), Err::InvalidAttr,
            "backward returned wrong number of gradients");
    for (size_t j = 0; j < gs.size(); ++j) {
      const int in = node.inputs[j];
      if (in < 0 || !gs[j].defined()) continue;
      auto& dst = accum[static_cast<size_t>(in)];
      const auto& src = gs[j].data();
      if (dst.empty()) {
        dst = src;
      } else {
        require(dst.size() == src.size(), Err::ShapeMismatch, "gradient shape mismatch");
        for (size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
      }
    }
    // release intermediate gradient memory promptly
  }
  return result;
}

}  // namespace fluidfm::tensor
