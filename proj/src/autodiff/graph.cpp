#include "dsam/autodiff/graph.hpp"

namespace dsam::ad {

NonFiniteError::NonFiniteError(NodeId node, std::string op, bool in_backward)
    : std::runtime_error(std::string("non-finite ") + (in_backward ? "gradient" : "value") +
                         " at node " + std::to_string(node) + " (" + op + ")"),
      node_(node) {}

ParamId ParameterStore::add(std::string name, std::string group, Tensor init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!init.all_finite()) throw std::invalid_argument("non-finite initial value for " + name);
  values_.push_back(std::move(init));
  names_.push_back(std::move(name));
  groups_.push_back(std::move(group));
  return values_.size() - 1;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

ParamId ParameterStore::require(std::string_view name) const {
  auto id = find(name);
  if (!id) throw std::invalid_argument("unknown parameter: " + std::string(name));
  return *id;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError(nodes_.size(), "constant", false);
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError(nodes_.size(), "input", false);
  nodes_.push_back(Node{"input", std::move(value), {}, nullptr, true, std::nullopt});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(ParamId id) {
  if (!params_) throw std::logic_error("graph has no parameter store");
  if (id >= params_->size()) throw std::out_of_range("parameter id " + std::to_string(id));
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size());
  if (param_nodes_[id]) return Var(this, *param_nodes_[id]);
  nodes_.push_back(Node{"param", params_->value(id), {}, nullptr, true, id});
  param_nodes_[id] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(std::string_view name) {
  if (!params_) throw std::logic_error("graph has no parameter store");
  return param(params_->require(name));
}

Var Graph::record(std::string_view op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
  const NodeId id = nodes_.size();
  if (!value.all_finite()) throw NonFiniteError(id, std::string(op), false);
  bool needs = false;
  for (auto in : inputs) {
    if (in >= id) throw std::logic_error("node input refers forward in tape");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), std::move(inputs), std::move(backward), needs, std::nullopt});
  return Var(this, id);
}

std::optional<Var> Graph::memo(const std::string& key) const {
  const auto it = memo_.find(key);
  if (it == memo_.end()) return std::nullopt;
  return Var(const_cast<Graph*>(this), it->second);
}

Tensor& Graph::grad_buffer(NodeId id) {
  if (!grad_allocated_[id]) {
    grads_[id] = Tensor::zeros_like(nodes_[id].value);
    grad_allocated_[id] = true;
  }
  return grads_[id];
}

Gradients Graph::backward(Var loss) {
  if (&loss.graph() != this) throw std::invalid_argument("loss belongs to a different graph");
  const NodeId root = loss.id();
  if (nodes_[root].value.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                to_string(nodes_[root].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor{});
  grad_allocated_.assign(nodes_.size(), false);
  backward_order_.clear();
  grad_buffer(root).fill(1.0);

  for (NodeId k = root + 1; k-- > 0;) {
    auto& node = nodes_[k];
    if (!grad_allocated_[k] || !node.requires_grad) continue;
    backward_order_.push_back(k);
    if (!grads_[k].all_finite()) throw NonFiniteError(k, std::string(node.op), true);
    if (node.backward) node.backward(*this, k);
  }

  Gradients out;
  if (params_) {
    out.reserve(params_->size());
    for (ParamId p = 0; p < params_->size(); ++p) {
      if (p < param_nodes_.size() && param_nodes_[p] && grad_allocated_[*param_nodes_[p]]) {
        out.push_back(grads_[*param_nodes_[p]]);
      } else {
        out.push_back(Tensor::zeros_like(params_->value(p)));
      }
    }
  }
  return out;
}

Tensor Graph::grad(Var v) const {
  const NodeId id = v.id();
  if (id < grad_allocated_.size() && grad_allocated_[id]) return grads_[id];
  return Tensor::zeros_like(nodes_.at(id).value);
}

}  // namespace dsam::ad
