#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dsam/autodiff/tensor.hpp"

namespace dsam::ad {

using NodeId = std::size_t;
using ParamId = std::size_t;

// Raised when a forward value or a backward gradient contains NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(NodeId node, std::string op, bool in_backward);
  NodeId node() const { return node_; }

 private:
  NodeId node_;
};

// Named trainable tensors. Each parameter belongs to a group used for
// per-group learning rates.
class ParameterStore {
 public:
  ParamId add(std::string name, std::string group, Tensor init);

  std::size_t size() const { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_.at(id); }
  Tensor& value(ParamId id) { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  const std::string& group(ParamId id) const { return groups_.at(id); }
  std::optional<ParamId> find(std::string_view name) const;
  ParamId require(std::string_view name) const;
  std::size_t element_count() const;

 private:
  std::vector<Tensor> values_;
  std::vector<std::string> names_;
  std::vector<std::string> groups_;
};

// Gradients indexed by ParamId; parameters never touched by the graph hold zeros.
using Gradients = std::vector<Tensor>;

class Graph;

// Handle to a node in a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const { return id_; }
  Graph& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

// Tape of eagerly evaluated operations. Values are computed when a node is
// recorded; backward() walks the tape in exact reverse recording order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  explicit Graph(const ParameterStore* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf that receives a gradient but is not a stored parameter.
  Var input(Tensor value);
  // Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(ParamId id);
  Var param(std::string_view name);

  Var record(std::string_view op, Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

  // Reverse pass from a scalar node. Returns d(loss)/d(param) for every
  // parameter in the store.
  Gradients backward(Var loss);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  // Gradient of the last backward() with respect to any node (zeros if unreached).
  Tensor grad(Var v) const;

  // Gradient buffer accessors used by backward functions.
  const Tensor& upstream(NodeId id) const { return grads_.at(id); }
  Tensor& grad_buffer(NodeId id);

  // Per-graph memo of derived nodes (e.g. values shared across utterances of
  // a batch); reusing a node accumulates its gradient from every consumer.
  std::optional<Var> memo(const std::string& key) const;
  void set_memo(const std::string& key, Var v) { memo_[key] = v.id(); }

  std::size_t node_count() const { return nodes_.size(); }
  const ParameterStore* parameters() const { return params_; }
  // Visit order of the most recent backward(), for inspection.
  const std::vector<NodeId>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::optional<ParamId> param;
  };

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> grad_allocated_;
  std::vector<std::optional<NodeId>> param_nodes_;
  std::vector<NodeId> backward_order_;
  std::map<std::string, NodeId, std::less<>> memo_;
};

}  // namespace dsam::ad
