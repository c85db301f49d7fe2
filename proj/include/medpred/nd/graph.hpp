#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "medpred/nd/tensor.hpp"

namespace medpred::nd {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;  // included in the L2 penalty
};

// Ordered collection of named parameters. Handles are indices, so a set can be
// copied (for best-epoch snapshots) without invalidating anything.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, bool decay);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t index_of(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // Sum of squared entries over decayed parameters.
  double decayed_sum_squares() const;
  std::size_t scalar_count() const;

  // Copies values only; both sets must have identical layout.
  void assign_values(const ParameterSet& other);

 private:
  std::vector<Parameter> params_;
};

class Graph;

// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

using BackwardFn = std::function<void(Graph&, std::size_t self)>;

// Tape for reverse-mode differentiation. Nodes are appended in evaluation order,
// which is a topological order, and the backward pass walks it in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to an external parameter; binding the same parameter twice
  // returns the same node.
  Var param(Parameter& p);

  // Appends an op output. Throws Error(NonFinite) if `value` holds NaN/Inf.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient accumulator for node `id`, allocated on first use; nullptr when
  // the node does not lead back to any parameter.
  Tensor* grad_sink(std::size_t id);

  // Overwrites the grad of every bound parameter with d(loss)/d(param).
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: value() references survive appends
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace medpred::nd
