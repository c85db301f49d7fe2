#include "medpred/nd/graph.hpp"

#include <algorithm>

#include "medpred/error.hpp"

namespace medpred::nd {

std::size_t ParameterSet::add(std::string name, Tensor value, bool decay) {
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  p.decay = decay;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw Error(ErrorCode::Format, "no parameter named '" + std::string(name) + "'");
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

double ParameterSet::decayed_sum_squares() const {
  double s = 0.0;
  for (const auto& p : params_) {
    if (!p.decay) continue;
    for (double x : p.value.data()) s += x * x;
  }
  return s;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::assign_values(const ParameterSet& other) {
  if (other.size() != size()) throw Error(ErrorCode::ShapeMismatch, "parameter sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) {
    if (other[i].value.shape() != params_[i].value.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + params_[i].name + "' shape differs");
    }
    params_[i].value = other[i].value;
  }
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param == &p) return {this, i};
  }
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw Error(ErrorCode::NonFinite, "op produced non-finite values (node " +
                                          std::to_string(nodes_.size()) + ")");
  }
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor* Graph::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw Error(ErrorCode::Format, "loss belongs to another graph");
  if (nodes_[loss.id].value.size() != 1) {
    throw Error(ErrorCode::NotScalarLoss,
                "loss has shape " + shape_string(nodes_[loss.id].value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.param) n.param->grad = Tensor(n.param->value.shape());
    if (!n.grad.empty()) n.grad.fill(0.0);
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_sink(loss.id)->fill(1.0);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace medpred::nd
