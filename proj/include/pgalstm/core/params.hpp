#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "pgalstm/core/rng.hpp"
#include "pgalstm/core/tape.hpp"
#include "pgalstm/core/tensor.hpp"

namespace pgalstm {

// Named collection of learnable tensors. Entries flagged `weight` are the
// ones that enter the L2 regularizer; biases and scalar offsets are not.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool weight = false;
  };

  std::size_t add(std::string name, Tensor value, bool weight) {
    if (find(name)) throw Error("duplicate parameter name: " + name);
    entries_.push_back({std::move(name), std::move(value), weight});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Entry& entry(std::size_t i) { return entries_.at(i); }
  const std::vector<Entry>& entries() const { return entries_; }

  const Entry* find(std::string_view name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name == name) return i;
    }
    throw Error("unknown parameter: " + std::string(name));
  }

  const Tensor& at(std::string_view name) const { return entries_[index_of(name)].value; }
  Tensor& at(std::string_view name) { return entries_[index_of(name)].value; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  bool operator==(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.weight != b.weight || !bit_equal(a.value, b.value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

// A ParamSet placed on a tape: one Var per entry, in entry order.
class BoundParams {
 public:
  BoundParams(const ParamSet& params, std::vector<Var> vars)
      : params_(&params), vars_(std::move(vars)) {}

  Var operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }
  Var at(std::size_t i) const { return vars_.at(i); }
  std::size_t size() const { return vars_.size(); }
  const ParamSet& params() const { return *params_; }

  // One gradient tensor per entry; zeros for entries the loss ignores.
  std::vector<Tensor> gradients(const Gradients& g) const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (auto v : vars_) out.push_back(g.of(v));
    return out;
  }

 private:
  const ParamSet* params_;
  std::vector<Var> vars_;
};

// Trainable parameters become leaves; frozen ones become constants.
inline BoundParams bind(Tape& tape, const ParamSet& params, bool trainable = true) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& e : params.entries()) {
    vars.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
  }
  return BoundParams(params, std::move(vars));
}

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(Shape{fan_in, fan_out});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return w;
}

}  // namespace pgalstm
