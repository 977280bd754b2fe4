#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgalstm/core/tensor.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Reverse-mode differentiation over a linear record of primitive operations.
//
// Every primitive evaluates eagerly, appends a node holding its value and
// input bindings, and checks the result for NaN/Inf. backward() walks the
// record in reverse and applies each primitive's adjoint. Gradients only
// flow into nodes that descend from a leaf created with leaf() (constants
// are skipped entirely).

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Hadamard,
  MatMul,
  Concat,
  SliceCols,
  Sigmoid,
  Tanh,
  Relu,
  Elu,
  Square,
  Sqrt,
  Scale,
  Sum,
  Mean,
  Map,
};

inline constexpr std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Hadamard: return "hadamard";
    case Op::MatMul: return "matmul";
    case Op::Concat: return "concat";
    case Op::SliceCols: return "slice_cols";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Elu: return "elu";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Scale: return "scale";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Map: return "map";
  }
  return "unknown";
}

// Leaves and constants have nothing to propagate; every other op must have
// an adjoint in Tape::backward. The switch has no default so -Wswitch flags
// a new op that was not given one.
inline constexpr bool has_adjoint(Op op) {
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      return true;
    case Op::Add:
    case Op::Sub:
    case Op::Hadamard:
    case Op::MatMul:
    case Op::Concat:
    case Op::SliceCols:
    case Op::Sigmoid:
    case Op::Tanh:
    case Op::Relu:
    case Op::Elu:
    case Op::Square:
    case Op::Sqrt:
    case Op::Scale:
    case Op::Sum:
    case Op::Mean:
    case Op::Map:
      return true;
  }
  return false;
}

// Elementwise function with its derivative, used for closed-form physical
// relations that need to sit on the tape.
struct ElementwiseFn {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<Tensor> grads, std::vector<bool> present, std::vector<Shape> shapes)
      : grads_(std::move(grads)), present_(std::move(present)), shapes_(std::move(shapes)) {}

  bool has(Var v) const { return v.id < present_.size() && present_[v.id]; }

  // Zero tensor when the loss does not depend on v.
  Tensor of(Var v) const {
    if (has(v)) return grads_[v.id];
    return Tensor(shapes_.at(v.id), 0.0);
  }

 private:
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
  std::vector<Shape> shapes_;
};

class Tape {
 public:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::shared_ptr<const ElementwiseFn> fn;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push(Op::Leaf, {}, std::move(value), true); }
  Var constant(Tensor value) { return push(Op::Constant, {}, std::move(value), false); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }

  // Records a primitive: evaluates it, checks finiteness, appends the node.
  Var record(Op op, std::vector<std::size_t> inputs, double scalar = 0.0,
             std::size_t begin = 0, std::size_t end = 0,
             std::shared_ptr<const ElementwiseFn> fn = nullptr) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.scalar = scalar;
    n.begin = begin;
    n.end = end;
    n.fn = std::move(fn);
    n.value = evaluate(n, [this](std::size_t i) -> const Tensor& { return nodes_[i].value; });
    if (!n.value.all_finite()) {
      throw NumericalError("non-finite result in " + std::string(op_name(op)));
    }
    for (auto i : n.inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  Gradients backward(Var loss) const;

  // Recomputes every node from the recorded leaves and counts nodes whose
  // value differs bitwise from the one stored during the forward pass.
  std::size_t replay_mismatches() const {
    std::vector<Tensor> replayed;
    replayed.reserve(nodes_.size());
    std::size_t mismatches = 0;
    for (const auto& n : nodes_) {
      if (n.op == Op::Leaf || n.op == Op::Constant) {
        replayed.push_back(n.value);
        continue;
      }
      replayed.push_back(evaluate(n, [&](std::size_t i) -> const Tensor& { return replayed[i]; }));
      if (!bit_equal(replayed.back(), n.value)) ++mismatches;
    }
    return mismatches;
  }

  // Ids of recorded nodes whose op has no adjoint rule.
  std::vector<std::size_t> audit() const {
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!has_adjoint(nodes_[i].op)) missing.push_back(i);
    }
    return missing;
  }

 private:
  Var push(Op op, std::vector<std::size_t> inputs, Tensor value, bool requires_grad) {
    if (!value.all_finite()) {
      throw NumericalError("non-finite value in " + std::string(op_name(op)));
    }
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  template <class Get>
  static Tensor evaluate(const Node& n, Get&& in);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

namespace detail {

// b broadcasts onto a when it has the same shape, is a single row matching
// a's column count, or is a scalar.
enum class Broadcast { Same, Row, Scalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.size() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols() && b.size() == a.cols()) return Broadcast::Row;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) +
                   " onto " + shape_string(a.shape()));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double elu(double x, double alpha) { return x > 0 ? x : alpha * std::expm1(x); }

template <class F>
Tensor map_values(const Tensor& a, F&& f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

inline void accumulate(std::vector<Tensor>& grads, std::vector<bool>& present,
                       std::size_t id, const Tensor& g) {
  if (!present[id]) {
    grads[id] = g;
    present[id] = true;
    return;
  }
  auto& dst = grads[id];
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

template <class Get>
Tensor Tape::evaluate(const Node& n, Get&& in) {
  using detail::Broadcast;
  switch (n.op) {
    case Op::Leaf:
    case Op::Constant:
      return n.value;
    case Op::Add:
    case Op::Sub: {
      const Tensor& a = in(n.inputs[0]);
      const Tensor& b = in(n.inputs[1]);
      const auto kind = detail::broadcast_kind(a, b, op_name(n.op));
      const double sign = n.op == Op::Add ? 1.0 : -1.0;
      Tensor out(a.shape());
      const std::size_t cols = a.cols();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bv = kind == Broadcast::Same ? b[i] : kind == Broadcast::Row ? b[i % cols] : b[0];
        out[i] = a[i] + sign * bv;
      }
      return out;
    }
    case Op::Hadamard: {
      const Tensor& a = in(n.inputs[0]);
      const Tensor& b = in(n.inputs[1]);
      if (a.shape() != b.shape()) {
        throw ShapeError("hadamard: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
      }
      Tensor out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
      return out;
    }
    case Op::MatMul: {
      const Tensor& a = in(n.inputs[0]);
      const Tensor& b = in(n.inputs[1]);
      if (a.rank() == 0 || b.rank() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
      }
      const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
      Tensor out(Shape{r, c});
      for (std::size_t i = 0; i < r; ++i) {
        double* row = out.data() + i * c;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          if (av == 0.0) continue;
          const double* brow = b.data() + p * c;
          for (std::size_t j = 0; j < c; ++j) row[j] += av * brow[j];
        }
      }
      return out;
    }
    case Op::Concat: {
      const std::size_t rows = in(n.inputs[0]).rows();
      std::size_t total = 0;
      bool all_flat = true;
      for (auto i : n.inputs) {
        const Tensor& t = in(i);
        if (t.rows() != rows) {
          throw ShapeError("concat: row mismatch " + shape_string(in(n.inputs[0]).shape()) +
                           " vs " + shape_string(t.shape()));
        }
        total += t.cols();
        all_flat = all_flat && t.rank() <= 1;
      }
      Tensor out(all_flat ? Shape{total} : Shape{rows, total});
      std::size_t offset = 0;
      for (auto i : n.inputs) {
        const Tensor& t = in(i);
        const std::size_t c = t.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy_n(t.data() + r * c, c, out.data() + r * total + offset);
        }
        offset += c;
      }
      return out;
    }
    case Op::SliceCols: {
      const Tensor& a = in(n.inputs[0]);
      if (n.begin >= n.end || n.end > a.cols()) {
        throw ShapeError("slice_cols: range out of bounds for " + shape_string(a.shape()));
      }
      const std::size_t rows = a.rows(), width = n.end - n.begin;
      Tensor out(a.rank() <= 1 ? Shape{width} : Shape{rows, width});
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.data() + r * a.cols() + n.begin, width, out.data() + r * width);
      }
      return out;
    }
    case Op::Sigmoid:
      return detail::map_values(in(n.inputs[0]), detail::sigmoid);
    case Op::Tanh:
      return detail::map_values(in(n.inputs[0]), [](double x) { return std::tanh(x); });
    case Op::Relu:
      return detail::map_values(in(n.inputs[0]), [](double x) { return x > 0 ? x : 0.0; });
    case Op::Elu:
      return detail::map_values(in(n.inputs[0]), [&](double x) { return detail::elu(x, n.scalar); });
    case Op::Square:
      return detail::map_values(in(n.inputs[0]), [](double x) { return x * x; });
    case Op::Sqrt: {
      const Tensor& a = in(n.inputs[0]);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0) throw NumericalError("sqrt of negative value");
      }
      return detail::map_values(a, [](double x) { return std::sqrt(x); });
    }
    case Op::Scale:
      return detail::map_values(in(n.inputs[0]), [&](double x) { return n.scalar * x; });
    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(n.inputs[0]);
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
      if (n.op == Op::Mean) s /= static_cast<double>(a.size());
      return Tensor::scalar(s);
    }
    case Op::Map:
      return detail::map_values(in(n.inputs[0]), n.fn->f);
  }
  throw Error("unhandled op in evaluate");
}

inline Gradients Tape::backward(Var loss) const {
  if (nodes_.empty()) throw Error("backward: tape is empty");
  if (loss.tape != this) throw Error("backward: loss recorded on a different tape");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss is not a scalar, shape " + shape_string(value(loss).shape()));
  }
  using detail::accumulate;
  using detail::Broadcast;

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> present(nodes_.size(), false);
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.value.shape());

  grads[loss.id] = Tensor(value(loss).shape(), 1.0);
  present[loss.id] = true;

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!present[id] || !n.requires_grad) continue;
    const Tensor& g = grads[id];
    const auto needs = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
    const auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::Add:
      case Op::Sub: {
        if (needs(0)) accumulate(grads, present, n.inputs[0], g);
        if (needs(1)) {
          const Tensor& b = in(1);
          const auto kind = detail::broadcast_kind(in(0), b, op_name(n.op));
          const double sign = n.op == Op::Add ? 1.0 : -1.0;
          Tensor gb(b.shape(), 0.0);
          const std::size_t cols = g.cols();
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t j = kind == Broadcast::Same ? i : kind == Broadcast::Row ? i % cols : 0;
            gb[j] += sign * g[i];
          }
          accumulate(grads, present, n.inputs[1], gb);
        }
        break;
      }
      case Op::Hadamard: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (needs(0)) {
          Tensor ga(a.shape());
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b[i];
          accumulate(grads, present, n.inputs[0], ga);
        }
        if (needs(1)) {
          Tensor gb(b.shape());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a[i];
          accumulate(grads, present, n.inputs[1], gb);
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
        if (needs(0)) {
          Tensor ga(a.shape(), 0.0);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * b[p * c + j];
              ga[i * k + p] = s;
            }
          }
          accumulate(grads, present, n.inputs[0], ga);
        }
        if (needs(1)) {
          Tensor gb(b.shape(), 0.0);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = a[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += av * g[i * c + j];
            }
          }
          accumulate(grads, present, n.inputs[1], gb);
        }
        break;
      }
      case Op::Concat: {
        const std::size_t rows = g.rows(), total = g.cols();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& t = in(k);
          const std::size_t c = t.cols();
          if (needs(k)) {
            Tensor gt(t.shape());
            for (std::size_t row = 0; row < rows; ++row) {
              std::copy_n(g.data() + row * total + offset, c, gt.data() + row * c);
            }
            accumulate(grads, present, n.inputs[k], gt);
          }
          offset += c;
        }
        break;
      }
      case Op::SliceCols: {
        const Tensor& a = in(0);
        Tensor ga(a.shape(), 0.0);
        const std::size_t width = n.end - n.begin;
        for (std::size_t row = 0; row < a.rows(); ++row) {
          std::copy_n(g.data() + row * width, width, ga.data() + row * a.cols() + n.begin);
        }
        accumulate(grads, present, n.inputs[0], ga);
        break;
      }
      case Op::Sigmoid:
      case Op::Tanh:
      case Op::Relu:
      case Op::Elu:
      case Op::Square:
      case Op::Sqrt:
      case Op::Scale:
      case Op::Map: {
        const Tensor& x = in(0);
        const Tensor& y = n.value;
        Tensor gx(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
          double d = 0.0;
          switch (n.op) {
            case Op::Sigmoid: d = y[i] * (1.0 - y[i]); break;
            case Op::Tanh: d = 1.0 - y[i] * y[i]; break;
            case Op::Relu: d = x[i] > 0 ? 1.0 : 0.0; break;
            case Op::Elu: d = x[i] > 0 ? 1.0 : y[i] + n.scalar; break;
            case Op::Square: d = 2.0 * x[i]; break;
            // Subgradient 0 at the origin so ||W|| at W = 0 stays finite.
            case Op::Sqrt: d = y[i] > 0 ? 0.5 / y[i] : 0.0; break;
            case Op::Scale: d = n.scalar; break;
            case Op::Map: d = n.fn->df(x[i]); break;
            default: break;
          }
          gx[i] = g[i] * d;
        }
        if (!gx.all_finite()) {
          throw NumericalError("non-finite gradient in " + std::string(op_name(n.op)));
        }
        accumulate(grads, present, n.inputs[0], gx);
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        const Tensor& x = in(0);
        const double d = n.op == Op::Mean ? g[0] / static_cast<double>(x.size()) : g[0];
        accumulate(grads, present, n.inputs[0], Tensor(x.shape(), d));
        break;
      }
    }
  }
  return Gradients(std::move(grads), std::move(present), std::move(shapes));
}

// ---- primitive set -------------------------------------------------------

inline Var add(Var a, Var b) { return a.tape->record(Op::Add, {a.id, b.id}); }
inline Var sub(Var a, Var b) { return a.tape->record(Op::Sub, {a.id, b.id}); }
inline Var hadamard(Var a, Var b) { return a.tape->record(Op::Hadamard, {a.id, b.id}); }
inline Var matmul(Var a, Var b) { return a.tape->record(Op::MatMul, {a.id, b.id}); }

inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const auto& p : parts) ids.push_back(p.id);
  return parts.front().tape->record(Op::Concat, std::move(ids));
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  return a.tape->record(Op::SliceCols, {a.id}, 0.0, begin, end);
}

inline Var sigmoid(Var a) { return a.tape->record(Op::Sigmoid, {a.id}); }
inline Var tanh(Var a) { return a.tape->record(Op::Tanh, {a.id}); }
inline Var relu(Var a) { return a.tape->record(Op::Relu, {a.id}); }
inline Var elu(Var a, double alpha = 1.0) { return a.tape->record(Op::Elu, {a.id}, alpha); }
inline Var square(Var a) { return a.tape->record(Op::Square, {a.id}); }
inline Var sqrt(Var a) { return a.tape->record(Op::Sqrt, {a.id}); }
inline Var scale(Var a, double c) { return a.tape->record(Op::Scale, {a.id}, c); }
inline Var sum(Var a) { return a.tape->record(Op::Sum, {a.id}); }
inline Var mean(Var a) { return a.tape->record(Op::Mean, {a.id}); }

inline Var map(Var a, std::shared_ptr<const ElementwiseFn> fn) {
  return a.tape->record(Op::Map, {a.id}, 0.0, 0, 0, std::move(fn));
}

}  // namespace pgalstm
