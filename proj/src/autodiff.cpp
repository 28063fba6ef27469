#include "dnp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dnp/kernels.hpp"

namespace dnp::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::neg: return "neg";
    case OpKind::exp: return "exp";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::ssp: return "ssp";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::matmul: return "matmul";
    case OpKind::segment_sum: return "segment_sum";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "?";
}

IndexList make_index(std::vector<std::size_t> ids) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(ids));
}

const Array& Value::data() const { return tape_->node(id_).value; }
bool Value::requires_grad() const { return tape_->node(id_).requires_grad; }
OpKind Value::op() const { return tape_->node(id_).op; }

double Value::item() const {
  const Array& d = data();
  if (d.size() != 1) throw ShapeError("item() on array of shape " + d.shape_str());
  return d.data[0];
}

namespace {

bool is_binary(OpKind k) {
  return k == OpKind::add || k == OpKind::sub || k == OpKind::mul || k == OpKind::div;
}

bool is_unary_elementwise(OpKind k) {
  return k == OpKind::neg || k == OpKind::exp || k == OpKind::square ||
         k == OpKind::sqrt || k == OpKind::ssp || k == OpKind::sigmoid;
}

// Output shape of a broadcasting binary op.
std::pair<std::size_t, std::size_t> broadcast_shape(const Array& a, const Array& b,
                                                    OpKind k) {
  if (a.same_shape(b)) return {a.rows, a.cols};
  if (a.is_scalar()) return {b.rows, b.cols};
  if (b.is_scalar()) return {a.rows, a.cols};
  throw ShapeError(std::string(op_name(k)) + ": shapes " + a.shape_str() + " and " +
                   b.shape_str() + " are not compatible");
}

template <class F>
void binary_apply(const Array& a, const Array& b, Array& out, F f) {
  const std::size_t n = out.size();
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* po = out.data.data();
  const std::size_t sa = a.size() == 1 && n != 1 ? 0 : 1;
  const std::size_t sb = b.size() == 1 && n != 1 ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i * sa], pb[i * sb]);
}

template <class F>
void unary_apply(const Array& a, Array& out, F f) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data[i] = f(a.data[i]);
}

}  // namespace

Value Tape::leaf(Array data, bool requires_grad) {
  Node n;
  n.op = OpKind::leaf;
  n.value = std::move(data);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::set_leaf(Value leaf, Array data) {
  Node& n = nodes_[static_cast<std::size_t>(leaf.id())];
  if (n.op != OpKind::leaf) throw Error("set_leaf on a non-leaf value");
  if (!n.value.same_shape(data)) {
    throw ShapeError("set_leaf: shape " + data.shape_str() + " != " + n.value.shape_str());
  }
  n.value = std::move(data);
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.op != OpKind::leaf) evaluate(n);
  }
}

Value Tape::record(OpKind op, std::vector<int> inputs, std::size_t attr0,
                   std::size_t attr1, IndexList index) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.attr0 = attr0;
  n.attr1 = attr1;
  n.index = std::move(index);
  for (int id : n.inputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw Error("record: input id out of range");
    }
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  evaluate(n);
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::evaluate(Node& n) const {
  auto in = [&](std::size_t k) -> const Array& {
    return nodes_[static_cast<std::size_t>(n.inputs[k])].value;
  };
  Array& out = n.value;
  switch (n.op) {
    case OpKind::leaf:
      return;
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::div: {
      const Array& a = in(0);
      const Array& b = in(1);
      const auto [r, c] = broadcast_shape(a, b, n.op);
      out = Array(r, c);
      switch (n.op) {
        case OpKind::add: binary_apply(a, b, out, [](double x, double y) { return x + y; }); break;
        case OpKind::sub: binary_apply(a, b, out, [](double x, double y) { return x - y; }); break;
        case OpKind::mul: binary_apply(a, b, out, [](double x, double y) { return x * y; }); break;
        default:
          for (double v : b.data) {
            if (v == 0.0) throw NumericError("div: divisor contains an exact zero", 1);
          }
          binary_apply(a, b, out, [](double x, double y) { return x / y; });
      }
      return;
    }
    case OpKind::neg:
    case OpKind::exp:
    case OpKind::square:
    case OpKind::sqrt:
    case OpKind::ssp:
    case OpKind::sigmoid: {
      const Array& a = in(0);
      out = Array(a.rows, a.cols);
      switch (n.op) {
        case OpKind::neg: unary_apply(a, out, [](double x) { return -x; }); break;
        case OpKind::exp: unary_apply(a, out, [](double x) { return std::exp(x); }); break;
        case OpKind::square: unary_apply(a, out, [](double x) { return x * x; }); break;
        case OpKind::sqrt: unary_apply(a, out, [](double x) { return std::sqrt(x); }); break;
        case OpKind::ssp: unary_apply(a, out, kernels::shifted_softplus); break;
        default: unary_apply(a, out, kernels::sigmoid);
      }
      return;
    }
    case OpKind::matmul:
      kernels::matmul(in(0), n.attr0 & 1u, in(1), n.attr0 & 2u, out);
      return;
    case OpKind::segment_sum:
      kernels::segment_sum(in(0), *n.index, n.attr0, out);
      return;
    case OpKind::gather_rows:
      kernels::gather_rows(in(0), *n.index, out);
      return;
    case OpKind::concat_cols: {
      const std::size_t rows = in(0).rows;
      std::size_t cols = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).rows != rows) {
          throw ShapeError("concat_cols: row counts differ (" + in(0).shape_str() + " vs " +
                           in(k).shape_str() + ")");
        }
        cols += in(k).cols;
      }
      out = Array(rows, cols);
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Array& p = in(k);
        for (std::size_t r = 0; r < rows; ++r) {
          std::copy(p.row(r).begin(), p.row(r).end(), out.data.begin() + r * cols + off);
        }
        off += p.cols;
      }
      return;
    }
    case OpKind::slice_cols: {
      const Array& a = in(0);
      const std::size_t b = n.attr0, e = n.attr1;
      if (b > e || e > a.cols) {
        throw IndexError("slice_cols [" + std::to_string(b) + ", " + std::to_string(e) +
                         ") out of range for " + a.shape_str());
      }
      out = Array(a.rows, e - b);
      for (std::size_t r = 0; r < a.rows; ++r) {
        std::copy(a.row(r).begin() + b, a.row(r).begin() + e, out.row(r).begin());
      }
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Array& a = in(0);
      double s = 0.0;
      for (double v : a.data) s += v;
      if (n.op == OpKind::mean) {
        if (a.empty()) throw ShapeError("mean of an empty array");
        s /= static_cast<double>(a.size());
      }
      out = Array::scalar(s);
      return;
    }
  }
}

namespace {

Tape* common_tape(Value a, Value b) {
  if (!a.valid() || !b.valid()) throw Error("operation on an invalid Value");
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

}  // namespace

Value elementwise(OpKind kind, Value a, std::optional<Value> b) {
  if (is_binary(kind)) {
    if (!b) throw Error(std::string(op_name(kind)) + " needs two operands");
    Tape* t = common_tape(a, *b);
    return t->record(kind, {a.id(), b->id()});
  }
  if (!is_unary_elementwise(kind)) {
    throw Error(std::string(op_name(kind)) + " is not an elementwise operation");
  }
  if (!a.valid()) throw Error("operation on an invalid Value");
  return a.tape()->record(kind, {a.id()});
}

Value operator+(Value a, Value b) { return elementwise(OpKind::add, a, b); }
Value operator-(Value a, Value b) { return elementwise(OpKind::sub, a, b); }
Value operator*(Value a, Value b) { return elementwise(OpKind::mul, a, b); }
Value operator/(Value a, Value b) { return elementwise(OpKind::div, a, b); }
Value operator-(Value a) { return elementwise(OpKind::neg, a); }
Value operator*(Value a, double s) { return a * a.tape()->scalar(s); }
Value operator*(double s, Value a) { return a.tape()->scalar(s) * a; }
Value operator+(Value a, double s) { return a + a.tape()->scalar(s); }
Value exp(Value a) { return elementwise(OpKind::exp, a); }
Value square(Value a) { return elementwise(OpKind::square, a); }
Value sqrt(Value a) { return elementwise(OpKind::sqrt, a); }
Value ssp(Value a) { return elementwise(OpKind::ssp, a); }
Value sigmoid(Value a) { return elementwise(OpKind::sigmoid, a); }

Value matmul(Value a, Value b, bool trans_a, bool trans_b) {
  Tape* t = common_tape(a, b);
  const std::size_t flags = (trans_a ? 1u : 0u) | (trans_b ? 2u : 0u);
  return t->record(OpKind::matmul, {a.id(), b.id()}, flags);
}

Value segment_sum(Value values, IndexList segment_ids, std::size_t n_segments) {
  return values.tape()->record(OpKind::segment_sum, {values.id()}, n_segments, 0,
                               std::move(segment_ids));
}

Value gather_rows(Value values, IndexList ids) {
  return values.tape()->record(OpKind::gather_rows, {values.id()}, 0, 0, std::move(ids));
}

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Value& p : parts) {
    common_tape(parts.front(), p);
    ids.push_back(p.id());
  }
  return parts.front().tape()->record(OpKind::concat_cols, std::move(ids));
}

Value concat_cols(std::initializer_list<Value> parts) {
  return concat_cols(std::span<const Value>(parts.begin(), parts.size()));
}

Value slice_cols(Value a, std::size_t begin, std::size_t end) {
  return a.tape()->record(OpKind::slice_cols, {a.id()}, begin, end);
}

Value sum(Value a) { return a.tape()->record(OpKind::sum, {a.id()}); }
Value mean(Value a) { return a.tape()->record(OpKind::mean, {a.id()}); }

namespace {

// Marks the nodes through which the output depends on some entry of wrt.
std::vector<char> relevant_nodes(const Tape& tape, int output, std::span<const Value> wrt) {
  std::vector<char> rel(static_cast<std::size_t>(output) + 1, 0);
  for (const Value& w : wrt) {
    if (w.tape() != &tape) throw Error("backward: wrt value lives on a different tape");
    if (w.id() <= output) rel[static_cast<std::size_t>(w.id())] = 1;
  }
  for (int id = 0; id <= output; ++id) {
    const auto& n = tape.node(id);
    if (rel[static_cast<std::size_t>(id)] || n.op == OpKind::leaf || !n.requires_grad) continue;
    for (int in : n.inputs) {
      if (rel[static_cast<std::size_t>(in)]) {
        rel[static_cast<std::size_t>(id)] = 1;
        break;
      }
    }
  }
  return rel;
}

void check_output(Value output) {
  if (!output.valid()) throw Error("backward on an invalid Value");
  if (output.data().size() != 1) {
    throw ShapeError("backward needs a single-element output, got " + output.data().shape_str());
  }
}

// ---- first-order rules on raw arrays ----

using RawAdjoints = std::vector<std::optional<Array>>;

void accumulate(RawAdjoints& adj, int id, const Array& contrib) {
  auto& a = adj[static_cast<std::size_t>(id)];
  if (!a) {
    a = contrib;
    return;
  }
  for (std::size_t i = 0; i < a->size(); ++i) a->data[i] += contrib.data[i];
}

// Adds per-element contributions into an operand adjoint, reducing over the
// broadcast when the operand is 1x1 and the output is not.
template <class F>
void accumulate_elementwise(RawAdjoints& adj, int id, const Array& operand,
                            std::size_t n_out, F contrib) {
  if (operand.size() == 1 && n_out != 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_out; ++i) s += contrib(i);
    accumulate(adj, id, Array::scalar(s));
    return;
  }
  Array c(operand.rows, operand.cols);
  for (std::size_t i = 0; i < n_out; ++i) c.data[i] = contrib(i);
  accumulate(adj, id, c);
}

void raw_rule(const Tape& tape, const Tape::Node& n, const Array& g,
              const std::vector<char>& rel, RawAdjoints& adj) {
  auto need = [&](std::size_t k) { return rel[static_cast<std::size_t>(n.inputs[k])] != 0; };
  auto in = [&](std::size_t k) -> const Array& { return tape.node(n.inputs[k]).value; };
  const Array& out = n.value;
  const std::size_t no = out.size();
  auto at = [](const Array& x, std::size_t i) { return x.size() == 1 ? x.data[0] : x.data[i]; };

  switch (n.op) {
    case OpKind::leaf:
      return;
    case OpKind::add:
    case OpKind::sub: {
      const double sign_b = n.op == OpKind::add ? 1.0 : -1.0;
      if (need(0)) accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) { return g.data[i]; });
      if (need(1)) accumulate_elementwise(adj, n.inputs[1], in(1), no, [&](std::size_t i) { return sign_b * g.data[i]; });
      return;
    }
    case OpKind::mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (need(0)) accumulate_elementwise(adj, n.inputs[0], a, no, [&](std::size_t i) { return g.data[i] * at(b, i); });
      if (need(1)) accumulate_elementwise(adj, n.inputs[1], b, no, [&](std::size_t i) { return g.data[i] * at(a, i); });
      return;
    }
    case OpKind::div: {
      const Array& b = in(1);
      if (need(0)) accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) { return g.data[i] / at(b, i); });
      if (need(1)) accumulate_elementwise(adj, n.inputs[1], b, no, [&](std::size_t i) { return -g.data[i] * out.data[i] / at(b, i); });
      return;
    }
    case OpKind::neg:
      accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) { return -g.data[i]; });
      return;
    case OpKind::exp:
      accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) { return g.data[i] * out.data[i]; });
      return;
    case OpKind::square: {
      const Array& a = in(0);
      accumulate_elementwise(adj, n.inputs[0], a, no, [&](std::size_t i) { return g.data[i] * 2.0 * a.data[i]; });
      return;
    }
    case OpKind::sqrt:
      accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) { return g.data[i] * 0.5 / out.data[i]; });
      return;
    case OpKind::ssp: {
      const Array& a = in(0);
      accumulate_elementwise(adj, n.inputs[0], a, no, [&](std::size_t i) { return g.data[i] * kernels::sigmoid(a.data[i]); });
      return;
    }
    case OpKind::sigmoid:
      accumulate_elementwise(adj, n.inputs[0], in(0), no, [&](std::size_t i) {
        return g.data[i] * (out.data[i] - out.data[i] * out.data[i]);
      });
      return;
    case OpKind::matmul: {
      const bool ta = n.attr0 & 1u, tb = n.attr0 & 2u;
      const Array& a = in(0);
      const Array& b = in(1);
      if (need(0)) {
        Array c;
        if (!ta) kernels::matmul(g, false, b, !tb, c);
        else kernels::matmul(b, tb, g, true, c);
        accumulate(adj, n.inputs[0], c);
      }
      if (need(1)) {
        Array c;
        if (!tb) kernels::matmul(a, !ta, g, false, c);
        else kernels::matmul(g, true, a, ta, c);
        accumulate(adj, n.inputs[1], c);
      }
      return;
    }
    case OpKind::segment_sum: {
      Array c;
      kernels::gather_rows(g, *n.index, c);
      accumulate(adj, n.inputs[0], c);
      return;
    }
    case OpKind::gather_rows: {
      Array c;
      kernels::segment_sum(g, *n.index, in(0).rows, c);
      accumulate(adj, n.inputs[0], c);
      return;
    }
    case OpKind::concat_cols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Array& p = in(k);
        if (need(k)) {
          Array c(p.rows, p.cols);
          for (std::size_t r = 0; r < p.rows; ++r) {
            for (std::size_t j = 0; j < p.cols; ++j) c(r, j) = g(r, off + j);
          }
          accumulate(adj, n.inputs[k], c);
        }
        off += p.cols;
      }
      return;
    }
    case OpKind::slice_cols: {
      const Array& a = in(0);
      Array c(a.rows, a.cols);
      for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t j = n.attr0; j < n.attr1; ++j) c(r, j) = g(r, j - n.attr0);
      }
      accumulate(adj, n.inputs[0], c);
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Array& a = in(0);
      const double v = n.op == OpKind::sum ? g.data[0] : g.data[0] / static_cast<double>(a.size());
      accumulate(adj, n.inputs[0], Array(a.rows, a.cols, v));
      return;
    }
  }
}

// ---- rules recorded on the tape (create_graph) ----

Value reduce_to(Value contrib, const Array& operand) {
  if (operand.size() == 1 && contrib.data().size() != 1) return sum(contrib);
  return contrib;
}

void accumulate(std::vector<Value>& adj, int id, Value contrib) {
  Value& a = adj[static_cast<std::size_t>(id)];
  a = a.valid() ? a + contrib : contrib;
}

void graph_rule(Tape& tape, int id, Value g, const std::vector<char>& rel,
                std::vector<Value>& adj) {
  // Copy what we need: recording new nodes never moves existing ones, but
  // keeping the rule independent of node references is simpler to audit.
  const Tape::Node& n = tape.node(id);
  const OpKind op = n.op;
  const std::vector<int> inputs = n.inputs;
  const std::size_t attr0 = n.attr0, attr1 = n.attr1;
  const IndexList index = n.index;
  auto need = [&](std::size_t k) { return rel[static_cast<std::size_t>(inputs[k])] != 0; };
  auto in = [&](std::size_t k) { return Value(&tape, inputs[k]); };
  const Value out(&tape, id);

  switch (op) {
    case OpKind::leaf:
      return;
    case OpKind::add:
      if (need(0)) accumulate(adj, inputs[0], reduce_to(g, in(0).data()));
      if (need(1)) accumulate(adj, inputs[1], reduce_to(g, in(1).data()));
      return;
    case OpKind::sub:
      if (need(0)) accumulate(adj, inputs[0], reduce_to(g, in(0).data()));
      if (need(1)) accumulate(adj, inputs[1], reduce_to(-g, in(1).data()));
      return;
    case OpKind::mul:
      if (need(0)) accumulate(adj, inputs[0], reduce_to(g * in(1), in(0).data()));
      if (need(1)) accumulate(adj, inputs[1], reduce_to(g * in(0), in(1).data()));
      return;
    case OpKind::div:
      if (need(0)) accumulate(adj, inputs[0], reduce_to(g / in(1), in(0).data()));
      if (need(1)) accumulate(adj, inputs[1], reduce_to(-(g * out) / in(1), in(1).data()));
      return;
    case OpKind::neg:
      accumulate(adj, inputs[0], -g);
      return;
    case OpKind::exp:
      accumulate(adj, inputs[0], g * out);
      return;
    case OpKind::square:
      accumulate(adj, inputs[0], (g * in(0)) * 2.0);
      return;
    case OpKind::sqrt:
      accumulate(adj, inputs[0], (g * 0.5) / out);
      return;
    case OpKind::ssp:
      accumulate(adj, inputs[0], g * sigmoid(in(0)));
      return;
    case OpKind::sigmoid:
      accumulate(adj, inputs[0], g * (out - square(out)));
      return;
    case OpKind::matmul: {
      const bool ta = attr0 & 1u, tb = attr0 & 2u;
      if (need(0)) {
        accumulate(adj, inputs[0], ta ? matmul(in(1), g, tb, true) : matmul(g, in(1), false, !tb));
      }
      if (need(1)) {
        accumulate(adj, inputs[1], tb ? matmul(g, in(0), true, ta) : matmul(in(0), g, !ta, false));
      }
      return;
    }
    case OpKind::segment_sum:
      accumulate(adj, inputs[0], gather_rows(g, index));
      return;
    case OpKind::gather_rows:
      accumulate(adj, inputs[0], segment_sum(g, index, in(0).rows()));
      return;
    case OpKind::concat_cols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t w = in(k).cols();
        if (need(k)) accumulate(adj, inputs[k], slice_cols(g, off, off + w));
        off += w;
      }
      return;
    }
    case OpKind::slice_cols: {
      const std::size_t rows = in(0).rows(), cols = in(0).cols();
      std::vector<Value> parts;
      if (attr0 > 0) parts.push_back(tape.zeros(rows, attr0));
      parts.push_back(g);
      if (attr1 < cols) parts.push_back(tape.zeros(rows, cols - attr1));
      accumulate(adj, inputs[0], parts.size() == 1 ? g : concat_cols(parts));
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const std::size_t rows = in(0).rows(), cols = in(0).cols();
      Value s = op == OpKind::sum ? g : g * (1.0 / static_cast<double>(rows * cols));
      accumulate(adj, inputs[0], tape.ones(rows, cols) * s);
      return;
    }
  }
}

}  // namespace

std::vector<Array> gradients(Value output, std::span<const Value> wrt) {
  check_output(output);
  const Tape& tape = *output.tape();
  const auto rel = relevant_nodes(tape, output.id(), wrt);
  RawAdjoints adj(static_cast<std::size_t>(output.id()) + 1);
  std::vector<char> keep(adj.size(), 0);
  for (const Value& w : wrt) {
    if (w.id() <= output.id()) keep[static_cast<std::size_t>(w.id())] = 1;
  }
  if (rel[static_cast<std::size_t>(output.id())]) {
    adj[static_cast<std::size_t>(output.id())] = Array::scalar(1.0);
    for (int id = output.id(); id >= 0; --id) {
      auto& g = adj[static_cast<std::size_t>(id)];
      if (!rel[static_cast<std::size_t>(id)] || !g) continue;
      raw_rule(tape, tape.node(id), *g, rel, adj);
      if (!keep[static_cast<std::size_t>(id)]) g.reset();
    }
  }
  std::vector<Array> result;
  result.reserve(wrt.size());
  for (const Value& w : wrt) {
    const Array& shape = w.data();
    if (w.id() <= output.id() && adj[static_cast<std::size_t>(w.id())]) {
      result.push_back(*adj[static_cast<std::size_t>(w.id())]);
    } else {
      result.emplace_back(shape.rows, shape.cols, 0.0);
    }
  }
  return result;
}

std::vector<Value> backward(Value output, std::span<const Value> wrt, bool create_graph) {
  check_output(output);
  Tape& tape = *output.tape();
  if (!create_graph) {
    std::vector<Array> g = gradients(output, wrt);
    std::vector<Value> result;
    result.reserve(g.size());
    for (Array& a : g) result.push_back(tape.constant(std::move(a)));
    return result;
  }
  const auto rel = relevant_nodes(tape, output.id(), wrt);
  std::vector<Value> adj(static_cast<std::size_t>(output.id()) + 1);
  const int top = output.id();
  if (rel[static_cast<std::size_t>(top)]) {
    adj[static_cast<std::size_t>(top)] = tape.scalar(1.0);
    for (int id = top; id >= 0; --id) {
      if (!rel[static_cast<std::size_t>(id)]) continue;
      const Value g = adj[static_cast<std::size_t>(id)];
      if (!g.valid()) continue;
      graph_rule(tape, id, g, rel, adj);
    }
  }
  std::vector<Value> result;
  result.reserve(wrt.size());
  for (const Value& w : wrt) {
    if (w.id() <= top && adj[static_cast<std::size_t>(w.id())].valid()) {
      result.push_back(adj[static_cast<std::size_t>(w.id())]);
    } else {
      result.push_back(tape.zeros(w.rows(), w.cols()));
    }
  }
  return result;
}

}  // namespace dnp::ad
