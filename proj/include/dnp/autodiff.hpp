#pragma once

#include <cstddef>
#include <initializer_list>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dnp/array.hpp"

// Tape-based reverse-mode automatic differentiation over rank-2 arrays.
//
// A Tape owns every node of one computation. Value is a cheap handle
// (tape pointer + node id). Backward rules are written twice: once on raw
// arrays for ordinary first-order gradients, and once in terms of recorded
// operations, which is what create_graph = true uses so that the returned
// gradients can be differentiated again.
//
// A tape is confined to one thread. Independent tapes may live on different
// threads.
namespace dnp::ad {

enum class OpKind {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  square,
  sqrt,
  ssp,
  sigmoid,
  matmul,
  segment_sum,
  gather_rows,
  concat_cols,
  slice_cols,
  sum,
  mean,
};

const char* op_name(OpKind kind);

using IndexList = std::shared_ptr<const std::vector<std::size_t>>;

IndexList make_index(std::vector<std::size_t> ids);

class Tape;

class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Array& data() const;
  std::size_t rows() const { return data().rows; }
  std::size_t cols() const { return data().cols; }
  std::vector<std::size_t> shape() const { return data().shape(); }
  bool requires_grad() const;
  // Producing operation; OpKind::leaf for parameters and constants.
  OpKind op() const;
  double item() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<int> inputs;
    Array value;
    bool requires_grad = false;
    // matmul: transpose flags; segment_sum: segment count; slice: [begin, end)
    std::size_t attr0 = 0;
    std::size_t attr1 = 0;
    IndexList index;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Array data, bool requires_grad);
  Value constant(Array data) { return leaf(std::move(data), false); }
  Value scalar(double v) { return constant(Array::scalar(v)); }
  Value ones(std::size_t rows, std::size_t cols) { return constant(Array(rows, cols, 1.0)); }
  Value zeros(std::size_t rows, std::size_t cols) { return constant(Array(rows, cols, 0.0)); }

  // Overwrites the data of a leaf; follow with replay() to refresh outputs.
  void set_leaf(Value leaf, Array data);
  // Recomputes every non-leaf node from its inputs, in recording order.
  void replay();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Value record(OpKind op, std::vector<int> inputs, std::size_t attr0 = 0,
               std::size_t attr1 = 0, IndexList index = nullptr);

 private:
  void evaluate(Node& n) const;

  std::deque<Node> nodes_;
};

// Elementwise operations. Shapes must match, or one operand must be 1x1 and is
// broadcast. Unary kinds ignore b.
Value elementwise(OpKind kind, Value a, std::optional<Value> b = std::nullopt);

Value operator+(Value a, Value b);
Value operator-(Value a, Value b);
Value operator*(Value a, Value b);
Value operator/(Value a, Value b);
Value operator-(Value a);
Value operator*(Value a, double s);
Value operator*(double s, Value a);
Value operator+(Value a, double s);
Value exp(Value a);
Value square(Value a);
Value sqrt(Value a);
// Shifted softplus ln(0.5 e^x + 0.5).
Value ssp(Value a);
Value sigmoid(Value a);

Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false);
Value segment_sum(Value values, IndexList segment_ids, std::size_t n_segments);
Value gather_rows(Value values, IndexList ids);
Value concat_cols(std::span<const Value> parts);
Value concat_cols(std::initializer_list<Value> parts);
Value slice_cols(Value a, std::size_t begin, std::size_t end);
Value sum(Value a);
Value mean(Value a);

// Gradients of a single-element output with respect to each entry of wrt.
// With create_graph the results are recorded Values that can be
// differentiated again; otherwise they are constants. An entry of wrt that
// the output does not depend on gets a zero gradient of its own shape.
std::vector<Value> backward(Value output, std::span<const Value> wrt, bool create_graph);

// First-order gradients as plain arrays, without recording anything.
std::vector<Array> gradients(Value output, std::span<const Value> wrt);

}  // namespace dnp::ad
