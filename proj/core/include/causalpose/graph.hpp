#ifndef CAUSALPOSE_GRAPH_HPP
#define CAUSALPOSE_GRAPH_HPP

#include <deque>
#include <map>
#include <string>
#include <vector>

#include "causalpose/tensor.hpp"

namespace causalpose {

using NodeId = int32_t;

enum class Op {
  Placeholder,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Relu,
  Sigmoid,
  Softmax,
  KlDiv,
  Sum,
  Mean,
  SumAxis,
  MeanAxis,
  Concat,
  Stack,
  Gather,
  Replicate,
  MaskedBlend,
  SegmentMax,
  Maximum,
  StopGrad,
  Reshape,
};

const char* op_name(Op op);

// One record of the tape. Creation order is a topological order: an op can
// only reference ids that already exist.
struct Node {
  Op op = Op::Constant;
  std::string name;
  Shape shape;
  std::vector<NodeId> inputs;
  bool requires_grad = false;

  // op attributes
  int axis = 0;
  double scalar = 0.0;
  std::vector<int> indices;  // Gather targets / SegmentMax segment ids
  int copies = 0;            // Replicate

  // execution state
  Tensor value;
  Tensor grad;
  bool has_value = false;
  bool has_grad = false;
  int64_t version = -1;
  std::vector<int32_t> arg;  // SegmentMax winners, refreshed each forward
};

// Define-by-shape, run-on-demand compute tape. Shapes are checked at
// construction; values are produced lazily by eval() and memoized until an
// upstream placeholder is rebound. Single-threaded per instance.
class Graph {
 public:
  NodeId placeholder(const std::string& name, Shape shape, bool requires_grad = false);
  NodeId constant(Tensor value, const std::string& name = "");

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId matmul(NodeId a, NodeId w);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softmax(NodeId a, int axis = -1);
  NodeId kl_div(NodeId q, NodeId p);  // sum q*ln(q/p) over the last axis
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_axis(NodeId a, int axis);
  NodeId mean_axis(NodeId a, int axis);
  NodeId concat(const std::vector<NodeId>& parts, int axis);
  NodeId stack(const std::vector<NodeId>& parts, int axis);
  NodeId gather(NodeId a, int axis, std::vector<int> indices);
  NodeId replicate(NodeId a, int copies);
  NodeId masked_blend(NodeId a, NodeId b, NodeId mask);
  NodeId segment_max(NodeId a, std::vector<int> segment_of, int n_segments);
  NodeId maximum(NodeId a, NodeId b);
  NodeId stop_gradient(NodeId a);
  NodeId reshape(NodeId a, Shape shape);

  void bind(const std::string& name, Tensor value);
  bool has_placeholder(const std::string& name) const;
  NodeId id_of(const std::string& name) const;

  const Tensor& eval(NodeId id);
  // Convenience wrapper: bind everything, then evaluate the named outputs.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& bindings,
                                        const std::map<std::string, NodeId>& outputs);

  // Reverse pass from a scalar loss. Gradients of every requires_grad node in
  // the loss's ancestry are (re)computed; nodes cut off by stop-gradient get
  // exactly zero.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  bool has_grad(NodeId id) const;
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  const Shape& shape_of(NodeId id) const { return nodes_[static_cast<size_t>(id)].shape; }

 private:
  enum class Broadcast { Same, ScalarRhs, Prefix, Suffix };

  NodeId push(Node n);
  Node& at(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& at(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  void check_exists(NodeId id) const;
  Broadcast binary_broadcast(const Shape& a, const Shape& b, const char* what) const;
  NodeId binary_op(Op op, NodeId a, NodeId b);

  void compute(Node& n);
  void backprop(const Node& n);
  void accumulate(NodeId input, const Tensor& delta);
  std::vector<NodeId> ancestry(NodeId id) const;

  std::deque<Node> nodes_;
  std::map<std::string, NodeId> named_;
  int64_t tick_ = 0;
};

}  // namespace causalpose

#endif
