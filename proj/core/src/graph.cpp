#include "causalpose/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "causalpose/errors.hpp"

namespace causalpose {

namespace {
constexpr double kKlEps = 1e-12;

int normalize_axis(int axis, int rank, const char* what) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(what) + ": axis out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// outer × d × inner decomposition around one axis
struct AxisSplit {
  int64_t outer, d, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp{1, s[static_cast<size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
  return sp;
}

bool is_prefix(const Shape& small, const Shape& big) {
  if (small.size() >= big.size()) return false;
  return std::equal(small.begin(), small.end(), big.begin());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() >= big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}
}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Placeholder: return "placeholder";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::KlDiv: return "kl";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumAxis: return "sum_axis";
    case Op::MeanAxis: return "mean_axis";
    case Op::Concat: return "concat";
    case Op::Stack: return "stack";
    case Op::Gather: return "gather";
    case Op::Replicate: return "replicate";
    case Op::MaskedBlend: return "masked_blend";
    case Op::SegmentMax: return "segment_max";
    case Op::Maximum: return "maximum";
    case Op::StopGrad: return "stop_gradient";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

NodeId Graph::push(Node n) {
  NodeId id = static_cast<NodeId>(nodes_.size());
  if (n.name.empty()) n.name = std::string(op_name(n.op)) + "#" + std::to_string(id);
  nodes_.push_back(std::move(n));
  return id;
}

void Graph::check_exists(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw ShapeError("node id " + std::to_string(id) + " does not exist");
  }
}

NodeId Graph::placeholder(const std::string& name, Shape shape, bool requires_grad) {
  if (named_.count(name)) throw ConfigError("duplicate placeholder name: " + name);
  Node n;
  n.op = Op::Placeholder;
  n.name = name;
  n.shape = std::move(shape);
  n.requires_grad = requires_grad;
  NodeId id = push(std::move(n));
  named_[name] = id;
  return id;
}

NodeId Graph::constant(Tensor value, const std::string& name) {
  Node n;
  n.op = Op::Constant;
  n.name = name;
  n.shape = value.shape;
  n.value = std::move(value);
  n.has_value = true;
  n.version = ++tick_;
  return push(std::move(n));
}

Graph::Broadcast Graph::binary_broadcast(const Shape& a, const Shape& b, const char* what) const {
  if (a == b) return Broadcast::Same;
  if (b.empty()) return Broadcast::ScalarRhs;
  if (is_prefix(b, a)) return Broadcast::Prefix;
  if (is_suffix(b, a)) return Broadcast::Suffix;
  throw ShapeError(std::string(what) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

NodeId Graph::binary_op(Op op, NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  binary_broadcast(at(a).shape, at(b).shape, op_name(op));  // validates
  Node n;
  n.op = op;
  n.shape = at(a).shape;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary_op(Op::Add, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary_op(Op::Sub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary_op(Op::Mul, a, b); }

NodeId Graph::scale(NodeId a, double s) {
  check_exists(a);
  Node n;
  n.op = Op::Scale;
  n.shape = at(a).shape;
  n.inputs = {a};
  n.scalar = s;
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId w) {
  check_exists(a);
  check_exists(w);
  const Shape& sa = at(a).shape;
  const Shape& sw = at(w).shape;
  if (sa.empty() || sw.size() != 2) {
    throw ShapeError("matmul: need [...,m] x [m,n], got " + shape_str(sa) + " x " + shape_str(sw) +
                     " at node " + at(w).name);
  }
  if (sa.back() != sw[0]) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(sa) + " x " + shape_str(sw) +
                     " at node " + at(a).name);
  }
  Node n;
  n.op = Op::MatMul;
  n.shape = sa;
  n.shape.back() = sw[1];
  n.inputs = {a, w};
  n.requires_grad = at(a).requires_grad || at(w).requires_grad;
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  check_exists(a);
  Node n;
  n.op = Op::Relu;
  n.shape = at(a).shape;
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  check_exists(a);
  Node n;
  n.op = Op::Sigmoid;
  n.shape = at(a).shape;
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a, int axis) {
  check_exists(a);
  if (at(a).shape.empty()) throw ShapeError("softmax: scalar input at node " + at(a).name);
  Node n;
  n.op = Op::Softmax;
  n.shape = at(a).shape;
  n.inputs = {a};
  n.axis = normalize_axis(axis, static_cast<int>(n.shape.size()), "softmax");
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::kl_div(NodeId q, NodeId p) {
  check_exists(q);
  check_exists(p);
  if (at(q).shape != at(p).shape) {
    throw ShapeError("kl: shape mismatch " + shape_str(at(q).shape) + " vs " +
                     shape_str(at(p).shape) + " at node " + at(p).name);
  }
  if (at(q).shape.empty()) throw ShapeError("kl: scalar input at node " + at(q).name);
  Node n;
  n.op = Op::KlDiv;
  n.shape = Shape(at(q).shape.begin(), at(q).shape.end() - 1);
  n.inputs = {q, p};
  n.requires_grad = at(q).requires_grad || at(p).requires_grad;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  check_exists(a);
  Node n;
  n.op = Op::Sum;
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  check_exists(a);
  Node n;
  n.op = Op::Mean;
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::sum_axis(NodeId a, int axis) {
  check_exists(a);
  Node n;
  n.op = Op::SumAxis;
  n.axis = normalize_axis(axis, static_cast<int>(at(a).shape.size()), "sum_axis");
  n.shape = at(a).shape;
  n.shape.erase(n.shape.begin() + n.axis);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId a, int axis) {
  check_exists(a);
  Node n;
  n.op = Op::MeanAxis;
  n.axis = normalize_axis(axis, static_cast<int>(at(a).shape.size()), "mean_axis");
  n.shape = at(a).shape;
  n.shape.erase(n.shape.begin() + n.axis);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  check_exists(parts[0]);
  Shape base = at(parts[0]).shape;
  int ax = normalize_axis(axis, static_cast<int>(base.size()), "concat");
  int total = 0;
  bool rg = false;
  for (NodeId p : parts) {
    check_exists(p);
    Shape s = at(p).shape;
    if (s.size() != base.size()) throw ShapeError("concat: rank mismatch at node " + at(p).name);
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != ax && s[i] != base[i]) {
        throw ShapeError("concat: shape mismatch at node " + at(p).name);
      }
    }
    total += s[static_cast<size_t>(ax)];
    rg = rg || at(p).requires_grad;
  }
  Node n;
  n.op = Op::Concat;
  n.axis = ax;
  n.shape = base;
  n.shape[static_cast<size_t>(ax)] = total;
  n.inputs = parts;
  n.requires_grad = rg;
  return push(std::move(n));
}

NodeId Graph::stack(const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  check_exists(parts[0]);
  Shape base = at(parts[0]).shape;
  if (axis < 0) axis += static_cast<int>(base.size()) + 1;
  if (axis < 0 || axis > static_cast<int>(base.size())) throw ShapeError("stack: axis out of range");
  bool rg = false;
  for (NodeId p : parts) {
    check_exists(p);
    if (at(p).shape != base) throw ShapeError("stack: shape mismatch at node " + at(p).name);
    rg = rg || at(p).requires_grad;
  }
  Node n;
  n.op = Op::Stack;
  n.axis = axis;
  n.shape = base;
  n.shape.insert(n.shape.begin() + axis, static_cast<int>(parts.size()));
  n.inputs = parts;
  n.requires_grad = rg;
  return push(std::move(n));
}

NodeId Graph::gather(NodeId a, int axis, std::vector<int> indices) {
  check_exists(a);
  const Shape& s = at(a).shape;
  int ax = normalize_axis(axis, static_cast<int>(s.size()), "gather");
  if (indices.empty()) throw ShapeError("gather: empty index list at node " + at(a).name);
  for (int i : indices) {
    if (i < 0 || i >= s[static_cast<size_t>(ax)]) {
      throw ShapeError("gather: index " + std::to_string(i) + " out of range at node " + at(a).name);
    }
  }
  Node n;
  n.op = Op::Gather;
  n.axis = ax;
  n.shape = s;
  n.shape[static_cast<size_t>(ax)] = static_cast<int>(indices.size());
  n.indices = std::move(indices);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::replicate(NodeId a, int copies) {
  check_exists(a);
  if (copies <= 0) throw ShapeError("replicate: copies must be positive");
  Node n;
  n.op = Op::Replicate;
  n.copies = copies;
  n.shape = at(a).shape;
  n.shape.insert(n.shape.begin(), copies);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::masked_blend(NodeId a, NodeId b, NodeId mask) {
  check_exists(a);
  check_exists(b);
  check_exists(mask);
  if (at(a).shape != at(b).shape) {
    throw ShapeError("masked_blend: branch shape mismatch " + shape_str(at(a).shape) + " vs " +
                     shape_str(at(b).shape));
  }
  const Shape& ms = at(mask).shape;
  if (!(ms == at(a).shape || is_prefix(ms, at(a).shape))) {
    throw ShapeError("masked_blend: mask shape " + shape_str(ms) + " must equal or prefix " +
                     shape_str(at(a).shape));
  }
  if (at(mask).requires_grad) {
    throw ShapeError("masked_blend: mask must not require gradients (node " + at(mask).name + ")");
  }
  Node n;
  n.op = Op::MaskedBlend;
  n.shape = at(a).shape;
  n.inputs = {a, b, mask};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::segment_max(NodeId a, std::vector<int> segment_of, int n_segments) {
  check_exists(a);
  const Shape& s = at(a).shape;
  if (s.size() != 3) throw ShapeError("segment_max: want rank-3 [B,E,d], got " + shape_str(s));
  if (static_cast<int>(segment_of.size()) != s[1]) {
    throw ShapeError("segment_max: segment list length " + std::to_string(segment_of.size()) +
                     " != E=" + std::to_string(s[1]));
  }
  std::vector<bool> seen(static_cast<size_t>(n_segments), false);
  for (int g : segment_of) {
    if (g < 0 || g >= n_segments) throw ShapeError("segment_max: segment id out of range");
    seen[static_cast<size_t>(g)] = true;
  }
  for (int g = 0; g < n_segments; ++g) {
    if (!seen[static_cast<size_t>(g)]) {
      throw ShapeError("segment_max: segment " + std::to_string(g) + " has no members");
    }
  }
  Node n;
  n.op = Op::SegmentMax;
  n.shape = {s[0], n_segments, s[2]};
  n.indices = std::move(segment_of);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

NodeId Graph::maximum(NodeId a, NodeId b) {
  check_exists(a);
  check_exists(b);
  if (at(a).shape != at(b).shape) {
    throw ShapeError("maximum: shape mismatch " + shape_str(at(a).shape) + " vs " +
                     shape_str(at(b).shape));
  }
  Node n;
  n.op = Op::Maximum;
  n.shape = at(a).shape;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  return push(std::move(n));
}

NodeId Graph::stop_gradient(NodeId a) {
  check_exists(a);
  Node n;
  n.op = Op::StopGrad;
  n.shape = at(a).shape;
  n.inputs = {a};
  n.requires_grad = false;  // cuts every upstream path
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
  check_exists(a);
  if (shape_numel(shape) != shape_numel(at(a).shape)) {
    throw ShapeError("reshape: element count mismatch " + shape_str(at(a).shape) + " -> " +
                     shape_str(shape) + " at node " + at(a).name);
  }
  Node n;
  n.op = Op::Reshape;
  n.shape = std::move(shape);
  n.inputs = {a};
  n.requires_grad = at(a).requires_grad;
  return push(std::move(n));
}

void Graph::bind(const std::string& name, Tensor value) {
  auto it = named_.find(name);
  if (it == named_.end()) throw ConfigError("bind: unknown placeholder " + name);
  Node& n = at(it->second);
  if (value.shape != n.shape) {
    throw ShapeError("bind: shape " + shape_str(value.shape) + " does not match placeholder " +
                     name + " " + shape_str(n.shape));
  }
  n.value = std::move(value);
  n.has_value = true;
  n.version = ++tick_;
}

bool Graph::has_placeholder(const std::string& name) const { return named_.count(name) != 0; }

NodeId Graph::id_of(const std::string& name) const {
  auto it = named_.find(name);
  if (it == named_.end()) throw ConfigError("unknown placeholder " + name);
  return it->second;
}

std::vector<NodeId> Graph::ancestry(NodeId id) const {
  std::vector<bool> mark(nodes_.size(), false);
  std::vector<NodeId> stack{id};
  mark[static_cast<size_t>(id)] = true;
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    for (NodeId in : at(cur).inputs) {
      if (!mark[static_cast<size_t>(in)]) {
        mark[static_cast<size_t>(in)] = true;
        stack.push_back(in);
      }
    }
  }
  std::vector<NodeId> order;
  for (NodeId i = 0; i < static_cast<NodeId>(nodes_.size()); ++i) {
    if (mark[static_cast<size_t>(i)]) order.push_back(i);
  }
  return order;  // ascending ids == topological order
}

const Tensor& Graph::eval(NodeId id) {
  check_exists(id);
  for (NodeId i : ancestry(id)) {
    Node& n = at(i);
    if (n.op == Op::Placeholder) {
      if (!n.has_value) throw ConfigError("placeholder " + n.name + " is unbound");
      continue;
    }
    if (n.op == Op::Constant) continue;
    int64_t need = 0;
    for (NodeId in : n.inputs) need = std::max(need, at(in).version);
    if (!n.has_value || n.version < need) {
      compute(n);
      n.has_value = true;
      n.version = need;
    }
  }
  return at(id).value;
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& bindings,
                                             const std::map<std::string, NodeId>& outputs) {
  for (const auto& [name, t] : bindings) bind(name, t);
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs) out[name] = eval(id);
  return out;
}

void Graph::backward(NodeId loss) {
  check_exists(loss);
  eval(loss);
  if (at(loss).value.numel() != 1) {
    throw ShapeError("backward: loss node " + at(loss).name + " is not scalar, shape " +
                     shape_str(at(loss).shape));
  }
  std::vector<NodeId> order = ancestry(loss);
  for (NodeId i : order) {
    Node& n = at(i);
    if (n.requires_grad) {
      n.grad = Tensor::zeros(n.shape);
      n.has_grad = true;
    } else {
      n.has_grad = false;
    }
  }
  if (!at(loss).requires_grad) return;  // nothing differentiable below
  at(loss).grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node& n = at(*it);
    if (!n.requires_grad || n.inputs.empty()) continue;
    backprop(n);
  }
}

const Tensor& Graph::value(NodeId id) const {
  check_exists(id);
  if (!at(id).has_value) throw ConfigError("value: node " + at(id).name + " not evaluated");
  return at(id).value;
}

const Tensor& Graph::grad(NodeId id) const {
  check_exists(id);
  if (!at(id).has_grad) throw ConfigError("grad: node " + at(id).name + " has no gradient");
  return at(id).grad;
}

bool Graph::has_grad(NodeId id) const {
  check_exists(id);
  return at(id).has_grad;
}

// ---------------------------------------------------------------------------
// forward kernels
// ---------------------------------------------------------------------------

void Graph::compute(Node& n) {
  auto& out = n.value;
  if (out.shape != n.shape || out.numel() != shape_numel(n.shape)) out = Tensor(n.shape);
  switch (n.op) {
    case Op::Placeholder:
    case Op::Constant:
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      Broadcast bc = binary_broadcast(a.shape, b.shape, op_name(n.op));
      int64_t an = a.numel();
      int64_t bn = b.numel();
      int64_t inner = (bc == Broadcast::Prefix) ? an / bn : 0;
      for (int64_t i = 0; i < an; ++i) {
        int64_t bi;
        switch (bc) {
          case Broadcast::Same: bi = i; break;
          case Broadcast::ScalarRhs: bi = 0; break;
          case Broadcast::Suffix: bi = i % bn; break;
          case Broadcast::Prefix: bi = i / inner; break;
          default: bi = i;
        }
        double av = a[i], bv = b[bi];
        out[i] = n.op == Op::Add ? av + bv : (n.op == Op::Sub ? av - bv : av * bv);
      }
      return;
    }
    case Op::Scale: {
      const Tensor& a = at(n.inputs[0]).value;
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = n.scalar * a[i];
      return;
    }
    case Op::MatMul: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& w = at(n.inputs[1]).value;
      int64_t m = a.shape.back();
      int64_t rows = a.numel() / m;
      int64_t cols = w.shape[1];
      std::fill(out.data.begin(), out.data.end(), 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        const double* arow = a.data.data() + r * m;
        double* orow = out.data.data() + r * cols;
        for (int64_t k = 0; k < m; ++k) {
          double av = arow[k];
          const double* wrow = w.data.data() + k * cols;
          for (int64_t j = 0; j < cols; ++j) orow[j] += av * wrow[j];
        }
      }
      return;
    }
    case Op::Relu: {
      const Tensor& a = at(n.inputs[0]).value;
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      return;
    }
    case Op::Sigmoid: {
      const Tensor& a = at(n.inputs[0]).value;
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
      return;
    }
    case Op::Softmax: {
      const Tensor& a = at(n.inputs[0]).value;
      AxisSplit sp = split_axis(a.shape, n.axis);
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          int64_t base = o * sp.d * sp.inner + in;
          double mx = -std::numeric_limits<double>::infinity();
          for (int64_t k = 0; k < sp.d; ++k) mx = std::max(mx, a[base + k * sp.inner]);
          double s = 0.0;
          for (int64_t k = 0; k < sp.d; ++k) {
            double e = std::exp(a[base + k * sp.inner] - mx);
            out[base + k * sp.inner] = e;
            s += e;
          }
          for (int64_t k = 0; k < sp.d; ++k) out[base + k * sp.inner] /= s;
        }
      }
      return;
    }
    case Op::KlDiv: {
      const Tensor& q = at(n.inputs[0]).value;
      const Tensor& p = at(n.inputs[1]).value;
      int64_t d = q.shape.back();
      int64_t rows = q.numel() / d;
      for (int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int64_t i = 0; i < d; ++i) {
          double qv = q[r * d + i];
          if (qv > 0.0) {
            double pv = std::max(p[r * d + i], kKlEps);
            acc += qv * std::log(qv / pv);
          }
        }
        out[r] = acc;
      }
      return;
    }
    case Op::Sum: {
      const Tensor& a = at(n.inputs[0]).value;
      double acc = 0.0;
      for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
      out.data[0] = acc;
      return;
    }
    case Op::Mean: {
      const Tensor& a = at(n.inputs[0]).value;
      double acc = 0.0;
      for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
      out.data[0] = acc / static_cast<double>(a.numel());
      return;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      const Tensor& a = at(n.inputs[0]).value;
      AxisSplit sp = split_axis(a.shape, n.axis);
      double div = n.op == Op::MeanAxis ? static_cast<double>(sp.d) : 1.0;
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          double acc = 0.0;
          for (int64_t k = 0; k < sp.d; ++k) acc += a[(o * sp.d + k) * sp.inner + in];
          out[o * sp.inner + in] = acc / div;
        }
      }
      return;
    }
    case Op::Concat: {
      AxisSplit sp = split_axis(n.shape, n.axis);
      int64_t offset = 0;
      for (NodeId part : n.inputs) {
        const Tensor& a = at(part).value;
        int64_t dp = a.shape[static_cast<size_t>(n.axis)];
        for (int64_t o = 0; o < sp.outer; ++o) {
          for (int64_t k = 0; k < dp; ++k) {
            for (int64_t in = 0; in < sp.inner; ++in) {
              out[(o * sp.d + offset + k) * sp.inner + in] = a[(o * dp + k) * sp.inner + in];
            }
          }
        }
        offset += dp;
      }
      return;
    }
    case Op::Stack: {
      int64_t outer = 1;
      for (int i = 0; i < n.axis; ++i) outer *= n.shape[static_cast<size_t>(i)];
      int64_t parts = static_cast<int64_t>(n.inputs.size());
      int64_t rest = out.numel() / (outer * parts);
      for (int64_t p = 0; p < parts; ++p) {
        const Tensor& a = at(n.inputs[static_cast<size_t>(p)]).value;
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t r = 0; r < rest; ++r) {
            out[(o * parts + p) * rest + r] = a[o * rest + r];
          }
        }
      }
      return;
    }
    case Op::Gather: {
      const Tensor& a = at(n.inputs[0]).value;
      AxisSplit sp = split_axis(a.shape, n.axis);
      int64_t m = static_cast<int64_t>(n.indices.size());
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t j = 0; j < m; ++j) {
          int64_t src = (o * sp.d + n.indices[static_cast<size_t>(j)]) * sp.inner;
          int64_t dst = (o * m + j) * sp.inner;
          for (int64_t in = 0; in < sp.inner; ++in) out[dst + in] = a[src + in];
        }
      }
      return;
    }
    case Op::Replicate: {
      const Tensor& a = at(n.inputs[0]).value;
      int64_t block = a.numel();
      for (int c = 0; c < n.copies; ++c) {
        std::copy(a.data.begin(), a.data.end(), out.data.begin() + static_cast<int64_t>(c) * block);
      }
      return;
    }
    case Op::MaskedBlend: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      const Tensor& m = at(n.inputs[2]).value;
      int64_t inner = a.numel() / m.numel();
      for (int64_t i = 0; i < a.numel(); ++i) {
        out[i] = m[i / inner] != 0.0 ? b[i] : a[i];
      }
      return;
    }
    case Op::SegmentMax: {
      const Tensor& a = at(n.inputs[0]).value;
      int64_t B = a.shape[0], E = a.shape[1], d = a.shape[2];
      int64_t S = n.shape[1];
      n.arg.assign(static_cast<size_t>(B * S * d), -1);
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t e = 0; e < E; ++e) {
          int64_t s = n.indices[static_cast<size_t>(e)];
          for (int64_t c = 0; c < d; ++c) {
            int64_t oi = (b * S + s) * d + c;
            double v = a[(b * E + e) * d + c];
            if (n.arg[static_cast<size_t>(oi)] < 0 || v > out[oi]) {
              out[oi] = v;
              n.arg[static_cast<size_t>(oi)] = static_cast<int32_t>(e);
            }
          }
        }
      }
      return;
    }
    case Op::Maximum: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
      return;
    }
    case Op::StopGrad:
    case Op::Reshape: {
      const Tensor& a = at(n.inputs[0]).value;
      std::copy(a.data.begin(), a.data.end(), out.data.begin());
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// backward kernels; accumulate into input grads
// ---------------------------------------------------------------------------

void Graph::backprop(const Node& n) {
  const Tensor& g = n.grad;
  auto want = [this](NodeId id) { return at(id).requires_grad; };
  switch (n.op) {
    case Op::Placeholder:
    case Op::Constant:
      return;
    case Op::Add:
    case Op::Sub: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      double sign = n.op == Op::Sub ? -1.0 : 1.0;
      Broadcast bc = binary_broadcast(a.shape, b.shape, op_name(n.op));
      int64_t inner = (bc == Broadcast::Prefix) ? a.numel() / b.numel() : 0;
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      }
      if (want(n.inputs[1])) {
        Tensor& db = at(n.inputs[1]).grad;
        int64_t bn = b.numel();
        for (int64_t i = 0; i < g.numel(); ++i) {
          int64_t bi;
          switch (bc) {
            case Broadcast::Same: bi = i; break;
            case Broadcast::ScalarRhs: bi = 0; break;
            case Broadcast::Suffix: bi = i % bn; break;
            case Broadcast::Prefix: bi = i / inner; break;
            default: bi = i;
          }
          db[bi] += sign * g[i];
        }
      }
      return;
    }
    case Op::Mul: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      Broadcast bc = binary_broadcast(a.shape, b.shape, "mul");
      int64_t bn = b.numel();
      int64_t inner = (bc == Broadcast::Prefix) ? a.numel() / bn : 0;
      auto bidx = [&](int64_t i) -> int64_t {
        switch (bc) {
          case Broadcast::Same: return i;
          case Broadcast::ScalarRhs: return 0;
          case Broadcast::Suffix: return i % bn;
          case Broadcast::Prefix: return i / inner;
        }
        return i;
      };
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * b[bidx(i)];
      }
      if (want(n.inputs[1])) {
        Tensor& db = at(n.inputs[1]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) db[bidx(i)] += g[i] * a[i];
      }
      return;
    }
    case Op::Scale: {
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += n.scalar * g[i];
      }
      return;
    }
    case Op::MatMul: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& w = at(n.inputs[1]).value;
      int64_t m = a.shape.back();
      int64_t rows = a.numel() / m;
      int64_t cols = w.shape[1];
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t r = 0; r < rows; ++r) {
          const double* grow = g.data.data() + r * cols;
          double* darow = da.data.data() + r * m;
          for (int64_t k = 0; k < m; ++k) {
            const double* wrow = w.data.data() + k * cols;
            double acc = 0.0;
            for (int64_t j = 0; j < cols; ++j) acc += grow[j] * wrow[j];
            darow[k] += acc;
          }
        }
      }
      if (want(n.inputs[1])) {
        Tensor& dw = at(n.inputs[1]).grad;
        for (int64_t r = 0; r < rows; ++r) {
          const double* arow = a.data.data() + r * m;
          const double* grow = g.data.data() + r * cols;
          for (int64_t k = 0; k < m; ++k) {
            double av = arow[k];
            double* dwrow = dw.data.data() + k * cols;
            for (int64_t j = 0; j < cols; ++j) dwrow[j] += av * grow[j];
          }
        }
      }
      return;
    }
    case Op::Relu: {
      if (want(n.inputs[0])) {
        const Tensor& a = at(n.inputs[0]).value;
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += a[i] > 0.0 ? g[i] : 0.0;
      }
      return;
    }
    case Op::Sigmoid: {
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        const Tensor& y = n.value;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
      }
      return;
    }
    case Op::Softmax: {
      if (!want(n.inputs[0])) return;
      Tensor& da = at(n.inputs[0]).grad;
      const Tensor& y = n.value;
      AxisSplit sp = split_axis(n.shape, n.axis);
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          int64_t base = o * sp.d * sp.inner + in;
          double dot = 0.0;
          for (int64_t k = 0; k < sp.d; ++k) {
            int64_t i = base + k * sp.inner;
            dot += g[i] * y[i];
          }
          for (int64_t k = 0; k < sp.d; ++k) {
            int64_t i = base + k * sp.inner;
            da[i] += y[i] * (g[i] - dot);
          }
        }
      }
      return;
    }
    case Op::KlDiv: {
      const Tensor& q = at(n.inputs[0]).value;
      const Tensor& p = at(n.inputs[1]).value;
      int64_t d = q.shape.back();
      int64_t rows = q.numel() / d;
      bool wq = want(n.inputs[0]);
      bool wp = want(n.inputs[1]);
      for (int64_t r = 0; r < rows; ++r) {
        double gr = g[r];
        for (int64_t i = 0; i < d; ++i) {
          double qv = q[r * d + i];
          double pv = p[r * d + i];
          if (wq && qv > 0.0) {
            at(n.inputs[0]).grad[r * d + i] += gr * (std::log(qv / std::max(pv, kKlEps)) + 1.0);
          }
          if (wp && pv > kKlEps && qv > 0.0) {
            at(n.inputs[1]).grad[r * d + i] += gr * (-qv / pv);
          }
        }
      }
      return;
    }
    case Op::Sum: {
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        double gv = g.data[0];
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += gv;
      }
      return;
    }
    case Op::Mean: {
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        double gv = g.data[0] / static_cast<double>(da.numel());
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += gv;
      }
      return;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      if (!want(n.inputs[0])) return;
      Tensor& da = at(n.inputs[0]).grad;
      AxisSplit sp = split_axis(at(n.inputs[0]).shape, n.axis);
      double div = n.op == Op::MeanAxis ? static_cast<double>(sp.d) : 1.0;
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t in = 0; in < sp.inner; ++in) {
          double gv = g[o * sp.inner + in] / div;
          for (int64_t k = 0; k < sp.d; ++k) da[(o * sp.d + k) * sp.inner + in] += gv;
        }
      }
      return;
    }
    case Op::Concat: {
      AxisSplit sp = split_axis(n.shape, n.axis);
      int64_t offset = 0;
      for (NodeId part : n.inputs) {
        const Shape& ps = at(part).shape;
        int64_t dp = ps[static_cast<size_t>(n.axis)];
        if (want(part)) {
          Tensor& dpart = at(part).grad;
          for (int64_t o = 0; o < sp.outer; ++o) {
            for (int64_t k = 0; k < dp; ++k) {
              for (int64_t in = 0; in < sp.inner; ++in) {
                dpart[(o * dp + k) * sp.inner + in] += g[(o * sp.d + offset + k) * sp.inner + in];
              }
            }
          }
        }
        offset += dp;
      }
      return;
    }
    case Op::Stack: {
      int64_t outer = 1;
      for (int i = 0; i < n.axis; ++i) outer *= n.shape[static_cast<size_t>(i)];
      int64_t parts = static_cast<int64_t>(n.inputs.size());
      int64_t rest = g.numel() / (outer * parts);
      for (int64_t p = 0; p < parts; ++p) {
        NodeId part = n.inputs[static_cast<size_t>(p)];
        if (!want(part)) continue;
        Tensor& dpart = at(part).grad;
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t r = 0; r < rest; ++r) {
            dpart[o * rest + r] += g[(o * parts + p) * rest + r];
          }
        }
      }
      return;
    }
    case Op::Gather: {
      if (!want(n.inputs[0])) return;
      Tensor& da = at(n.inputs[0]).grad;
      AxisSplit sp = split_axis(at(n.inputs[0]).shape, n.axis);
      int64_t m = static_cast<int64_t>(n.indices.size());
      for (int64_t o = 0; o < sp.outer; ++o) {
        for (int64_t j = 0; j < m; ++j) {
          int64_t dst = (o * sp.d + n.indices[static_cast<size_t>(j)]) * sp.inner;
          int64_t src = (o * m + j) * sp.inner;
          for (int64_t in = 0; in < sp.inner; ++in) da[dst + in] += g[src + in];
        }
      }
      return;
    }
    case Op::Replicate: {
      if (!want(n.inputs[0])) return;
      Tensor& da = at(n.inputs[0]).grad;
      int64_t block = da.numel();
      for (int c = 0; c < n.copies; ++c) {
        for (int64_t i = 0; i < block; ++i) da[i] += g[static_cast<int64_t>(c) * block + i];
      }
      return;
    }
    case Op::MaskedBlend: {
      const Tensor& m = at(n.inputs[2]).value;
      int64_t inner = g.numel() / m.numel();
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (m[i / inner] == 0.0) da[i] += g[i];
        }
      }
      if (want(n.inputs[1])) {
        Tensor& db = at(n.inputs[1]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (m[i / inner] != 0.0) db[i] += g[i];
        }
      }
      return;
    }
    case Op::SegmentMax: {
      if (!want(n.inputs[0])) return;
      Tensor& da = at(n.inputs[0]).grad;
      int64_t E = at(n.inputs[0]).shape[1];
      int64_t d = at(n.inputs[0]).shape[2];
      int64_t S = n.shape[1];
      int64_t B = n.shape[0];
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t s = 0; s < S; ++s) {
          for (int64_t c = 0; c < d; ++c) {
            int64_t oi = (b * S + s) * d + c;
            int32_t e = n.arg[static_cast<size_t>(oi)];
            da[(b * E + e) * d + c] += g[oi];
          }
        }
      }
      return;
    }
    case Op::Maximum: {
      const Tensor& a = at(n.inputs[0]).value;
      const Tensor& b = at(n.inputs[1]).value;
      bool wa = want(n.inputs[0]);
      bool wb = want(n.inputs[1]);
      for (int64_t i = 0; i < g.numel(); ++i) {
        if (a[i] >= b[i]) {
          if (wa) at(n.inputs[0]).grad[i] += g[i];
        } else if (wb) {
          at(n.inputs[1]).grad[i] += g[i];
        }
      }
      return;
    }
    case Op::StopGrad:
      return;  // never reached: node.requires_grad is false
    case Op::Reshape: {
      if (want(n.inputs[0])) {
        Tensor& da = at(n.inputs[0]).grad;
        for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      }
      return;
    }
  }
}

}  // namespace causalpose
