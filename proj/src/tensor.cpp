#include "jmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace jmae {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

namespace {

using detail::Node;

[[noreturn]] void fail(const char* op, const std::string& what) {
  throw std::runtime_error(std::string(op) + ": " + what);
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) fail(op, "non-finite value in result");
}

void check_shape_ok(const char* op, const std::vector<int>& shape) {
  if (shape.empty()) fail(op, "empty shape");
  for (int d : shape)
    if (d <= 0) fail(op, "non-positive dim in shape " + shape_str(shape));
}

Tensor wrap(std::shared_ptr<Node> n) {
  Tensor t;
  t.node = std::move(n);
  return t;
}

Node& deref(const Tensor& t, const char* op) {
  if (!t.node) fail(op, "undefined tensor operand");
  return *t.node;
}

// Builds the result node; the backward closure is only retained when some
// parent actually needs gradients.
Tensor make_node(const char* op, std::vector<int> shape, std::vector<double> values,
                 std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  check_shape_ok(op, shape);
  if (static_cast<int64_t>(values.size()) != shape_product(shape))
    fail(op, "value count does not match shape " + shape_str(shape));
  check_finite(op, values);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || (p.node && p.node->requires_grad);
  n->requires_grad = rg;
  if (rg) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node);
    n->backward_fn = std::move(backward);
  }
  return wrap(std::move(n));
}

// [outer, n, inner] view of `shape` around `axis`.
void axis_strides(const std::vector<int>& shape, int axis, int64_t& outer, int64_t& n,
                  int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  n = shape[axis];
  inner = 1;
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_product(shape), 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_product(shape), value), requires_grad);
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  check_shape_ok("tensor", shape);
  if (static_cast<int64_t>(values.size()) != shape_product(shape))
    fail("tensor", "value count does not match shape " + shape_str(shape));
  check_finite("tensor", values);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return deref(*this, "shape").shape; }
int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) fail("dim", "axis out of range");
  return s[axis];
}

int64_t Tensor::size() const { return deref(*this, "size").size(); }
const std::vector<double>& Tensor::values() const { return deref(*this, "values").values; }
std::vector<double>& Tensor::values() { return deref(*this, "values").values; }
bool Tensor::requires_grad() const { return deref(*this, "requires_grad").requires_grad; }

const std::vector<double>& Tensor::grad() const {
  return deref(*this, "grad").ensure_grad();
}

void Tensor::zero_grad() {
  auto& n = deref(*this, "zero_grad");
  n.grad.assign(n.values.size(), 0.0);
}

double Tensor::item() const {
  const auto& n = deref(*this, "item");
  if (n.size() != 1) fail("item", "tensor has " + std::to_string(n.size()) + " elements");
  return n.values[0];
}

double Tensor::at(int i) const {
  const auto& n = deref(*this, "at");
  if (i < 0 || i >= n.size()) fail("at", "index out of range");
  return n.values[i];
}

double Tensor::at(int i, int j) const {
  const auto& n = deref(*this, "at");
  if (n.shape.size() != 2) fail("at", "expected rank-2 tensor, got " + shape_str(n.shape));
  if (i < 0 || i >= n.shape[0] || j < 0 || j >= n.shape[1]) fail("at", "index out of range");
  return n.values[static_cast<int64_t>(i) * n.shape[1] + j];
}

void Tensor::backward() const {
  auto& root = deref(*this, "backward");
  if (root.size() != 1) fail("backward", "root must be scalar");
  if (!root.requires_grad) fail("backward", "root does not require grad");

  // Post-order DFS; reversed, it yields each node before the nodes it feeds
  // from, which is the order the reverse sweep needs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior nodes carry per-sweep buffers; only leaves accumulate across
  // calls, so a second backward adds exactly one more gradient's worth.
  for (Node* n : order)
    if (n->backward_fn) n->grad.assign(n->values.size(), 0.0);
  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn) continue;
    n->ensure_grad();
    for (auto& p : n->parents)
      if (p && p->requires_grad) p->ensure_grad();
    n->backward_fn(*n);
  }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "matmul");
  auto& nb = deref(b, "matmul");
  if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
    fail("matmul", "incompatible shapes " + shape_str(na.shape) + " x " + shape_str(nb.shape));
  const int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
  std::vector<double> out(static_cast<int64_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = na.values[static_cast<int64_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = &nb.values[static_cast<int64_t>(p) * n];
      double* orow = &out[static_cast<int64_t>(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return make_node("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = self.grad[static_cast<int64_t>(i) * n + j];
          if (g == 0.0) continue;
          for (int p = 0; p < k; ++p)
            pa.grad[static_cast<int64_t>(i) * k + p] += g * pb.values[static_cast<int64_t>(p) * n + j];
        }
    if (pb.requires_grad)
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          const double av = pa.values[static_cast<int64_t>(i) * k + p];
          if (av == 0.0) continue;
          for (int j = 0; j < n; ++j)
            pb.grad[static_cast<int64_t>(p) * n + j] += av * self.grad[static_cast<int64_t>(i) * n + j];
        }
  });
}

namespace {

Tensor elementwise_pair(const char* op, const Tensor& a, const Tensor& b,
                        double (*fwd)(double, double),
                        void (*bwd)(double, double, double, double&, double&)) {
  auto& na = deref(a, op);
  auto& nb = deref(b, op);
  if (na.shape != nb.shape)
    fail(op, "shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  std::vector<double> out(na.values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(na.values[i], nb.values[i]);
  return make_node(op, na.shape, std::move(out), {a, b}, [bwd](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    double dummy = 0.0;
    for (size_t i = 0; i < self.values.size(); ++i) {
      double& ga = pa.requires_grad ? pa.grad[i] : dummy;
      double& gb = pb.requires_grad ? pb.grad[i] : dummy;
      bwd(self.grad[i], pa.values[i], pb.values[i], ga, gb);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_pair(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double& ga, double& gb) {
        ga += g;
        gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_pair(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double& ga, double& gb) {
        ga += g;
        gb -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_pair(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& ga, double& gb) {
        ga += g * y;
        gb += g * x;
      });
}

Tensor scalar_mul(const Tensor& a, double c) {
  auto& na = deref(a, "scalar_mul");
  std::vector<double> out(na.values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.values[i] * c;
  return make_node("scalar_mul", na.shape, std::move(out), {a}, [c](Node& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.values.size(); ++i) p.grad[i] += c * self.grad[i];
  });
}

Tensor scalar_add(const Tensor& a, double c) {
  auto& na = deref(a, "scalar_add");
  std::vector<double> out(na.values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = na.values[i] + c;
  return make_node("scalar_add", na.shape, std::move(out), {a}, [](Node& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.values.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  auto& na = deref(a, "transpose");
  if (na.shape.size() != 2) fail("transpose", "expected rank-2, got " + shape_str(na.shape));
  const int m = na.shape[0], n = na.shape[1];
  std::vector<double> out(na.values.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<int64_t>(j) * m + i] = na.values[static_cast<int64_t>(i) * n + j];
  return make_node("transpose", {n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& p = *self.parents[0];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        p.grad[static_cast<int64_t>(i) * n + j] += self.grad[static_cast<int64_t>(j) * m + i];
  });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  auto& na = deref(a, "reshape");
  if (shape_product(shape) != na.size())
    fail("reshape", shape_str(na.shape) + " to " + shape_str(shape) + " changes element count");
  return make_node("reshape", std::move(shape), na.values, {a}, [](Node& self) {
    auto& p = *self.parents[0];
    for (size_t i = 0; i < self.values.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail("concat", "no inputs");
  auto& first = deref(parts[0], "concat");
  const int rank = static_cast<int>(first.shape.size());
  if (axis < 0 || axis >= rank) fail("concat", "axis out of range");
  std::vector<int> out_shape = first.shape;
  std::vector<int> sizes;
  sizes.reserve(parts.size());
  for (const auto& t : parts) {
    auto& n = deref(t, "concat");
    if (static_cast<int>(n.shape.size()) != rank)
      fail("concat", "rank mismatch " + shape_str(first.shape) + " vs " + shape_str(n.shape));
    for (int i = 0; i < rank; ++i)
      if (i != axis && n.shape[i] != first.shape[i])
        fail("concat", "shape mismatch " + shape_str(first.shape) + " vs " + shape_str(n.shape));
    sizes.push_back(n.shape[axis]);
  }
  out_shape[axis] = 0;
  for (int s : sizes) out_shape[axis] += s;

  int64_t outer, ntotal, inner;
  axis_strides(out_shape, axis, outer, ntotal, inner);
  std::vector<double> out(outer * ntotal * inner);
  int64_t off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& v = parts[pi].node->values;
    const int64_t len = sizes[pi] * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * len, len, out.begin() + o * ntotal * inner + off * inner);
    off += sizes[pi];
  }
  return make_node("concat", out_shape, std::move(out), parts,
                   [sizes, outer, ntotal, inner](Node& self) {
                     int64_t off = 0;
                     for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                       auto& p = *self.parents[pi];
                       const int64_t len = sizes[pi] * inner;
                       if (p.requires_grad)
                         for (int64_t o = 0; o < outer; ++o)
                           for (int64_t i = 0; i < len; ++i)
                             p.grad[o * len + i] += self.grad[o * ntotal * inner + off * inner + i];
                       off += sizes[pi];
                     }
                   });
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  auto& na = deref(a, "slice");
  const int rank = static_cast<int>(na.shape.size());
  if (axis < 0 || axis >= rank) fail("slice", "axis out of range");
  if (start < 0 || len <= 0 || start + len > na.shape[axis])
    fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") outside dim " + std::to_string(na.shape[axis]));
  int64_t outer, n, inner;
  axis_strides(na.shape, axis, outer, n, inner);
  std::vector<int> out_shape = na.shape;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(na.values.begin() + (o * n + start) * inner, len * inner,
                out.begin() + o * len * inner);
  return make_node("slice", out_shape, std::move(out), {a},
                   [outer, n, inner, start, len](Node& self) {
                     auto& p = *self.parents[0];
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t i = 0; i < len * inner; ++i)
                         p.grad[(o * n + start) * inner + i] += self.grad[o * len * inner + i];
                   });
}

std::vector<Tensor> split(const Tensor& a, int axis, const std::vector<int>& sizes) {
  auto& na = deref(a, "split");
  int total = 0;
  for (int s : sizes) total += s;
  if (axis < 0 || axis >= static_cast<int>(na.shape.size()) || total != na.shape[axis])
    fail("split", "sizes do not cover dim");
  std::vector<Tensor> out;
  int start = 0;
  for (int s : sizes) {
    out.push_back(slice(a, axis, start, s));
    start += s;
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& indices) {
  auto& na = deref(a, "gather_rows");
  if (na.shape.size() != 2) fail("gather_rows", "expected rank-2, got " + shape_str(na.shape));
  const int m = na.shape[0], c = na.shape[1];
  if (indices.empty()) fail("gather_rows", "empty index list");
  std::vector<double> out(indices.size() * static_cast<size_t>(c));
  for (size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= m) fail("gather_rows", "row index " + std::to_string(r) + " out of range");
    std::copy_n(na.values.begin() + static_cast<int64_t>(r) * c, c, out.begin() + i * c);
  }
  return make_node("gather_rows", {static_cast<int>(indices.size()), c}, std::move(out), {a},
                   [indices, c](Node& self) {
                     auto& p = *self.parents[0];
                     for (size_t i = 0; i < indices.size(); ++i)
                       for (int j = 0; j < c; ++j)
                         p.grad[static_cast<int64_t>(indices[i]) * c + j] += self.grad[i * c + j];
                   });
}

Tensor broadcast_rows(const Tensor& v, int rows) {
  auto& nv = deref(v, "broadcast_rows");
  int c;
  if (nv.shape.size() == 1)
    c = nv.shape[0];
  else if (nv.shape.size() == 2 && nv.shape[0] == 1)
    c = nv.shape[1];
  else
    fail("broadcast_rows", "expected [C] or [1,C], got " + shape_str(nv.shape));
  if (rows <= 0) fail("broadcast_rows", "row count must be positive");
  std::vector<double> out(static_cast<int64_t>(rows) * c);
  for (int r = 0; r < rows; ++r) std::copy_n(nv.values.begin(), c, out.begin() + static_cast<int64_t>(r) * c);
  return make_node("broadcast_rows", {rows, c}, std::move(out), {v}, [rows, c](Node& self) {
    auto& p = *self.parents[0];
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) p.grad[j] += self.grad[static_cast<int64_t>(r) * c + j];
  });
}

namespace {

constexpr double kMaskInvalidBelow = -1e8;

}

Tensor softmax_masked(const Tensor& x, const Tensor& additive_mask) {
  auto& nx = deref(x, "softmax_masked");
  const Node* nm = nullptr;
  if (additive_mask.defined()) {
    nm = additive_mask.node.get();
    if (nm->shape != nx.shape)
      fail("softmax_masked",
           "mask shape " + shape_str(nm->shape) + " does not match " + shape_str(nx.shape));
  }
  const int rank = static_cast<int>(nx.shape.size());
  const int64_t L = nx.shape[rank - 1];
  const int64_t rows = nx.size() / L;
  std::vector<double> out(nx.values.size(), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = &nx.values[r * L];
    const double* mi = nm ? &nm->values[r * L] : nullptr;
    double best = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < L; ++j) {
      if (mi && mi[j] <= kMaskInvalidBelow) continue;
      const double z = xi[j] + (mi ? mi[j] : 0.0);
      best = std::max(best, z);
    }
    if (!std::isfinite(best)) continue;  // no valid key: row stays all-zero
    double s = 0.0;
    double* yi = &out[r * L];
    for (int64_t j = 0; j < L; ++j) {
      if (mi && mi[j] <= kMaskInvalidBelow) continue;
      yi[j] = std::exp(xi[j] + (mi ? mi[j] : 0.0) - best);
      s += yi[j];
    }
    for (int64_t j = 0; j < L; ++j) yi[j] /= s;
  }
  std::vector<Tensor> parents = {x};
  if (additive_mask.defined()) parents.push_back(additive_mask);
  return make_node("softmax_masked", nx.shape, std::move(out), std::move(parents),
                   [rows, L](Node& self) {
                     auto& p = *self.parents[0];
                     if (!p.requires_grad) return;
                     for (int64_t r = 0; r < rows; ++r) {
                       const double* y = &self.values[r * L];
                       const double* g = &self.grad[r * L];
                       double dot = 0.0;
                       for (int64_t j = 0; j < L; ++j) dot += y[j] * g[j];
                       for (int64_t j = 0; j < L; ++j) p.grad[r * L + j] += y[j] * (g[j] - dot);
                     }
                   });
}

Tensor softmax(const Tensor& x) { return softmax_masked(x, Tensor()); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  auto& nx = deref(x, "layer_norm");
  auto& ng = deref(gamma, "layer_norm");
  auto& nb = deref(beta, "layer_norm");
  const int rank = static_cast<int>(nx.shape.size());
  const int64_t C = nx.shape[rank - 1];
  if (ng.size() != C || nb.size() != C)
    fail("layer_norm", "gamma/beta length must equal last dim " + std::to_string(C));
  const int64_t rows = nx.size() / C;
  std::vector<double> out(nx.values.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = &nx.values[r * C];
    double mean = 0.0;
    for (int64_t j = 0; j < C; ++j) mean += xi[j];
    mean /= C;
    double var = 0.0;
    for (int64_t j = 0; j < C; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= C;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < C; ++j)
      out[r * C + j] = (xi[j] - mean) * inv * ng.values[j] + nb.values[j];
  }
  return make_node("layer_norm", nx.shape, std::move(out), {x, gamma, beta},
                   [rows, C, eps](Node& self) {
                     auto& px = *self.parents[0];
                     auto& pg = *self.parents[1];
                     auto& pb = *self.parents[2];
                     for (int64_t r = 0; r < rows; ++r) {
                       const double* xi = &px.values[r * C];
                       const double* g = &self.grad[r * C];
                       double mean = 0.0;
                       for (int64_t j = 0; j < C; ++j) mean += xi[j];
                       mean /= C;
                       double var = 0.0;
                       for (int64_t j = 0; j < C; ++j) var += (xi[j] - mean) * (xi[j] - mean);
                       var /= C;
                       const double inv = 1.0 / std::sqrt(var + eps);
                       double sum_gy = 0.0, sum_gyx = 0.0;
                       for (int64_t j = 0; j < C; ++j) {
                         const double xhat = (xi[j] - mean) * inv;
                         const double gy = g[j] * pg.values[j];
                         sum_gy += gy;
                         sum_gyx += gy * xhat;
                         if (pg.requires_grad) pg.grad[j] += g[j] * xhat;
                         if (pb.requires_grad) pb.grad[j] += g[j];
                       }
                       if (px.requires_grad)
                         for (int64_t j = 0; j < C; ++j) {
                           const double xhat = (xi[j] - mean) * inv;
                           const double gy = g[j] * pg.values[j];
                           px.grad[r * C + j] += inv * (gy - sum_gy / C - xhat * sum_gyx / C);
                         }
                     }
                   });
}

Tensor gelu(const Tensor& x) {
  auto& nx = deref(x, "gelu");
  std::vector<double> out(nx.values.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = nx.values[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  return make_node("gelu", nx.shape, std::move(out), {x}, [](Node& self) {
    auto& p = *self.parents[0];
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    for (size_t i = 0; i < self.values.size(); ++i) {
      const double v = p.values[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      p.grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto& nx = deref(x, "linear");
  auto& nw = deref(w, "linear");
  if (nx.shape.size() != 2 || nw.shape.size() != 2 || nx.shape[1] != nw.shape[0])
    fail("linear", "incompatible shapes " + shape_str(nx.shape) + " x " + shape_str(nw.shape));
  const int m = nx.shape[0], in = nx.shape[1], out_dim = nw.shape[1];
  const Node* nb = nullptr;
  if (b.defined()) {
    nb = b.node.get();
    if (nb->size() != out_dim) fail("linear", "bias length must equal output dim");
  }
  std::vector<double> out(static_cast<int64_t>(m) * out_dim, 0.0);
  for (int i = 0; i < m; ++i) {
    double* orow = &out[static_cast<int64_t>(i) * out_dim];
    if (nb)
      for (int j = 0; j < out_dim; ++j) orow[j] = nb->values[j];
    for (int p = 0; p < in; ++p) {
      const double xv = nx.values[static_cast<int64_t>(i) * in + p];
      if (xv == 0.0) continue;
      const double* wrow = &nw.values[static_cast<int64_t>(p) * out_dim];
      for (int j = 0; j < out_dim; ++j) orow[j] += xv * wrow[j];
    }
  }
  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  return make_node("linear", {m, out_dim}, std::move(out), std::move(parents),
                   [m, in, out_dim](Node& self) {
                     auto& px = *self.parents[0];
                     auto& pw = *self.parents[1];
                     Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
                     for (int i = 0; i < m; ++i) {
                       const double* g = &self.grad[static_cast<int64_t>(i) * out_dim];
                       if (px.requires_grad)
                         for (int p = 0; p < in; ++p) {
                           double acc = 0.0;
                           const double* wrow = &pw.values[static_cast<int64_t>(p) * out_dim];
                           for (int j = 0; j < out_dim; ++j) acc += g[j] * wrow[j];
                           px.grad[static_cast<int64_t>(i) * in + p] += acc;
                         }
                       if (pw.requires_grad)
                         for (int p = 0; p < in; ++p) {
                           const double xv = px.values[static_cast<int64_t>(i) * in + p];
                           if (xv == 0.0) continue;
                           double* wg = &pw.grad[static_cast<int64_t>(p) * out_dim];
                           for (int j = 0; j < out_dim; ++j) wg[j] += xv * g[j];
                         }
                       if (pb && pb->requires_grad)
                         for (int j = 0; j < out_dim; ++j) pb->grad[j] += g[j];
                     }
                   });
}

Tensor conv2d_3x3_s2(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto& nx = deref(x, "conv2d_3x3_s2");
  auto& nw = deref(w, "conv2d_3x3_s2");
  auto& nb = deref(b, "conv2d_3x3_s2");
  if (nx.shape.size() != 3) fail("conv2d_3x3_s2", "input must be [C,H,W], got " + shape_str(nx.shape));
  if (nw.shape.size() != 4 || nw.shape[2] != 3 || nw.shape[3] != 3 || nw.shape[1] != nx.shape[0])
    fail("conv2d_3x3_s2", "weight must be [Cout," + std::to_string(nx.shape[0]) + ",3,3], got " +
                              shape_str(nw.shape));
  const int cin = nx.shape[0], h = nx.shape[1], wdt = nx.shape[2];
  const int cout = nw.shape[0];
  if (nb.size() != cout) fail("conv2d_3x3_s2", "bias length must equal Cout");
  const int oh = (h - 1) / 2 + 1, ow = (wdt - 1) / 2 + 1;

  auto xat = [&](const std::vector<double>& v, int c, int i, int j) -> double {
    if (i < 0 || i >= h || j < 0 || j >= wdt) return 0.0;
    return v[(static_cast<int64_t>(c) * h + i) * wdt + j];
  };
  std::vector<double> out(static_cast<int64_t>(cout) * oh * ow);
  for (int co = 0; co < cout; ++co)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = nb.values[co];
        for (int ci = 0; ci < cin; ++ci)
          for (int di = 0; di < 3; ++di)
            for (int dj = 0; dj < 3; ++dj)
              acc += nw.values[((static_cast<int64_t>(co) * cin + ci) * 3 + di) * 3 + dj] *
                     xat(nx.values, ci, 2 * i - 1 + di, 2 * j - 1 + dj);
        out[(static_cast<int64_t>(co) * oh + i) * ow + j] = acc;
      }
  return make_node(
      "conv2d_3x3_s2", {cout, oh, ow}, std::move(out), {x, w, b},
      [cin, h, wdt, cout, oh, ow](Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        for (int co = 0; co < cout; ++co)
          for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
              const double g = self.grad[(static_cast<int64_t>(co) * oh + i) * ow + j];
              if (g == 0.0) continue;
              if (pb.requires_grad) pb.grad[co] += g;
              for (int ci = 0; ci < cin; ++ci)
                for (int di = 0; di < 3; ++di)
                  for (int dj = 0; dj < 3; ++dj) {
                    const int ii = 2 * i - 1 + di, jj = 2 * j - 1 + dj;
                    if (ii < 0 || ii >= h || jj < 0 || jj >= wdt) continue;
                    const int64_t xoff = (static_cast<int64_t>(ci) * h + ii) * wdt + jj;
                    const int64_t woff = ((static_cast<int64_t>(co) * cin + ci) * 3 + di) * 3 + dj;
                    if (pw.requires_grad) pw.grad[woff] += g * px.values[xoff];
                    if (px.requires_grad) px.grad[xoff] += g * pw.values[woff];
                  }
            }
      });
}

Tensor max_over_axis(const Tensor& a, int axis) {
  auto& na = deref(a, "max_over_axis");
  const int rank = static_cast<int>(na.shape.size());
  if (axis < 0 || axis >= rank) fail("max_over_axis", "axis out of range");
  int64_t outer, n, inner;
  axis_strides(na.shape, axis, outer, n, inner);
  std::vector<int> out_shape;
  for (int i = 0; i < rank; ++i)
    if (i != axis) out_shape.push_back(na.shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner);
  std::vector<int64_t> arg(outer * inner);  // ties keep the lowest index
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      double best = na.values[o * n * inner + i];
      int64_t bj = 0;
      for (int64_t j = 1; j < n; ++j) {
        const double v = na.values[(o * n + j) * inner + i];
        if (v > best) {
          best = v;
          bj = j;
        }
      }
      out[o * inner + i] = best;
      arg[o * inner + i] = bj;
    }
  return make_node("max_over_axis", out_shape, std::move(out), {a},
                   [outer, n, inner, arg = std::move(arg)](Node& self) {
                     auto& p = *self.parents[0];
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t i = 0; i < inner; ++i)
                         p.grad[(o * n + arg[o * inner + i]) * inner + i] += self.grad[o * inner + i];
                   });
}

Tensor mean_over_axis(const Tensor& a, int axis) {
  auto& na = deref(a, "mean_over_axis");
  const int rank = static_cast<int>(na.shape.size());
  if (axis < 0 || axis >= rank) fail("mean_over_axis", "axis out of range");
  int64_t outer, n, inner;
  axis_strides(na.shape, axis, outer, n, inner);
  std::vector<int> out_shape;
  for (int i = 0; i < rank; ++i)
    if (i != axis) out_shape.push_back(na.shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += na.values[(o * n + j) * inner + i];
  for (auto& v : out) v /= static_cast<double>(n);
  return make_node("mean_over_axis", out_shape, std::move(out), {a},
                   [outer, n, inner](Node& self) {
                     auto& p = *self.parents[0];
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t j = 0; j < n; ++j)
                         for (int64_t i = 0; i < inner; ++i)
                           p.grad[(o * n + j) * inner + i] +=
                               self.grad[o * inner + i] / static_cast<double>(n);
                   });
}

Tensor sum_all(const Tensor& a) {
  auto& na = deref(a, "sum_all");
  double s = 0.0;
  for (double v : na.values) s += v;
  return make_node("sum_all", {1}, {s}, {a}, [](Node& self) {
    auto& p = *self.parents[0];
    const double g = self.grad[0];
    for (auto& pg : p.grad) pg += g;
  });
}

Tensor squared_error_reduce(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "squared_error_reduce");
  auto& nb = deref(b, "squared_error_reduce");
  if (na.shape != nb.shape)
    fail("squared_error_reduce",
         "shape mismatch " + shape_str(na.shape) + " vs " + shape_str(nb.shape));
  const double n = static_cast<double>(na.size());
  double s = 0.0;
  for (size_t i = 0; i < na.values.size(); ++i) {
    const double d = na.values[i] - nb.values[i];
    s += d * d;
  }
  return make_node("squared_error_reduce", {1}, {s / n}, {a, b}, [n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double g = self.grad[0];
    for (size_t i = 0; i < pa.values.size(); ++i) {
      const double d = 2.0 * (pa.values[i] - pb.values[i]) / n * g;
      if (pa.requires_grad) pa.grad[i] += d;
      if (pb.requires_grad) pb.grad[i] -= d;
    }
  });
}

Tensor custom_op(const char* op, std::vector<int> shape, std::vector<double> values,
                 std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
  return make_node(op, std::move(shape), std::move(values), std::move(parents),
                   std::move(backward));
}

}  // namespace jmae
