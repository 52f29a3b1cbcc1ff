#pragma once

// Reverse-mode differentiation over a recorded tape (define-by-run).
// Values are appended in topological order during the forward pass;
// backward walks the records in reverse, so gradient accumulation order
// is fixed and two identical runs produce bit-identical gradients.

#include <cstdint>
#include <functional>
#include <utility>
#include <string>
#include <unordered_map>
#include <vector>

#include "xunit/nn.hpp"
#include "xunit/ops.hpp"
#include "xunit/rng.hpp"
#include "xunit/tensor.hpp"

namespace xunit {

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;
  bool trainable = true;
};

// Named, ordered collection of learnable tensors with matching grad slots.
// Iteration order is declaration order.
template <typename T>
class ParamStore {
 public:
  int add(const std::string& name, Tensor4<T> value, bool trainable = true) {
    if (index_.count(name))
      throw SpecError("ParamStore: duplicate parameter name '" + name + "'");
    ParamEntry<T> e;
    e.name = name;
    e.grad = Tensor4<T>(value.n, value.c, value.h, value.w);
    e.value = std::move(value);
    e.trainable = trainable;
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return static_cast<int>(entries_.size()) - 1;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  int require(const std::string& name) const {
    int i = find(name);
    if (i < 0) throw SpecError("ParamStore: no parameter named '" + name + "'");
    return i;
  }

  ParamEntry<T>& operator[](int i) { return entries_[i]; }
  const ParamEntry<T>& operator[](int i) const { return entries_[i]; }
  int size() const { return static_cast<int>(entries_.size()); }

  void zero_grads() {
    for (auto& e : entries_)
      std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
  }

  long trainable_scalars() const {
    long n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += static_cast<long>(e.value.size());
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, int> index_;
};

enum class OpKind {
  Leaf,
  Conv,
  Depthwise,
  Hadamard,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  Gauss,
  BatchNorm,
  Mse,
  Sum,
};

template <typename T>
class Tape {
 public:
  using Id = int;

  // --- leaves ---------------------------------------------------------

  Id leaf(Tensor4<T> v, bool want_grad = false) {
    Node n;
    n.op = OpKind::Leaf;
    n.requires_grad = want_grad;
    return push(std::move(n), std::move(v));
  }

  // Leaf bound to a ParamStore entry; backward scatters into its grad slot.
  Id param(ParamStore<T>& store, int entry) {
    bind_store(store);
    if (entry < 0 || entry >= store.size())
      throw GraphError("Tape::param: bad store entry " + std::to_string(entry));
    auto it = param_ids_.find(entry);
    if (it != param_ids_.end()) return it->second;
    Node n;
    n.op = OpKind::Leaf;
    n.param_index = entry;
    n.requires_grad = store[entry].trainable;
    Id id = push(std::move(n), store[entry].value);
    param_ids_[entry] = id;
    return id;
  }

  Id param(ParamStore<T>& store, const std::string& name) {
    return param(store, store.require(name));
  }

  // --- recorded primitives ---------------------------------------------

  Id conv(Id x, Id weight, Id bias, int pad) {
    check(x); check(weight);
    if (bias >= 0) check(bias);
    Node n;
    n.op = OpKind::Conv;
    n.a = x; n.b = weight; n.c = bias;
    n.pad = pad;
    return push_compute(std::move(n));
  }

  Id depthwise(Id x, Id weight, int pad) {
    check(x); check(weight);
    Node n;
    n.op = OpKind::Depthwise;
    n.a = x; n.b = weight;
    n.pad = pad;
    return push_compute(std::move(n));
  }

  Id hadamard(Id a, Id b) { return binary(OpKind::Hadamard, a, b); }
  Id add(Id a, Id b) { return binary(OpKind::Add, a, b); }
  Id sub(Id a, Id b) { return binary(OpKind::Sub, a, b); }
  Id mul(Id a, Id b) { return binary(OpKind::Mul, a, b); }

  Id scale(Id a, T s) {
    check(a);
    Node n;
    n.op = OpKind::Scale;
    n.a = a;
    n.scalar = s;
    return push_compute(std::move(n));
  }

  Id relu(Id x) { return unary(OpKind::Relu, x); }
  Id gauss(Id d) { return unary(OpKind::Gauss, d); }

  // Running statistics live in the bound ParamStore as non-trainable
  // entries; train mode updates them in place at record time.
  Id batchnorm(Id x, Id gamma, Id beta, int rmean_entry, int rvar_entry, bool train,
               T eps = T(1e-5), T momentum = T(0.1)) {
    check(x); check(gamma); check(beta);
    if (!store_) throw GraphError("Tape::batchnorm: no ParamStore bound");
    Node n;
    n.op = OpKind::BatchNorm;
    n.a = x; n.b = gamma; n.c = beta;
    n.buf_mean = rmean_entry;
    n.buf_var = rvar_entry;
    n.train = train;
    n.scalar = eps;
    n.scalar2 = momentum;
    return push_compute(std::move(n));
  }

  Id mse(Id pred, Id target) { return binary(OpKind::Mse, pred, target); }
  Id sum(Id x) { return unary(OpKind::Sum, x); }

  // --- access -----------------------------------------------------------

  const Tensor4<T>& value(Id id) const {
    check(id);
    return values_[id];
  }

  T scalar_value(Id id) const {
    const Tensor4<T>& v = value(id);
    if (v.size() != 1) throw GraphError("scalar_value: value is not scalar");
    return v.data[0];
  }

  int size() const { return static_cast<int>(values_.size()); }

  // --- backward ----------------------------------------------------------

  void backward(Id root, const Tensor4<T>& seed) {
    check(root);
    require_same_shape(values_[root], seed, "backward seed");
    grads_.assign(values_.size(), Tensor4<T>());
    has_grad_.assign(values_.size(), 0);
    accumulate(root, seed);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!has_grad_[id] || !n.requires_grad || n.op == OpKind::Leaf) continue;
      dispatch_backward(id);
      // interior gradients are no longer needed once distributed
      grads_[id] = Tensor4<T>();
      has_grad_[id] = 0;
    }
    for (auto& [entry, id] : param_ids_) {
      if (!has_grad_[id]) continue;
      Tensor4<T>& dst = (*store_)[entry].grad;
      const Tensor4<T>& src = grads_[id];
      for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
    }
  }

  void backward_scalar(Id root, T seed = T(1)) {
    Tensor4<T> s(1, 1, 1, 1, seed);
    backward(root, s);
  }

  // Gradient accumulated at a leaf (valid after backward).
  Tensor4<T> grad(Id id) const {
    check(id);
    if (id < static_cast<int>(has_grad_.size()) && has_grad_[id]) return grads_[id];
    const Tensor4<T>& v = values_[id];
    return Tensor4<T>(v.n, v.c, v.h, v.w);
  }

  // Recompute every value from the leaves; returns the max absolute
  // difference against the recorded values (0 means bit-exact replay).
  T replay_max_diff() {
    std::vector<Tensor4<T>> recorded = values_;
    for (Id id = 0; id < size(); ++id) {
      if (nodes_[id].op == OpKind::Leaf) continue;
      values_[id] = compute(nodes_[id], /*update_buffers=*/false);
    }
    T maxd = T(0);
    for (Id id = 0; id < size(); ++id)
      for (size_t i = 0; i < values_[id].size(); ++i) {
        T d = values_[id].data[i] - recorded[id].data[i];
        if (d < 0) d = -d;
        if (d > maxd) maxd = d;
      }
    values_ = std::move(recorded);
    return maxd;
  }

  // Test hook: scales the ReLU backward pass so verification tooling can
  // prove it detects a broken gradient.
  void inject_backward_fault(T factor) { relu_bwd_scale_ = factor; }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    Id a = -1, b = -1, c = -1;
    T scalar = T(0);   // Scale factor / BN eps
    T scalar2 = T(0);  // BN momentum
    int pad = 0;
    int buf_mean = -1, buf_var = -1;  // BN running-stat store entries
    bool train = false;
    int param_index = -1;
    bool requires_grad = false;
    std::vector<T> mean, invstd;  // BN statistics used at forward time
  };

  void check(Id id) const {
    if (id < 0 || id >= static_cast<int>(values_.size()))
      throw GraphError("Tape: unknown value id " + std::to_string(id));
  }

  void bind_store(ParamStore<T>& store) {
    if (store_ && store_ != &store)
      throw GraphError("Tape: already bound to a different ParamStore");
    store_ = &store;
  }

  Id binary(OpKind op, Id a, Id b) {
    check(a); check(b);
    Node n;
    n.op = op;
    n.a = a; n.b = b;
    return push_compute(std::move(n));
  }

  Id unary(OpKind op, Id a) {
    check(a);
    Node n;
    n.op = op;
    n.a = a;
    return push_compute(std::move(n));
  }

  Id push(Node n, Tensor4<T> v) {
    nodes_.push_back(std::move(n));
    values_.push_back(std::move(v));
    return static_cast<int>(values_.size()) - 1;
  }

  Id push_compute(Node n) {
    n.requires_grad = inputs_require(n);
    Tensor4<T> v = compute(n, /*update_buffers=*/true);
    return push(std::move(n), std::move(v));
  }

  bool inputs_require(const Node& n) const {
    for (Id id : {n.a, n.b, n.c})
      if (id >= 0 && nodes_[id].requires_grad) return true;
    return false;
  }

  static ConvKernel<T> as_conv_kernel(const Tensor4<T>& t) {
    ConvKernel<T> k(t.n, t.c, t.h, t.w);
    k.data = t.data;
    return k;
  }

  static DepthwiseKernel<T> as_dw_kernel(const Tensor4<T>& t) {
    if (t.c != 1)
      throw DimensionError("depthwise weight must have shape (channels,1,kh,kw)");
    DepthwiseKernel<T> k(t.n, t.h, t.w);
    k.data = t.data;
    return k;
  }

  Tensor4<T> compute(Node& n, bool update_buffers) {
    switch (n.op) {
      case OpKind::Conv: {
        ConvKernel<T> k = as_conv_kernel(values_[n.b]);
        if (n.c >= 0) {
          std::vector<T> bias = values_[n.c].data;
          return conv2d(values_[n.a], k, &bias, n.pad);
        }
        return conv2d(values_[n.a], k, nullptr, n.pad);
      }
      case OpKind::Depthwise:
        return depthwise_conv2d(values_[n.a], as_dw_kernel(values_[n.b]), n.pad);
      case OpKind::Hadamard:
      case OpKind::Mul:
        return xunit::hadamard(values_[n.a], values_[n.b]);
      case OpKind::Add:
        return elementwise(values_[n.a], values_[n.b], EwOp::Add);
      case OpKind::Sub:
        return elementwise(values_[n.a], values_[n.b], EwOp::Sub);
      case OpKind::Scale:
        return xunit::scale(values_[n.a], n.scalar);
      case OpKind::Relu:
        return xunit::relu(values_[n.a]);
      case OpKind::Gauss:
        return gaussian_gate(values_[n.a]);
      case OpKind::BatchNorm:
        return compute_batchnorm(n, update_buffers);
      case OpKind::Mse: {
        require_same_shape(values_[n.a], values_[n.b], "mse");
        const Tensor4<T>& p = values_[n.a];
        const Tensor4<T>& t = values_[n.b];
        T acc = T(0);
        for (size_t i = 0; i < p.size(); ++i) {
          const T d = p.data[i] - t.data[i];
          acc += d * d;
        }
        return Tensor4<T>(1, 1, 1, 1, acc / static_cast<T>(p.size()));
      }
      case OpKind::Sum: {
        T acc = T(0);
        for (T v : values_[n.a].data) acc += v;
        return Tensor4<T>(1, 1, 1, 1, acc);
      }
      case OpKind::Leaf:
        break;
    }
    throw GraphError("Tape: cannot compute leaf");
  }

  Tensor4<T> compute_batchnorm(Node& n, bool update_buffers) {
    const Tensor4<T>& x = values_[n.a];
    const std::vector<T>& gamma = values_[n.b].data;
    const std::vector<T>& beta = values_[n.c].data;
    if (static_cast<int>(gamma.size()) != x.c)
      throw DimensionError("batchnorm: input has " + std::to_string(x.c) +
                           " channels, gamma has " + std::to_string(gamma.size()));
    if (n.train) {
      if (static_cast<long>(x.n) * x.h * x.w < 2)
        throw DimensionError("batchnorm: train mode needs n*h*w >= 2");
      std::vector<T> var;
      detail::bn_batch_stats(x, n.mean, var);
      n.invstd.resize(x.c);
      for (int ic = 0; ic < x.c; ++ic)
        n.invstd[ic] = T(1) / std::sqrt(var[ic] + n.scalar);
      if (update_buffers) {
        std::vector<T>& rm = (*store_)[n.buf_mean].value.data;
        std::vector<T>& rv = (*store_)[n.buf_var].value.data;
        for (int ic = 0; ic < x.c; ++ic) {
          rm[ic] = (T(1) - n.scalar2) * rm[ic] + n.scalar2 * n.mean[ic];
          rv[ic] = (T(1) - n.scalar2) * rv[ic] + n.scalar2 * var[ic];
        }
      }
    } else if (n.mean.empty()) {
      // capture the running stats in use so replay is reproducible
      const std::vector<T>& rm = (*store_)[n.buf_mean].value.data;
      const std::vector<T>& rv = (*store_)[n.buf_var].value.data;
      n.mean = rm;
      n.invstd.resize(x.c);
      for (int ic = 0; ic < x.c; ++ic)
        n.invstd[ic] = T(1) / std::sqrt(rv[ic] + n.scalar);
    }
    return detail::bn_apply(x, n.mean.data(), n.invstd.data(), gamma.data(),
                            beta.data());
  }

  // takes ownership so the common first-touch case is a move, not a copy
  void accumulate(Id id, Tensor4<T> g) {
    if (!nodes_[id].requires_grad) return;
    if (!has_grad_[id]) {
      grads_[id] = std::move(g);
      has_grad_[id] = 1;
      return;
    }
    Tensor4<T>& dst = grads_[id];
    for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += g.data[i];
  }

  void dispatch_backward(Id id) {
    Node& n = nodes_[id];
    const Tensor4<T>& dy = grads_[id];
    switch (n.op) {
      case OpKind::Conv: {
        ConvKernel<T> k = as_conv_kernel(values_[n.b]);
        const bool need_dx = nodes_[n.a].requires_grad;
        auto g = conv2d_backward(dy, values_[n.a], k, n.c >= 0, n.pad, need_dx);
        if (need_dx) accumulate(n.a, std::move(g.dx));
        if (nodes_[n.b].requires_grad) {
          Tensor4<T> dk(k.oc, k.ic, k.kh, k.kw);
          dk.data = std::move(g.dkernel.data);
          accumulate(n.b, std::move(dk));
        }
        if (n.c >= 0 && nodes_[n.c].requires_grad) {
          Tensor4<T> db(1, k.oc, 1, 1);
          db.data = std::move(g.dbias);
          accumulate(n.c, std::move(db));
        }
        break;
      }
      case OpKind::Depthwise: {
        DepthwiseKernel<T> k = as_dw_kernel(values_[n.b]);
        const bool need_dx = nodes_[n.a].requires_grad;
        auto g = depthwise_backward(dy, values_[n.a], k, n.pad, need_dx);
        if (need_dx) accumulate(n.a, std::move(g.dx));
        if (nodes_[n.b].requires_grad) {
          Tensor4<T> dk(k.c, 1, k.kh, k.kw);
          dk.data = std::move(g.dkernel.data);
          accumulate(n.b, std::move(dk));
        }
        break;
      }
      case OpKind::Hadamard:
      case OpKind::Mul:
        if (nodes_[n.a].requires_grad)
          accumulate(n.a, xunit::hadamard(dy, values_[n.b]));
        if (nodes_[n.b].requires_grad)
          accumulate(n.b, xunit::hadamard(dy, values_[n.a]));
        break;
      case OpKind::Add:
        if (nodes_[n.a].requires_grad) accumulate(n.a, dy);
        if (nodes_[n.b].requires_grad) accumulate(n.b, dy);
        break;
      case OpKind::Sub:
        if (nodes_[n.a].requires_grad) accumulate(n.a, dy);
        if (nodes_[n.b].requires_grad) accumulate(n.b, xunit::scale(dy, T(-1)));
        break;
      case OpKind::Scale:
        if (nodes_[n.a].requires_grad) accumulate(n.a, xunit::scale(dy, n.scalar));
        break;
      case OpKind::Relu: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor4<T>& x = values_[n.a];
        Tensor4<T> dx(x.n, x.c, x.h, x.w);
        for (size_t i = 0; i < x.size(); ++i)
          dx.data[i] = x.data[i] > T(0) ? dy.data[i] * relu_bwd_scale_ : T(0);
        accumulate(n.a, std::move(dx));
        break;
      }
      case OpKind::Gauss: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor4<T>& d = values_[n.a];
        const Tensor4<T>& g = values_[id];
        Tensor4<T> dd(d.n, d.c, d.h, d.w);
        for (size_t i = 0; i < d.size(); ++i)
          dd.data[i] = dy.data[i] * T(-2) * d.data[i] * g.data[i];
        accumulate(n.a, std::move(dd));
        break;
      }
      case OpKind::BatchNorm: {
        auto g = detail::bn_backward(dy, values_[n.a], n.mean, n.invstd,
                                     values_[n.b].data.data(), n.train);
        if (nodes_[n.a].requires_grad) accumulate(n.a, std::move(g.dx));
        if (nodes_[n.b].requires_grad) {
          Tensor4<T> dg(1, values_[n.a].c, 1, 1);
          dg.data = std::move(g.dgamma);
          accumulate(n.b, std::move(dg));
        }
        if (nodes_[n.c].requires_grad) {
          Tensor4<T> db(1, values_[n.a].c, 1, 1);
          db.data = std::move(g.dbeta);
          accumulate(n.c, std::move(db));
        }
        break;
      }
      case OpKind::Mse: {
        const Tensor4<T>& p = values_[n.a];
        const Tensor4<T>& t = values_[n.b];
        const T s = dy.data[0] * T(2) / static_cast<T>(p.size());
        if (nodes_[n.a].requires_grad) {
          Tensor4<T> dp(p.n, p.c, p.h, p.w);
          for (size_t i = 0; i < p.size(); ++i)
            dp.data[i] = s * (p.data[i] - t.data[i]);
          accumulate(n.a, std::move(dp));
        }
        if (nodes_[n.b].requires_grad) {
          Tensor4<T> dt(p.n, p.c, p.h, p.w);
          for (size_t i = 0; i < p.size(); ++i)
            dt.data[i] = -s * (p.data[i] - t.data[i]);
          accumulate(n.b, std::move(dt));
        }
        break;
      }
      case OpKind::Sum: {
        if (!nodes_[n.a].requires_grad) break;
        const Tensor4<T>& x = values_[n.a];
        Tensor4<T> dx(x.n, x.c, x.h, x.w, dy.data[0]);
        accumulate(n.a, std::move(dx));
        break;
      }
      case OpKind::Leaf:
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<Tensor4<T>> values_;
  std::vector<Tensor4<T>> grads_;
  std::vector<char> has_grad_;
  std::unordered_map<int, Id> param_ids_;
  ParamStore<T>* store_ = nullptr;
  T relu_bwd_scale_ = T(1);
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

// f builds a scalar-valued computation from a leaf id on a fresh tape.
// Compares the analytic gradient at `point` against central differences on
// up to `max_coords` coordinates (all of them when the tensor is small).
// Returns max over coordinates of |a - n| / max(|a|, |n|, 1e-8).
template <typename F>
double grad_check(F&& f, const Tensor4<double>& point, double epsilon = 1e-5,
                  int max_coords = 200, uint64_t seed = 0) {
  if (epsilon <= 0) throw SpecError("grad_check: epsilon must be positive");
  Tensor4<double> analytic;
  {
    Tape<double> tape;
    auto x = tape.leaf(point, /*want_grad=*/true);
    auto root = f(tape, x);
    if (tape.value(root).size() != 1)
      throw SpecError("grad_check: f must be scalar-valued");
    tape.backward_scalar(root, 1.0);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor4<double>& p) {
    Tape<double> tape;
    auto x = tape.leaf(p);
    return tape.scalar_value(f(tape, x));
  };
  const size_t total = point.size();
  std::vector<size_t> coords;
  if (total <= static_cast<size_t>(max_coords)) {
    coords.resize(total);
    for (size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    Rng rng(seed ^ 0x67e4d7c5a3b2f101ULL);
    coords.resize(std::max(100, max_coords));
    for (auto& c : coords) c = rng.next_below(total);
  }
  double max_err = 0.0;
  Tensor4<double> p = point;
  for (size_t ci : coords) {
    const double orig = p.data[ci];
    p.data[ci] = orig + epsilon;
    const double fp = eval(p);
    p.data[ci] = orig - epsilon;
    const double fm = eval(p);
    p.data[ci] = orig;
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double a = analytic.data[ci];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_err = std::max(max_err, std::abs(a - numeric) / denom);
  }
  return max_err;
}

// Same check, but against the gradients of every trainable entry of a
// ParamStore. f builds the scalar loss on a fresh tape using the store.
template <typename F>
double grad_check_params(F&& f, ParamStore<double>& store, double epsilon = 1e-5,
                         int max_coords_per_param = 40, uint64_t seed = 0) {
  store.zero_grads();
  {
    Tape<double> tape;
    auto root = f(tape);
    if (tape.value(root).size() != 1)
      throw SpecError("grad_check_params: f must be scalar-valued");
    tape.backward_scalar(root, 1.0);
  }
  auto eval = [&]() {
    Tape<double> tape;
    return tape.scalar_value(f(tape));
  };
  Rng rng(seed ^ 0x51ab3c92ef04d68bULL);
  double max_err = 0.0;
  for (int e = 0; e < store.size(); ++e) {
    if (!store[e].trainable) continue;
    const Tensor4<double> saved_grad = store[e].grad;
    const size_t total = store[e].value.size();
    std::vector<size_t> coords;
    if (total <= static_cast<size_t>(max_coords_per_param)) {
      coords.resize(total);
      for (size_t i = 0; i < total; ++i) coords[i] = i;
    } else {
      coords.resize(max_coords_per_param);
      for (auto& c : coords) c = rng.next_below(total);
    }
    for (size_t ci : coords) {
      const double orig = store[e].value.data[ci];
      store[e].value.data[ci] = orig + epsilon;
      const double fp = eval();
      store[e].value.data[ci] = orig - epsilon;
      const double fm = eval();
      store[e].value.data[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = saved_grad.data[ci];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace xunit
