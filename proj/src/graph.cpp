#include "step/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace step {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MMap = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

// Scratch reused across convolutions; grows monotonically.
thread_local std::vector<real> g_col_buf;
thread_local std::vector<real> g_col_buf2;

std::vector<std::size_t> strides_of(const std::vector<int>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// conv2d core: x [N,CI,T,V] (*) w [CO,CI,KT,KV] with zero padding, stride 1.

struct ConvDims {
  int n, ci, t, v, co, kt, kv, to, vo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int pt, int pv,
                   bool transposed_weights) {
  check_shape(x.rank() == 4, "conv input must be rank 4, got " + x.shape_str());
  check_shape(w.rank() == 4, "conv kernel must be rank 4, got " + w.shape_str());
  ConvDims d;
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.t = x.dim(2);
  d.v = x.dim(3);
  if (transposed_weights) {  // [CI,CO,KT,KV]
    check_shape(w.dim(0) == d.ci, "transposed conv kernel expects " +
                                      std::to_string(d.ci) + " input channels, got " +
                                      w.shape_str());
    d.co = w.dim(1);
  } else {  // [CO,CI,KT,KV]
    check_shape(w.dim(1) == d.ci, "conv kernel expects " + std::to_string(d.ci) +
                                      " input channels, got " + w.shape_str());
    d.co = w.dim(0);
  }
  d.kt = w.dim(2);
  d.kv = w.dim(3);
  check_value(pt >= 0 && pv >= 0, "conv padding must be non-negative");
  d.to = d.t + 2 * pt - d.kt + 1;
  d.vo = d.v + 2 * pv - d.kv + 1;
  check_shape(d.to >= 1 && d.vo >= 1,
              "conv output would be empty for input " + x.shape_str());
  return d;
}

// buf holds [CI*KT*KV, TO*VO] for one batch item.
void im2col(const real* x, const ConvDims& d, int pt, int pv, real* buf) {
  const int cols = d.to * d.vo;
  for (int ci = 0; ci < d.ci; ++ci) {
    const real* plane = x + static_cast<std::size_t>(ci) * d.t * d.v;
    for (int kt = 0; kt < d.kt; ++kt) {
      for (int kv = 0; kv < d.kv; ++kv) {
        real* row = buf + (static_cast<std::size_t>(ci) * d.kt * d.kv +
                           kt * d.kv + kv) *
                              cols;
        if (d.kv == 1 && pv == 0) {
          // Joint axis untouched: each output frame is a contiguous copy.
          for (int to = 0; to < d.to; ++to) {
            int t = to + kt - pt;
            if (t >= 0 && t < d.t) {
              std::memcpy(row + static_cast<std::size_t>(to) * d.v,
                          plane + static_cast<std::size_t>(t) * d.v,
                          sizeof(real) * static_cast<std::size_t>(d.v));
            } else {
              std::memset(row + static_cast<std::size_t>(to) * d.v, 0,
                          sizeof(real) * static_cast<std::size_t>(d.v));
            }
          }
        } else {
          for (int to = 0; to < d.to; ++to) {
            int t = to + kt - pt;
            for (int vo = 0; vo < d.vo; ++vo) {
              int v = vo + kv - pv;
              row[static_cast<std::size_t>(to) * d.vo + vo] =
                  (t >= 0 && t < d.t && v >= 0 && v < d.v)
                      ? plane[static_cast<std::size_t>(t) * d.v + v]
                      : real(0);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const real* buf, const ConvDims& d, int pt, int pv, real* gx) {
  const int cols = d.to * d.vo;
  for (int ci = 0; ci < d.ci; ++ci) {
    real* plane = gx + static_cast<std::size_t>(ci) * d.t * d.v;
    for (int kt = 0; kt < d.kt; ++kt) {
      for (int kv = 0; kv < d.kv; ++kv) {
        const real* row = buf + (static_cast<std::size_t>(ci) * d.kt * d.kv +
                                 kt * d.kv + kv) *
                                    cols;
        for (int to = 0; to < d.to; ++to) {
          int t = to + kt - pt;
          if (t < 0 || t >= d.t) continue;
          for (int vo = 0; vo < d.vo; ++vo) {
            int v = vo + kv - pv;
            if (v < 0 || v >= d.v) continue;
            plane[static_cast<std::size_t>(t) * d.v + v] +=
                row[static_cast<std::size_t>(to) * d.vo + vo];
          }
        }
      }
    }
  }
}

void conv2d_forward(const Tensor& x, const Tensor& w, int pt, int pv,
                    Tensor& y) {
  ConvDims d = conv_dims(x, w, pt, pv, false);
  y = Tensor({d.n, d.co, d.to, d.vo});
  const int cols = d.to * d.vo;
  if (d.kt == 1 && d.kv == 1 && pt == 0 && pv == 0) {
    CMap wm(w.data(), d.co, d.ci);
    for (int n = 0; n < d.n; ++n) {
      CMap xm(x.data() + static_cast<std::size_t>(n) * d.ci * d.t * d.v, d.ci,
              cols);
      MMap ym(y.data() + static_cast<std::size_t>(n) * d.co * cols, d.co, cols);
      ym.noalias() = wm * xm;
    }
    return;
  }
  const int rows = d.ci * d.kt * d.kv;
  g_col_buf.resize(static_cast<std::size_t>(rows) * cols);
  CMap wm(w.data(), d.co, rows);
  for (int n = 0; n < d.n; ++n) {
    im2col(x.data() + static_cast<std::size_t>(n) * d.ci * d.t * d.v, d, pt, pv,
           g_col_buf.data());
    CMap cm(g_col_buf.data(), rows, cols);
    MMap ym(y.data() + static_cast<std::size_t>(n) * d.co * cols, d.co, cols);
    ym.noalias() = wm * cm;
  }
}

// Accumulates into gx/gw when non-null; both must be pre-sized and zeroed
// (or hold earlier contributions).
void conv2d_backward(const Tensor& x, const Tensor& w, int pt, int pv,
                     const Tensor& gy, Tensor* gx, Tensor* gw) {
  ConvDims d = conv_dims(x, w, pt, pv, false);
  const int cols = d.to * d.vo;
  const int rows = d.ci * d.kt * d.kv;
  if (d.kt == 1 && d.kv == 1 && pt == 0 && pv == 0) {
    CMap wm(w.data(), d.co, d.ci);
    for (int n = 0; n < d.n; ++n) {
      std::size_t xoff = static_cast<std::size_t>(n) * d.ci * cols;
      std::size_t yoff = static_cast<std::size_t>(n) * d.co * cols;
      CMap gym(gy.data() + yoff, d.co, cols);
      if (gw) {
        CMap xm(x.data() + xoff, d.ci, cols);
        MMap gwm(gw->data(), d.co, d.ci);
        gwm.noalias() += gym * xm.transpose();
      }
      if (gx) {
        MMap gxm(gx->data() + xoff, d.ci, cols);
        gxm.noalias() += wm.transpose() * gym;
      }
    }
    return;
  }
  g_col_buf.resize(static_cast<std::size_t>(rows) * cols);
  g_col_buf2.resize(static_cast<std::size_t>(rows) * cols);
  CMap wm(w.data(), d.co, rows);
  for (int n = 0; n < d.n; ++n) {
    std::size_t xoff = static_cast<std::size_t>(n) * d.ci * d.t * d.v;
    std::size_t yoff = static_cast<std::size_t>(n) * d.co * cols;
    CMap gym(gy.data() + yoff, d.co, cols);
    if (gw) {
      im2col(x.data() + xoff, d, pt, pv, g_col_buf.data());
      CMap cm(g_col_buf.data(), rows, cols);
      MMap gwm(gw->data(), d.co, rows);
      gwm.noalias() += gym * cm.transpose();
    }
    if (gx) {
      MMap gm(g_col_buf2.data(), rows, cols);
      gm.noalias() = wm.transpose() * gym;
      col2im_add(g_col_buf2.data(), d, pt, pv, gx->data() + xoff);
    }
  }
}

// Transposed conv == conv with channel-swapped, spatially flipped kernel and
// complementary padding.
Tensor flip_kernel(const Tensor& w) {
  int ci = w.dim(0), co = w.dim(1), kt = w.dim(2), kv = w.dim(3);
  Tensor wf({co, ci, kt, kv});
  for (int a = 0; a < ci; ++a)
    for (int b = 0; b < co; ++b)
      for (int s = 0; s < kt; ++s)
        for (int r = 0; r < kv; ++r)
          wf.at4(b, a, s, r) = w.at4(a, b, kt - 1 - s, kv - 1 - r);
  return wf;
}

void unflip_kernel_add(const Tensor& gwf, Tensor& gw) {
  int ci = gw.dim(0), co = gw.dim(1), kt = gw.dim(2), kv = gw.dim(3);
  for (int a = 0; a < ci; ++a)
    for (int b = 0; b < co; ++b)
      for (int s = 0; s < kt; ++s)
        for (int r = 0; r < kv; ++r)
          gw.at4(a, b, s, r) += gwf.at4(b, a, kt - 1 - s, kv - 1 - r);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  check_shape(a.same_shape(b), std::string(what) + ": shape mismatch " +
                                   a.shape_str() + " vs " + b.shape_str());
}

int label_at(const Tensor& labels, int row, int num_classes) {
  double v = static_cast<double>(labels[static_cast<std::size_t>(row)]);
  double r = std::round(v);
  check_value(std::abs(v - r) < 1e-9 && r >= 0 && r < num_classes,
              "class label " + std::to_string(v) + " out of range");
  return static_cast<int>(r);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Var: return "var";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::AddBias: return "add_bias";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Softmax: return "softmax";
    case Op::SoftmaxXent: return "softmax_xent";
    case Op::MatMul: return "matmul";
    case Op::MatMulLast: return "matmul_last";
    case Op::Conv2d: return "conv2d";
    case Op::ConvT2d: return "convt2d";
    case Op::BatchNorm: return "batchnorm";
    case Op::MeanPool: return "mean_pool";
    case Op::Repeat: return "repeat";
    case Op::Concat: return "concat";
    case Op::Sum: return "sum";
    case Op::SumSq: return "sum_sq";
    case Op::Reshape: return "reshape";
    case Op::TimeDiff: return "time_diff";
    case Op::TimeSlice: return "time_slice";
  }
  return "?";
}

int Graph::check_id(Expr e) const {
  check_shape(e.id >= 0 && e.id < num_nodes(), "expression from another graph");
  return e.id;
}

Expr Graph::var(const std::string& name) {
  check_value(!name.empty(), "variable name must not be empty");
  auto it = var_ids_.find(name);
  if (it != var_ids_.end()) return {it->second};
  Node n;
  n.op = Op::Var;
  n.name = name;
  Expr e = make(std::move(n));
  var_ids_[name] = e.id;
  return e;
}

Expr Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(value);
  return make(std::move(n));
}

Expr Graph::make(Node n) {
  for (int in : n.inputs) {
    check_shape(in >= 0 && in < num_nodes(), "input from another graph");
  }
  nodes_.push_back(std::move(n));
  return {num_nodes() - 1};
}

void Graph::mark_ancestors(int root) {
  order_.clear();
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<int> stack{root};
  seen[static_cast<std::size_t>(root)] = 1;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    order_.push_back(id);
    for (int in : nodes_[static_cast<std::size_t>(id)].inputs) {
      if (!seen[static_cast<std::size_t>(in)]) {
        seen[static_cast<std::size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }
  // Node ids are already topologically ordered (inputs precede outputs),
  // so ascending id order is a valid evaluation order.
  std::sort(order_.begin(), order_.end());
}

const Tensor& Graph::forward(Expr root, Bindings& bindings) {
  int rid = check_id(root);
  mark_ancestors(rid);
  ++stamp_;
  bound_ = &bindings;
  for (int id : order_) {
    eval_node(id, bindings);
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.eval_stamp = stamp_;
    if (check_finite_ && !n.value.all_finite()) {
      bound_ = nullptr;
      throw NumericError(std::string("non-finite values produced by ") +
                         op_name(n.op) + " node #" + std::to_string(id) +
                         (n.name.empty() ? "" : " ('" + n.name + "')"));
    }
  }
  bound_ = nullptr;
  last_root_ = rid;
  return nodes_[static_cast<std::size_t>(rid)].value;
}

const Tensor& Graph::value(Expr e) const {
  const Node& n = nodes_[static_cast<std::size_t>(check_id(e))];
  check_shape(n.eval_stamp == stamp_,
              "value() requested for a node not covered by the last forward");
  return n.value;
}

void Graph::eval_node(int id, Bindings& bindings) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto in = [&](int i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(i)])]
        .value;
  };
  switch (n.op) {
    case Op::Var: {
      auto it = bindings.find(n.name);
      check_value(it != bindings.end(), "unbound variable '" + n.name + "'");
      n.value = it->second;
      break;
    }
    case Op::Const:
      break;  // value embedded at build time
    case Op::Add: {
      check_same_shape(in(0), in(1), "add");
      n.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += b[i];
      break;
    }
    case Op::Sub: {
      check_same_shape(in(0), in(1), "sub");
      n.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= b[i];
      break;
    }
    case Op::Mul: {
      check_same_shape(in(0), in(1), "mul");
      n.value = in(0);
      const Tensor& b = in(1);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= b[i];
      break;
    }
    case Op::Scale: {
      n.value = in(0);
      real f = static_cast<real>(n.factor);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= f;
      break;
    }
    case Op::AddScalar: {
      n.value = in(0);
      real c = static_cast<real>(n.factor);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
      break;
    }
    case Op::AddBias: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      check_shape(x.rank() >= 2, "add_bias input must be rank >= 2");
      check_shape(b.rank() == 1 && b.dim(0) == x.dim(1),
                  "bias shape " + b.shape_str() + " does not match axis 1 of " +
                      x.shape_str());
      n.value = x;
      std::size_t inner = x.size() / static_cast<std::size_t>(x.dim(0)) /
                          static_cast<std::size_t>(x.dim(1));
      std::size_t idx = 0;
      for (int i = 0; i < x.dim(0); ++i) {
        for (int c = 0; c < x.dim(1); ++c) {
          real bc = b[static_cast<std::size_t>(c)];
          for (std::size_t k = 0; k < inner; ++k) n.value[idx++] += bc;
        }
      }
      break;
    }
    case Op::Relu: {
      n.value = in(0);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        if (n.value[i] < real(0)) n.value[i] = real(0);
      }
      break;
    }
    case Op::Exp: {
      n.value = in(0);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = std::exp(n.value[i]);
      }
      break;
    }
    case Op::Softmax: {
      const Tensor& x = in(0);
      check_shape(x.rank() == 2, "softmax input must be rank 2");
      n.value = x;
      int rows = x.dim(0), cols = x.dim(1);
      for (int r = 0; r < rows; ++r) {
        real* p = n.value.data() + static_cast<std::size_t>(r) * cols;
        real mx = p[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) {
          p[c] = std::exp(p[c] - mx);
          s += p[c];
        }
        for (int c = 0; c < cols; ++c) p[c] = static_cast<real>(p[c] / s);
      }
      break;
    }
    case Op::SoftmaxXent: {
      const Tensor& x = in(0);
      const Tensor& labels = in(1);
      check_shape(x.rank() == 2, "softmax_xent logits must be rank 2");
      check_shape(labels.rank() == 1 && labels.dim(0) == x.dim(0),
                  "softmax_xent labels must be rank 1 with one entry per row");
      int rows = x.dim(0), cols = x.dim(1);
      n.cache_a = x;  // becomes the probability table
      double total = 0.0;
      for (int r = 0; r < rows; ++r) {
        real* p = n.cache_a.data() + static_cast<std::size_t>(r) * cols;
        real mx = p[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += std::exp(double(p[c]) - double(mx));
        double lse = std::log(s) + double(mx);
        int y = label_at(labels, r, cols);
        total += lse - double(p[y]);
        for (int c = 0; c < cols; ++c) {
          p[c] = static_cast<real>(std::exp(double(p[c]) - lse));
        }
      }
      n.value = Tensor::scalar(static_cast<real>(total));
      break;
    }
    case Op::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      check_shape(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul shapes " + a.shape_str() + " x " + b.shape_str());
      n.value = Tensor({a.dim(0), b.dim(1)});
      MMap(n.value.data(), a.dim(0), b.dim(1)).noalias() =
          CMap(a.data(), a.dim(0), a.dim(1)) * CMap(b.data(), b.dim(0), b.dim(1));
      break;
    }
    case Op::MatMulLast: {
      const Tensor& x = in(0);
      const Tensor& m = in(1);
      check_shape(x.rank() >= 1 && m.rank() == 2 &&
                      x.dim(x.rank() - 1) == m.dim(1),
                  "matmul_last shapes " + x.shape_str() + " x " + m.shape_str());
      int k = m.dim(1), j = m.dim(0);
      std::size_t rows = x.size() / static_cast<std::size_t>(k);
      std::vector<int> out_shape = x.shape();
      out_shape.back() = j;
      n.value = Tensor(out_shape);
      // y = x . m^T over the flattened leading axes
      MMap(n.value.data(), static_cast<Eigen::Index>(rows), j).noalias() =
          CMap(x.data(), static_cast<Eigen::Index>(rows), k) *
          CMap(m.data(), j, k).transpose();
      break;
    }
    case Op::Conv2d:
      conv2d_forward(in(0), in(1), n.pad_t, n.pad_v, n.value);
      break;
    case Op::ConvT2d: {
      const Tensor& w = in(1);
      check_shape(w.rank() == 4, "convt2d kernel must be rank 4");
      check_value(n.pad_t <= w.dim(2) - 1 && n.pad_v <= w.dim(3) - 1,
                  "convt2d padding exceeds kernel-1");
      Tensor wf = flip_kernel(w);
      conv2d_forward(in(0), wf, w.dim(2) - 1 - n.pad_t, w.dim(3) - 1 - n.pad_v,
                     n.value);
      break;
    }
    case Op::BatchNorm: {
      const Tensor& x = in(0);
      const Tensor& gamma = in(1);
      const Tensor& beta = in(2);
      const Tensor& rm = in(3);
      const Tensor& rv = in(4);
      check_shape(x.rank() == 4, "batchnorm input must be rank 4");
      int C = x.dim(1);
      check_shape(gamma.rank() == 1 && gamma.dim(0) == C &&
                      beta.same_shape(gamma) && rm.same_shape(gamma) &&
                      rv.same_shape(gamma),
                  "batchnorm parameter shapes must be [" + std::to_string(C) +
                      "]");
      int N = x.dim(0), T = x.dim(2), V = x.dim(3);
      std::size_t plane = static_cast<std::size_t>(T) * V;
      double m_count = double(N) * double(plane);
      n.value = Tensor(x.shape());
      n.cache_a = Tensor({C});  // per-channel mean used for normalization
      n.cache_b = Tensor({C});  // per-channel 1/sqrt(var+eps)
      if (training_) {
        check_shape(m_count > 1.5, "batchnorm needs more than one sample");
        Tensor batch_var({C});
        for (int c = 0; c < C; ++c) {
          double s = 0.0;
          for (int b = 0; b < N; ++b) {
            const real* p = x.data() +
                            (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
          }
          double mean = s / m_count;
          double sq = 0.0;
          for (int b = 0; b < N; ++b) {
            const real* p = x.data() +
                            (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              double dlt = double(p[i]) - mean;
              sq += dlt * dlt;
            }
          }
          double var = sq / m_count;
          n.cache_a[static_cast<std::size_t>(c)] = static_cast<real>(mean);
          n.cache_b[static_cast<std::size_t>(c)] =
              static_cast<real>(1.0 / std::sqrt(var + n.eps));
          batch_var[static_cast<std::size_t>(c)] = static_cast<real>(var);
        }
        if (update_running_stats_ && bound_) {
          // Running mean blends the batch mean; running var stores the
          // unbiased batch variance, matching common deep-learning practice.
          const std::string& rm_name =
              nodes_[static_cast<std::size_t>(n.inputs[3])].name;
          const std::string& rv_name =
              nodes_[static_cast<std::size_t>(n.inputs[4])].name;
          Tensor new_rm = rm;
          Tensor new_rv = rv;
          for (int c = 0; c < C; ++c) {
            double var_u = double(batch_var[static_cast<std::size_t>(c)]) *
                           m_count / (m_count - 1.0);
            new_rm[static_cast<std::size_t>(c)] = static_cast<real>(
                (1.0 - n.momentum) * double(rm[static_cast<std::size_t>(c)]) +
                n.momentum * double(n.cache_a[static_cast<std::size_t>(c)]));
            new_rv[static_cast<std::size_t>(c)] = static_cast<real>(
                (1.0 - n.momentum) * double(rv[static_cast<std::size_t>(c)]) +
                n.momentum * var_u);
          }
          (*bound_)[rm_name] = std::move(new_rm);
          (*bound_)[rv_name] = std::move(new_rv);
        }
      } else {
        for (int c = 0; c < C; ++c) {
          double var = double(rv[static_cast<std::size_t>(c)]);
          check_shape(var + n.eps > 0.0, "batchnorm running variance invalid");
          n.cache_a[static_cast<std::size_t>(c)] = rm[static_cast<std::size_t>(c)];
          n.cache_b[static_cast<std::size_t>(c)] =
              static_cast<real>(1.0 / std::sqrt(var + n.eps));
        }
      }
      for (int b = 0; b < N; ++b) {
        for (int c = 0; c < C; ++c) {
          const real* p = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          real* q = n.value.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          real mean = n.cache_a[static_cast<std::size_t>(c)];
          real istd = n.cache_b[static_cast<std::size_t>(c)];
          real gm = gamma[static_cast<std::size_t>(c)];
          real bt = beta[static_cast<std::size_t>(c)];
          for (std::size_t i = 0; i < plane; ++i) {
            q[i] = (p[i] - mean) * istd * gm + bt;
          }
        }
      }
      break;
    }
    case Op::MeanPool: {
      const Tensor& x = in(0);
      std::vector<int> out_shape = x.shape();
      std::size_t m = 1;
      for (int ax : n.axes) {
        check_shape(ax >= 0 && ax < x.rank(), "mean_pool axis out of range");
        m *= static_cast<std::size_t>(out_shape[static_cast<std::size_t>(ax)]);
        out_shape[static_cast<std::size_t>(ax)] = 1;
      }
      check_shape(m > 0, "mean_pool over empty axes");
      n.value = Tensor(out_shape);
      auto is = strides_of(x.shape());
      auto os = strides_of(out_shape);
      for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t rem = i, oi = 0;
        for (int ax = 0; ax < x.rank(); ++ax) {
          std::size_t coord = rem / is[static_cast<std::size_t>(ax)];
          rem %= is[static_cast<std::size_t>(ax)];
          if (out_shape[static_cast<std::size_t>(ax)] != 1) {
            oi += coord * os[static_cast<std::size_t>(ax)];
          }
        }
        n.value[oi] += x[i];
      }
      real inv = static_cast<real>(1.0 / static_cast<double>(m));
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= inv;
      break;
    }
    case Op::Repeat: {
      const Tensor& x = in(0);
      check_shape(static_cast<int>(n.sizes.size()) == x.rank(),
                  "repeat target rank mismatch");
      std::vector<int> target = n.sizes;
      for (int ax = 0; ax < x.rank(); ++ax) {
        int& d = target[static_cast<std::size_t>(ax)];
        if (d == -1) d = x.dim(ax);  // keep the runtime dimension
        check_shape(
            x.dim(ax) == d || x.dim(ax) == 1,
            "repeat: axis " + std::to_string(ax) + " of " + x.shape_str() +
                " cannot broadcast to " + Tensor::shape_str(target));
      }
      n.value = Tensor(target);
      auto is = strides_of(x.shape());
      auto os = strides_of(n.sizes);
      for (std::size_t o = 0; o < n.value.size(); ++o) {
        std::size_t rem = o, ii = 0;
        for (int ax = 0; ax < x.rank(); ++ax) {
          std::size_t coord = rem / os[static_cast<std::size_t>(ax)];
          rem %= os[static_cast<std::size_t>(ax)];
          if (x.dim(ax) != 1) ii += coord * is[static_cast<std::size_t>(ax)];
        }
        n.value[o] = x[ii];
      }
      break;
    }
    case Op::Concat: {
      check_shape(!n.inputs.empty(), "concat needs at least one input");
      const Tensor& first = in(0);
      int ax = n.axis;
      check_shape(ax >= 0 && ax < first.rank(), "concat axis out of range");
      int total = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& t = in(static_cast<int>(k));
        check_shape(t.rank() == first.rank(), "concat rank mismatch");
        for (int a2 = 0; a2 < first.rank(); ++a2) {
          check_shape(a2 == ax || t.dim(a2) == first.dim(a2),
                      "concat shapes differ off-axis: " + first.shape_str() +
                          " vs " + t.shape_str());
        }
        total += t.dim(ax);
      }
      std::vector<int> out_shape = first.shape();
      out_shape[static_cast<std::size_t>(ax)] = total;
      n.value = Tensor(out_shape);
      std::size_t outer = 1, inner = 1;
      for (int a2 = 0; a2 < ax; ++a2) outer *= static_cast<std::size_t>(first.dim(a2));
      for (int a2 = ax + 1; a2 < first.rank(); ++a2) {
        inner *= static_cast<std::size_t>(first.dim(a2));
      }
      std::size_t out_row = static_cast<std::size_t>(total) * inner;
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& t = in(static_cast<int>(k));
        std::size_t block = static_cast<std::size_t>(t.dim(ax)) * inner;
        for (std::size_t r = 0; r < outer; ++r) {
          std::memcpy(n.value.data() + r * out_row + off,
                      t.data() + r * block, sizeof(real) * block);
        }
        off += block;
      }
      break;
    }
    case Op::Sum: {
      const Tensor& x = in(0);
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += double(x[i]);
      n.value = Tensor::scalar(static_cast<real>(s));
      break;
    }
    case Op::SumSq: {
      const Tensor& x = in(0);
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        s += double(x[i]) * double(x[i]);
      }
      n.value = Tensor::scalar(static_cast<real>(s));
      break;
    }
    case Op::Reshape: {
      const Tensor& x = in(0);
      std::vector<int> out_shape = n.sizes;
      std::size_t known = 1;
      int wild = -1;
      for (int a2 = 0; a2 < static_cast<int>(out_shape.size()); ++a2) {
        int d = out_shape[static_cast<std::size_t>(a2)];
        if (d == -1) {
          check_shape(wild == -1, "reshape allows a single -1");
          wild = a2;
        } else {
          check_shape(d > 0, "reshape dimensions must be positive or -1");
          known *= static_cast<std::size_t>(d);
        }
      }
      if (wild >= 0) {
        check_shape(known > 0 && x.size() % known == 0,
                    "reshape cannot infer -1 for " + x.shape_str() + " -> " +
                        Tensor::shape_str(n.sizes));
        out_shape[static_cast<std::size_t>(wild)] =
            static_cast<int>(x.size() / known);
      } else {
        check_shape(known == x.size(), "reshape element count mismatch: " +
                                           x.shape_str() + " -> " +
                                           Tensor::shape_str(n.sizes));
      }
      n.value = Tensor::from(out_shape,
                             std::vector<real>(x.data(), x.data() + x.size()));
      break;
    }
    case Op::TimeDiff: {
      const Tensor& x = in(0);
      check_shape(x.rank() == 4 && x.dim(2) >= 2,
                  "time_diff needs rank-4 input with at least 2 frames");
      int N = x.dim(0), C = x.dim(1), T = x.dim(2), V = x.dim(3);
      n.value = Tensor({N, C, T - 1, V});
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T - 1; ++t)
            for (int v = 0; v < V; ++v)
              n.value.at4(b, c, t, v) = x.at4(b, c, t + 1, v) - x.at4(b, c, t, v);
      break;
    }
    case Op::TimeSlice: {
      const Tensor& x = in(0);
      check_shape(x.rank() == 4, "time_slice needs rank-4 input");
      check_shape(n.index >= 0 && n.index < x.dim(2),
                  "time_slice frame " + std::to_string(n.index) +
                      " out of range for " + x.shape_str());
      int N = x.dim(0), C = x.dim(1), V = x.dim(3);
      n.value = Tensor({N, C, 1, V});
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int v = 0; v < V; ++v)
            n.value.at4(b, c, 0, v) = x.at4(b, c, n.index, v);
      break;
    }
  }
}

GradMap Graph::backward(Expr root, const Tensor& seed,
                        const BackwardOptions& options) {
  int rid = check_id(root);
  check_shape(rid == last_root_ && nodes_[static_cast<std::size_t>(rid)].eval_stamp == stamp_,
              "backward requires a preceding forward on the same root");
  Node& rn = nodes_[static_cast<std::size_t>(rid)];
  check_same_shape(seed, rn.value, "backward seed");
  for (int id : order_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    n.grad = Tensor(n.value.shape());
  }
  rn.grad = seed;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    backprop_node(*it, options);
  }
  GradMap grads;
  for (int id : order_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op != Op::Var) continue;
    if (check_finite_ && !n.grad.all_finite()) {
      throw NumericError("non-finite gradient for variable '" + n.name + "'");
    }
    grads[n.name] = std::move(n.grad);
    n.grad = Tensor();
  }
  return grads;
}

void Graph::backprop_node(int id, const BackwardOptions& options) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = n.grad;
  if (n.op == Op::Var || n.op == Op::Const) return;
  auto inode = [&](int i) -> Node& {
    return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(i)])];
  };
  auto inval = [&](int i) -> const Tensor& { return inode(i).value; };
  auto ingrad = [&](int i) -> Tensor& { return inode(i).grad; };
  switch (n.op) {
    case Op::Var:
    case Op::Const:
      break;
    case Op::Add: {
      Tensor& ga = ingrad(0);
      Tensor& gb = ingrad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = ingrad(0);
      Tensor& gb = ingrad(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      Tensor& ga = ingrad(0);
      Tensor& gb = ingrad(1);
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::Scale: {
      Tensor& gx = ingrad(0);
      real f = static_cast<real>(n.factor);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
      break;
    }
    case Op::AddScalar: {
      Tensor& gx = ingrad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      break;
    }
    case Op::AddBias: {
      Tensor& gx = ingrad(0);
      Tensor& gb = ingrad(1);
      const Tensor& x = inval(0);
      std::size_t inner = x.size() / static_cast<std::size_t>(x.dim(0)) /
                          static_cast<std::size_t>(x.dim(1));
      std::size_t idx = 0;
      for (int i = 0; i < x.dim(0); ++i) {
        for (int c = 0; c < x.dim(1); ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k < inner; ++k) {
            gx[idx] += g[idx];
            s += double(g[idx]);
            ++idx;
          }
          gb[static_cast<std::size_t>(c)] += static_cast<real>(s);
        }
      }
      break;
    }
    case Op::Relu: {
      Tensor& gx = ingrad(0);
      const Tensor& x = inval(0);
      if (options.guided_relu) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > real(0) && g[i] > real(0)) gx[i] += g[i];
        }
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] > real(0)) gx[i] += g[i];
        }
      }
      break;
    }
    case Op::Exp: {
      Tensor& gx = ingrad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.value[i];
      break;
    }
    case Op::Softmax: {
      Tensor& gx = ingrad(0);
      int rows = n.value.dim(0), cols = n.value.dim(1);
      for (int r = 0; r < rows; ++r) {
        const real* p = n.value.data() + static_cast<std::size_t>(r) * cols;
        const real* gr = g.data() + static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += double(gr[c]) * double(p[c]);
        real* out = gx.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          out[c] += static_cast<real>(double(p[c]) * (double(gr[c]) - dot));
        }
      }
      break;
    }
    case Op::SoftmaxXent: {
      Tensor& gx = ingrad(0);
      const Tensor& labels = inval(1);
      int rows = n.cache_a.dim(0), cols = n.cache_a.dim(1);
      real gs = g[0];
      for (int r = 0; r < rows; ++r) {
        int y = label_at(labels, r, cols);
        const real* p = n.cache_a.data() + static_cast<std::size_t>(r) * cols;
        real* out = gx.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
          out[c] += gs * (p[c] - (c == y ? real(1) : real(0)));
        }
      }
      break;  // labels receive no gradient
    }
    case Op::MatMul: {
      const Tensor& a = inval(0);
      const Tensor& b = inval(1);
      MMap(ingrad(0).data(), a.dim(0), a.dim(1)).noalias() +=
          CMap(g.data(), a.dim(0), b.dim(1)) *
          CMap(b.data(), b.dim(0), b.dim(1)).transpose();
      MMap(ingrad(1).data(), b.dim(0), b.dim(1)).noalias() +=
          CMap(a.data(), a.dim(0), a.dim(1)).transpose() *
          CMap(g.data(), a.dim(0), b.dim(1));
      break;
    }
    case Op::MatMulLast: {
      const Tensor& x = inval(0);
      const Tensor& m = inval(1);
      int k = m.dim(1), j = m.dim(0);
      Eigen::Index rows = static_cast<Eigen::Index>(x.size() / static_cast<std::size_t>(k));
      MMap(ingrad(0).data(), rows, k).noalias() +=
          CMap(g.data(), rows, j) * CMap(m.data(), j, k);
      MMap(ingrad(1).data(), j, k).noalias() +=
          CMap(g.data(), rows, j).transpose() * CMap(x.data(), rows, k);
      break;
    }
    case Op::Conv2d:
      conv2d_backward(inval(0), inval(1), n.pad_t, n.pad_v, g, &ingrad(0),
                      &ingrad(1));
      break;
    case Op::ConvT2d: {
      const Tensor& w = inval(1);
      Tensor wf = flip_kernel(w);
      Tensor gwf(wf.shape());
      conv2d_backward(inval(0), wf, w.dim(2) - 1 - n.pad_t,
                      w.dim(3) - 1 - n.pad_v, g, &ingrad(0), &gwf);
      unflip_kernel_add(gwf, ingrad(1));
      break;
    }
    case Op::BatchNorm: {
      const Tensor& x = inval(0);
      const Tensor& gamma = inval(1);
      int N = x.dim(0), C = x.dim(1), T = x.dim(2), V = x.dim(3);
      std::size_t plane = static_cast<std::size_t>(T) * V;
      double m_count = double(N) * double(plane);
      Tensor& gx = ingrad(0);
      Tensor& ggamma = ingrad(1);
      Tensor& gbeta = ingrad(2);
      for (int c = 0; c < C; ++c) {
        double mean = double(n.cache_a[static_cast<std::size_t>(c)]);
        double istd = double(n.cache_b[static_cast<std::size_t>(c)]);
        double gm = double(gamma[static_cast<std::size_t>(c)]);
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < N; ++b) {
          const real* xp = x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          const real* gp = g.data() + (static_cast<std::size_t>(b) * C + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += double(gp[i]);
            sum_gx += double(gp[i]) * (double(xp[i]) - mean) * istd;
          }
        }
        gbeta[static_cast<std::size_t>(c)] += static_cast<real>(sum_g);
        ggamma[static_cast<std::size_t>(c)] += static_cast<real>(sum_gx);
        if (training_) {
          // d/dx of (x - mean(x)) / sqrt(var(x) + eps): the batch statistics
          // are functions of x, which yields the two correction terms.
          double k1 = sum_g / m_count;
          double k2 = sum_gx / m_count;
          for (int b = 0; b < N; ++b) {
            const real* xp =
                x.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            const real* gp =
                g.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            real* op = gx.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              double xh = (double(xp[i]) - mean) * istd;
              op[i] += static_cast<real>(gm * istd *
                                         (double(gp[i]) - k1 - xh * k2));
            }
          }
        } else {
          for (int b = 0; b < N; ++b) {
            const real* gp =
                g.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            real* op = gx.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              op[i] += static_cast<real>(gm * istd * double(gp[i]));
            }
          }
        }
      }
      break;  // running stats are treated as constants
    }
    case Op::MeanPool: {
      const Tensor& x = inval(0);
      Tensor& gx = ingrad(0);
      std::size_t m = 1;
      for (int ax : n.axes) m *= static_cast<std::size_t>(x.dim(ax));
      real inv = static_cast<real>(1.0 / static_cast<double>(m));
      auto is = strides_of(x.shape());
      auto os = strides_of(n.value.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t rem = i, oi = 0;
        for (int ax = 0; ax < x.rank(); ++ax) {
          std::size_t coord = rem / is[static_cast<std::size_t>(ax)];
          rem %= is[static_cast<std::size_t>(ax)];
          if (n.value.dim(ax) != 1) oi += coord * os[static_cast<std::size_t>(ax)];
        }
        gx[i] += g[oi] * inv;
      }
      break;
    }
    case Op::Repeat: {
      const Tensor& x = inval(0);
      Tensor& gx = ingrad(0);
      auto is = strides_of(x.shape());
      auto os = strides_of(n.value.shape());
      for (std::size_t o = 0; o < n.value.size(); ++o) {
        std::size_t rem = o, ii = 0;
        for (int ax = 0; ax < x.rank(); ++ax) {
          std::size_t coord = rem / os[static_cast<std::size_t>(ax)];
          rem %= os[static_cast<std::size_t>(ax)];
          if (x.dim(ax) != 1) ii += coord * is[static_cast<std::size_t>(ax)];
        }
        gx[ii] += g[o];
      }
      break;
    }
    case Op::Concat: {
      int ax = n.axis;
      const Tensor& first = inval(0);
      std::size_t outer = 1, inner = 1;
      for (int a2 = 0; a2 < ax; ++a2) outer *= static_cast<std::size_t>(first.dim(a2));
      for (int a2 = ax + 1; a2 < first.rank(); ++a2) {
        inner *= static_cast<std::size_t>(first.dim(a2));
      }
      std::size_t out_row = static_cast<std::size_t>(n.value.dim(ax)) * inner;
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Tensor& gk = ingrad(static_cast<int>(k));
        std::size_t block = static_cast<std::size_t>(inval(static_cast<int>(k)).dim(ax)) * inner;
        for (std::size_t r = 0; r < outer; ++r) {
          const real* src = g.data() + r * out_row + off;
          real* dst = gk.data() + r * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
        off += block;
      }
      break;
    }
    case Op::Sum: {
      Tensor& gx = ingrad(0);
      real gs = g[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs;
      break;
    }
    case Op::SumSq: {
      Tensor& gx = ingrad(0);
      const Tensor& x = inval(0);
      real gs = g[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += real(2) * gs * x[i];
      break;
    }
    case Op::Reshape: {
      Tensor& gx = ingrad(0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      break;
    }
    case Op::TimeDiff: {
      const Tensor& x = inval(0);
      Tensor& gx = ingrad(0);
      int N = x.dim(0), C = x.dim(1), T = x.dim(2), V = x.dim(3);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int t = 0; t < T - 1; ++t)
            for (int v = 0; v < V; ++v) {
              real gv = g.at4(b, c, t, v);
              gx.at4(b, c, t + 1, v) += gv;
              gx.at4(b, c, t, v) -= gv;
            }
      break;
    }
    case Op::TimeSlice: {
      const Tensor& x = inval(0);
      Tensor& gx = ingrad(0);
      int N = x.dim(0), C = x.dim(1), V = x.dim(3);
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < C; ++c)
          for (int v = 0; v < V; ++v)
            gx.at4(b, c, n.index, v) += g.at4(b, c, 0, v);
      break;
    }
  }
}

GradMap Graph::finite_difference(Expr root, const Bindings& bindings, double eps,
                                 const std::vector<std::string>& names) {
  check_value(eps > 0.0, "finite_difference eps must be positive");
  bool saved_update = update_running_stats_;
  bool saved_check = check_finite_;
  set_update_running_stats(false);
  set_check_finite(false);
  GradMap out;
  Bindings work = bindings;
  auto eval = [&]() -> double {
    const Tensor& v = forward(root, work);
    check_shape(v.size() == 1, "finite_difference root must be scalar");
    return static_cast<double>(v[0]);
  };
  for (const std::string& name : names) {
    auto it = work.find(name);
    check_value(it != work.end(),
                "finite_difference: no binding named '" + name + "'");
    Tensor grad(it->second.shape());
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      real saved = it->second[i];
      it->second[i] = saved + static_cast<real>(eps);
      double up = eval();
      it->second[i] = saved - static_cast<real>(eps);
      double down = eval();
      it->second[i] = saved;
      grad[i] = static_cast<real>((up - down) / (2.0 * eps));
    }
    out[name] = std::move(grad);
  }
  set_update_running_stats(saved_update);
  set_check_finite(saved_check);
  return out;
}

// ---------------------------------------------------------------------------
// Builders

namespace {
Node op_node(Op op, std::vector<int> inputs) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}
}  // namespace

Expr add(Graph& g, Expr a, Expr b) { return g.make(op_node(Op::Add, {a.id, b.id})); }
Expr sub(Graph& g, Expr a, Expr b) { return g.make(op_node(Op::Sub, {a.id, b.id})); }
Expr mul(Graph& g, Expr a, Expr b) { return g.make(op_node(Op::Mul, {a.id, b.id})); }

Expr scale(Graph& g, Expr x, double factor) {
  Node n = op_node(Op::Scale, {x.id});
  n.factor = factor;
  return g.make(std::move(n));
}

Expr add_scalar(Graph& g, Expr x, double addend) {
  Node n = op_node(Op::AddScalar, {x.id});
  n.factor = addend;
  return g.make(std::move(n));
}

Expr add_bias(Graph& g, Expr x, Expr bias) {
  return g.make(op_node(Op::AddBias, {x.id, bias.id}));
}

Expr relu(Graph& g, Expr x) { return g.make(op_node(Op::Relu, {x.id})); }
Expr expn(Graph& g, Expr x) { return g.make(op_node(Op::Exp, {x.id})); }
Expr softmax(Graph& g, Expr logits) {
  return g.make(op_node(Op::Softmax, {logits.id}));
}

Expr softmax_xent(Graph& g, Expr logits, Expr labels) {
  return g.make(op_node(Op::SoftmaxXent, {logits.id, labels.id}));
}

Expr matmul(Graph& g, Expr a, Expr b) {
  return g.make(op_node(Op::MatMul, {a.id, b.id}));
}

Expr matmul_last(Graph& g, Expr x, Expr m) {
  return g.make(op_node(Op::MatMulLast, {x.id, m.id}));
}

Expr conv2d(Graph& g, Expr x, Expr w, int pad_t, int pad_v) {
  check_value(pad_t >= 0 && pad_v >= 0, "conv2d padding must be non-negative");
  Node n = op_node(Op::Conv2d, {x.id, w.id});
  n.pad_t = pad_t;
  n.pad_v = pad_v;
  return g.make(std::move(n));
}

Expr convt2d(Graph& g, Expr x, Expr w, int pad_t, int pad_v) {
  check_value(pad_t >= 0 && pad_v >= 0, "convt2d padding must be non-negative");
  Node n = op_node(Op::ConvT2d, {x.id, w.id});
  n.pad_t = pad_t;
  n.pad_v = pad_v;
  return g.make(std::move(n));
}

Expr batchnorm(Graph& g, Expr x, Expr gamma, Expr beta, Expr running_mean,
               Expr running_var, double eps, double momentum) {
  check_value(eps > 0.0, "batchnorm eps must be positive");
  check_value(momentum >= 0.0 && momentum <= 1.0,
              "batchnorm momentum must lie in [0, 1]");
  check_value(g.node(running_mean).op == Op::Var &&
                  g.node(running_var).op == Op::Var,
              "batchnorm running statistics must be variables");
  Node n = op_node(Op::BatchNorm,
                   {x.id, gamma.id, beta.id, running_mean.id, running_var.id});
  n.eps = eps;
  n.momentum = momentum;
  return g.make(std::move(n));
}

Expr mean_pool(Graph& g, Expr x, std::vector<int> axes) {
  check_value(!axes.empty(), "mean_pool needs at least one axis");
  Node n = op_node(Op::MeanPool, {x.id});
  n.axes = std::move(axes);
  return g.make(std::move(n));
}

Expr repeat_to(Graph& g, Expr x, std::vector<int> sizes) {
  Node n = op_node(Op::Repeat, {x.id});
  n.sizes = std::move(sizes);
  return g.make(std::move(n));
}

Expr concat(Graph& g, std::vector<Expr> xs, int axis) {
  check_value(!xs.empty(), "concat needs at least one input");
  Node n;
  n.op = Op::Concat;
  n.axis = axis;
  for (Expr e : xs) n.inputs.push_back(e.id);
  return g.make(std::move(n));
}

Expr reduce_sum(Graph& g, Expr x) { return g.make(op_node(Op::Sum, {x.id})); }
Expr sum_sq(Graph& g, Expr x) { return g.make(op_node(Op::SumSq, {x.id})); }

Expr reshape(Graph& g, Expr x, std::vector<int> sizes) {
  Node n = op_node(Op::Reshape, {x.id});
  n.sizes = std::move(sizes);
  return g.make(std::move(n));
}

Expr time_diff(Graph& g, Expr x) { return g.make(op_node(Op::TimeDiff, {x.id})); }

Expr time_slice(Graph& g, Expr x, int index) {
  check_value(index >= 0, "time_slice index must be non-negative");
  Node n = op_node(Op::TimeSlice, {x.id});
  n.index = index;
  return g.make(std::move(n));
}

}  // namespace step
