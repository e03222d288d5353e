#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "step/tensor.hpp"

namespace step {

// Named leaf values fed into a graph at forward time, and the store for
// trainable parameters (ordered map so every iteration order is stable).
using Bindings = std::map<std::string, Tensor>;

enum class Op {
  Var,
  Const,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  AddBias,
  Relu,
  Exp,
  Softmax,
  SoftmaxXent,
  MatMul,
  MatMulLast,
  Conv2d,
  ConvT2d,
  BatchNorm,
  MeanPool,
  Repeat,
  Concat,
  Sum,
  SumSq,
  Reshape,
  TimeDiff,
  TimeSlice
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<int> inputs;

  std::string name;  // Var only

  // Static attributes; each op reads the fields it needs.
  double factor = 0.0;            // Scale multiplier / AddScalar addend
  int axis = 0;                   // Concat axis
  int index = 0;                  // TimeSlice frame
  int pad_t = 0, pad_v = 0;       // convolution padding
  std::vector<int> axes;          // MeanPool reduction axes
  std::vector<int> sizes;         // Repeat targets / Reshape shape (-1 once)
  double eps = 0.0;               // BatchNorm
  double momentum = 0.0;          // BatchNorm running-stat blend

  // Runtime state, owned by forward/backward.
  Tensor value;
  Tensor grad;
  int eval_stamp = -1;

  // Op-specific caches filled during forward for use in backward.
  Tensor cache_a;  // BatchNorm mean / SoftmaxXent probabilities
  Tensor cache_b;  // BatchNorm inverse stddev
};

// Lightweight handle; valid for the lifetime of its graph.
struct Expr {
  int id = -1;
};

// Gradients of a scalar (or seeded) root with respect to named variables.
using GradMap = std::map<std::string, Tensor>;

struct BackwardOptions {
  // Guided backprop: ReLU passes a gradient only where both the input
  // activation and the incoming gradient are positive.
  bool guided_relu = false;
};

// Expression graph with reverse-mode differentiation. Build once, then
// run forward/backward repeatedly with fresh bindings. Shapes are checked
// at forward time because variable shapes are only known then.
class Graph {
 public:
  // Variables are unique by name: repeated calls return the same node.
  Expr var(const std::string& name);
  Expr constant(Tensor value);

  Expr make(Node n);
  const Node& node(Expr e) const { return nodes_[check_id(e)]; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Training mode switches BatchNorm to batch statistics (and enables the
  // running-stat write-back unless disabled below).
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  // When off, a training-mode forward leaves running statistics untouched.
  // Finite differencing uses this so probe evaluations have no side effects.
  void set_update_running_stats(bool on) { update_running_stats_ = on; }

  void set_check_finite(bool on) { check_finite_ = on; }

  // Evaluates root and all of its ancestors; values stay readable through
  // value() until the next forward call. Running stats may be written back
  // into `bindings` (see above).
  const Tensor& forward(Expr root, Bindings& bindings);

  // Value of any ancestor of the last forward root.
  const Tensor& value(Expr e) const;

  // Reverse pass from the last forward root. `seed` must match the root's
  // shape (Tensor::scalar(1) for scalar losses). Returns gradients for
  // every variable that participated.
  GradMap backward(Expr root, const Tensor& seed,
                   const BackwardOptions& options = BackwardOptions());

  // Central-difference gradients of a scalar root, the reference oracle for
  // backward(). Runs many forwards; running-stat updates are suppressed.
  GradMap finite_difference(Expr root, const Bindings& bindings, double eps,
                            const std::vector<std::string>& names);

 private:
  int check_id(Expr e) const;
  void mark_ancestors(int root);
  void eval_node(int id, Bindings& bindings);
  void backprop_node(int id, const BackwardOptions& options);

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> var_ids_;
  std::vector<int> order_;   // ancestors of last root, ascending
  int last_root_ = -1;
  int stamp_ = 0;
  bool training_ = false;
  bool update_running_stats_ = true;
  bool check_finite_ = true;
  Bindings* bound_ = nullptr;  // valid during forward only
};

// Builders. All of them validate static attributes immediately and shapes
// at forward time.
Expr add(Graph& g, Expr a, Expr b);
Expr sub(Graph& g, Expr a, Expr b);
Expr mul(Graph& g, Expr a, Expr b);
Expr scale(Graph& g, Expr x, double factor);
Expr add_scalar(Graph& g, Expr x, double addend);
Expr add_bias(Graph& g, Expr x, Expr bias);
Expr relu(Graph& g, Expr x);
Expr expn(Graph& g, Expr x);
Expr softmax(Graph& g, Expr logits);
// Sum over rows of -log softmax(logits)[label]; labels is a rank-1 tensor of
// integral class indices and receives no gradient.
Expr softmax_xent(Graph& g, Expr logits, Expr labels);
Expr matmul(Graph& g, Expr a, Expr b);
// y[..., i] = sum_j m[i, j] * x[..., j]; contraction over the last axis.
Expr matmul_last(Graph& g, Expr x, Expr m);
Expr conv2d(Graph& g, Expr x, Expr w, int pad_t, int pad_v);
Expr convt2d(Graph& g, Expr x, Expr w, int pad_t, int pad_v);
Expr batchnorm(Graph& g, Expr x, Expr gamma, Expr beta, Expr running_mean,
               Expr running_var, double eps, double momentum);
Expr mean_pool(Graph& g, Expr x, std::vector<int> axes);
// Broadcast singleton axes up to `sizes`; -1 keeps an axis as-is.
Expr repeat_to(Graph& g, Expr x, std::vector<int> sizes);
Expr concat(Graph& g, std::vector<Expr> xs, int axis);
Expr reduce_sum(Graph& g, Expr x);
Expr sum_sq(Graph& g, Expr x);
Expr reshape(Graph& g, Expr x, std::vector<int> sizes);
Expr time_diff(Graph& g, Expr x);
Expr time_slice(Graph& g, Expr x, int index);

}  // namespace step
