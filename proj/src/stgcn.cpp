#include "step/stgcn.hpp"

#include <algorithm>
#include <cmath>

#include "step/skeleton.hpp"

namespace step {

namespace {

Tensor init_uniform(const std::vector<int>& shape, int fan_in, RngStream& r) {
  check_value(fan_in > 0, "weight fan-in must be positive");
  double bound = std::sqrt(1.0 / fan_in);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<real>(r.uniform(-bound, bound));
  }
  return t;
}

// Inventory lists cover reused parameters too (rebuilds from a checkpoint
// create nothing), so record on every request, first occurrence wins.
void record(std::vector<std::string>* list, const std::string& name) {
  if (!list) return;
  if (std::find(list->begin(), list->end(), name) == list->end()) {
    list->push_back(name);
  }
}

}  // namespace

Expr ParamFactory::weight(Graph& g, const std::string& name,
                          std::vector<int> shape, int fan_in) {
  auto it = params.find(name);
  if (it == params.end()) {
    check_value(init != nullptr, "parameter '" + name +
                                     "' missing and no init stream given");
    params[name] = init_uniform(shape, fan_in, *init);
  } else {
    check_shape(it->second.shape() == shape,
                "parameter '" + name + "' has shape " + it->second.shape_str() +
                    ", expected " + Tensor::shape_str(shape));
  }
  record(trainable, name);
  record(persistent, name);
  return g.var(name);
}

Expr ParamFactory::affine(Graph& g, const std::string& name,
                          std::vector<int> shape, real value) {
  auto it = params.find(name);
  if (it == params.end()) {
    check_value(init != nullptr, "parameter '" + name +
                                     "' missing and no init stream given");
    params[name] = Tensor::full(shape, value);
  } else {
    check_shape(it->second.shape() == shape,
                "parameter '" + name + "' has unexpected shape");
  }
  record(trainable, name);
  record(persistent, name);
  return g.var(name);
}

Expr ParamFactory::state(Graph& g, const std::string& name,
                         std::vector<int> shape, real value) {
  auto it = params.find(name);
  if (it == params.end()) {
    check_value(init != nullptr, "state '" + name +
                                     "' missing and no init stream given");
    params[name] = Tensor::full(shape, value);
  } else {
    check_shape(it->second.shape() == shape,
                "state '" + name + "' has unexpected shape");
  }
  record(persistent, name);
  return g.var(name);
}

Expr batchnorm_layer(Graph& g, ParamFactory& pf, const std::string& name,
                     Expr x, int channels) {
  Expr gamma = pf.affine(g, name + "/bn_gamma", {channels}, 1);
  Expr beta = pf.affine(g, name + "/bn_beta", {channels}, 0);
  Expr rm = pf.state(g, name + "/bn_mean", {channels}, 0);
  Expr rv = pf.state(g, name + "/bn_var", {channels}, 1);
  return batchnorm(g, x, gamma, beta, rm, rv, kBnEps, kBnMomentum);
}

Expr pointwise_conv(Graph& g, ParamFactory& pf, const std::string& name,
                    Expr x, int in_channels, int out_channels, bool bias) {
  Expr w = pf.weight(g, name + "/w", {out_channels, in_channels, 1, 1},
                     in_channels);
  Expr y = conv2d(g, x, w, 0, 0);
  if (bias) {
    y = add_bias(g, y, pf.affine(g, name + "/b", {out_channels}, 0));
  }
  return y;
}

Expr dense(Graph& g, ParamFactory& pf, const std::string& name, Expr x,
           int in_dim, int out_dim, bool bias) {
  Expr w = pf.weight(g, name + "/w", {in_dim, out_dim}, in_dim);
  Expr y = matmul(g, x, w);
  if (bias) {
    y = add_bias(g, y, pf.affine(g, name + "/b", {out_dim}, 0));
  }
  return y;
}

Expr adjacency_const(Graph& g) {
  Eigen::MatrixXd a = normalized_adjacency();
  Tensor t({joints::kCount, joints::kCount});
  for (int i = 0; i < joints::kCount; ++i) {
    for (int j = 0; j < joints::kCount; ++j) {
      t.at2(i, j) = static_cast<real>(a(i, j));
    }
  }
  return g.constant(std::move(t));
}

Expr st_graph_block(Graph& g, ParamFactory& pf, const std::string& name,
                    Expr x, Expr adjacency, const BlockConfig& cfg) {
  check_value(cfg.in_channels > 0 && cfg.out_channels > 0,
              "block channels must be positive");
  check_value(cfg.temporal_kernel >= 1 && cfg.temporal_kernel % 2 == 1,
              "temporal kernel must be odd so padding can preserve length");
  check_value(!(cfg.with_bias && cfg.with_batchnorm),
              "bias is redundant under batchnorm");

  // Neighborhood average, then channel mixing (the graph-convolution rule).
  Expr h = matmul_last(g, x, adjacency);
  h = pointwise_conv(g, pf, name + "/spatial", h, cfg.in_channels,
                     cfg.out_channels, false);

  int pad = (cfg.temporal_kernel - 1) / 2;
  if (cfg.transposed) {
    Expr w = pf.weight(
        g, name + "/temporal/w",
        {cfg.out_channels, cfg.out_channels, cfg.temporal_kernel, 1},
        cfg.out_channels * cfg.temporal_kernel);
    h = convt2d(g, h, w, pad, 0);
  } else {
    Expr w = pf.weight(
        g, name + "/temporal/w",
        {cfg.out_channels, cfg.out_channels, cfg.temporal_kernel, 1},
        cfg.out_channels * cfg.temporal_kernel);
    h = conv2d(g, h, w, pad, 0);
  }
  if (cfg.with_bias) {
    h = add_bias(g, h, pf.affine(g, name + "/b", {cfg.out_channels}, 0));
  }
  if (cfg.with_batchnorm) {
    h = batchnorm_layer(g, pf, name, h, cfg.out_channels);
  }
  if (cfg.with_relu) {
    h = relu(g, h);
  }
  return h;
}

}  // namespace step
