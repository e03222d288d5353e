#pragma once

#include <string>
#include <vector>

#include "step/graph.hpp"
#include "step/rng.hpp"

namespace step {

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// Creates-or-reuses named parameters in a shared store. Reuse never draws
// from the init stream, so previously created parameters keep their values
// and later graphs (inference heads etc.) bind to the same tensors.
struct ParamFactory {
  Bindings& params;
  std::vector<std::string>* trainable = nullptr;   // appended on creation
  RngStream* init = nullptr;                       // required for creation
  std::vector<std::string>* persistent = nullptr;  // everything checkpointable

  // Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weight.
  Expr weight(Graph& g, const std::string& name, std::vector<int> shape,
              int fan_in);
  // Constant-initialized trainable parameter (biases, BN gamma/beta).
  Expr affine(Graph& g, const std::string& name, std::vector<int> shape,
              real value);
  // Constant-initialized non-trainable state (BN running stats).
  Expr state(Graph& g, const std::string& name, std::vector<int> shape,
             real value);
};

struct BlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  int temporal_kernel = 9;  // odd; receptive field over frames
  bool transposed = false;  // decoder blocks deconvolve over time
  bool with_batchnorm = true;
  bool with_relu = true;
  bool with_bias = false;  // only meaningful without batchnorm
};

// Spatial-temporal graph block: neighborhood average via the adjacency
// operator, 1x1 channel mixing, temporal (de)convolution, then optional
// BN + ReLU. Keeps [N,*,T,V] shape.
Expr st_graph_block(Graph& g, ParamFactory& pf, const std::string& name,
                    Expr x, Expr adjacency, const BlockConfig& cfg);

// 1x1 convolution over channels, optional bias.
Expr pointwise_conv(Graph& g, ParamFactory& pf, const std::string& name,
                    Expr x, int in_channels, int out_channels, bool bias);

// Fully connected layer on [N, D] input.
Expr dense(Graph& g, ParamFactory& pf, const std::string& name, Expr x,
           int in_dim, int out_dim, bool bias = true);

// BN layer owning gamma/beta/running stats under `name`.
Expr batchnorm_layer(Graph& g, ParamFactory& pf, const std::string& name,
                     Expr x, int channels);

// The skeleton's normalized adjacency as a graph constant [V, V].
Expr adjacency_const(Graph& g);

}  // namespace step
