#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "step/skeleton.hpp"
#include "step/stgcn.hpp"
#include "test_util.hpp"

using namespace step;
using testutil::check_grads;
using testutil::rand_tensor;

namespace {

struct Builder {
  Graph g;
  Bindings params;
  std::vector<std::string> trainable;
  RngStream init{7, "init"};
  ParamFactory pf{params, &trainable, &init};
};

}  // namespace

TEST_CASE("block preserves [N, *, T, V] shape for both conv variants") {
  for (bool transposed : {false, true}) {
    Builder b;
    BlockConfig cfg;
    cfg.in_channels = 3;
    cfg.out_channels = 8;
    cfg.temporal_kernel = 9;
    cfg.transposed = transposed;
    Expr x = b.g.var("x");
    Expr y = st_graph_block(b.g, b.pf, "blk", x, adjacency_const(b.g), cfg);
    Bindings in = b.params;
    RngStream r(1, "x");
    in["x"] = rand_tensor({2, 3, 75, joints::kCount}, r);
    b.g.set_training(true);
    const Tensor& v = b.g.forward(y, in);
    CHECK(v.shape() == std::vector<int>{2, 8, 75, joints::kCount});
  }
}

TEST_CASE("zero input with fresh parameters yields zero pre-activations") {
  Builder b;
  BlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 4;
  cfg.temporal_kernel = 3;
  Expr y = st_graph_block(b.g, b.pf, "blk", b.g.var("x"), adjacency_const(b.g),
                          cfg);
  Bindings in = b.params;
  in["x"] = Tensor({2, 2, 6, joints::kCount});
  b.g.set_training(true);
  b.g.set_update_running_stats(false);
  const Tensor& v = b.g.forward(y, in);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == 0.0);
}

TEST_CASE("spatial aggregation averages each joint with its neighbours") {
  // Isolate the aggregation: impulse at the head joint must spread to the
  // neck with weight 1/deg(neck)+... i.e. exactly the adjacency row values.
  Graph g;
  Expr x = g.var("x");
  Expr y = matmul_last(g, x, adjacency_const(g));
  Bindings b;
  Tensor imp({1, 1, 1, joints::kCount});
  imp.at4(0, 0, 0, joints::kHead) = 1;
  b["x"] = imp;
  const Tensor& v = g.forward(y, b);
  Eigen::MatrixXd a = normalized_adjacency();
  for (int j = 0; j < joints::kCount; ++j) {
    CHECK(v.at4(0, 0, 0, j) ==
          doctest::Approx(a(j, joints::kHead)).epsilon(1e-12));
  }
}

TEST_CASE("temporal receptive field is exactly the kernel footprint") {
  Builder b;
  BlockConfig cfg;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  cfg.temporal_kernel = 5;
  cfg.with_batchnorm = false;
  cfg.with_relu = false;
  Expr y = st_graph_block(b.g, b.pf, "blk", b.g.var("x"), adjacency_const(b.g),
                          cfg);
  // Make the convolution weights non-zero everywhere.
  for (auto& [name, t] : b.params) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == real(0)) t[i] = real(0.01);
    }
  }
  Bindings in = b.params;
  Tensor imp({1, 1, 11, joints::kCount});
  for (int j = 0; j < joints::kCount; ++j) imp.at4(0, 0, 5, j) = 1;
  in["x"] = imp;
  const Tensor& v = b.g.forward(y, in);
  for (int t = 0; t < 11; ++t) {
    double mag = 0;
    for (int j = 0; j < joints::kCount; ++j) {
      mag = std::max(mag, std::abs(double(v.at4(0, 0, t, j))));
    }
    if (t >= 3 && t <= 7) {
      CHECK(mag > 0);  // inside the +-2 footprint
    } else {
      CHECK(mag == 0.0);  // outside of it
    }
  }
}

TEST_CASE("whole block gradient matches finite differences") {
  for (bool transposed : {false, true}) {
    Builder b;
    BlockConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 3;
    cfg.temporal_kernel = 3;
    cfg.transposed = transposed;
    Expr y = st_graph_block(b.g, b.pf, "blk", b.g.var("x"),
                            adjacency_const(b.g), cfg);
    RngStream r(3, "grad");
    Bindings in = b.params;
    in["x"] = rand_tensor({2, 2, 5, joints::kCount}, r);
    Expr coeffs = b.g.constant(rand_tensor({2, 3, 5, joints::kCount}, r));
    Expr root = reduce_sum(b.g, mul(b.g, y, coeffs));
    b.g.set_training(true);
    std::vector<std::string> names = b.trainable;
    names.push_back("x");
    // ReLU kinks + batch statistics: modest tolerances.
    check_grads(b.g, root, in, names, 1e-5, 5e-6, 5e-4);
  }
}

TEST_CASE("parameter creation is deterministic and reuse draws nothing") {
  Builder b1, b2;
  BlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 4;
  cfg.temporal_kernel = 3;
  st_graph_block(b1.g, b1.pf, "blk", b1.g.var("x"), adjacency_const(b1.g), cfg);
  st_graph_block(b2.g, b2.pf, "blk", b2.g.var("x"), adjacency_const(b2.g), cfg);
  REQUIRE(b1.params.size() == b2.params.size());
  for (const auto& [name, t] : b1.params) {
    REQUIRE(b2.params.count(name) == 1);
    const Tensor& u = b2.params[name];
    REQUIRE(t.same_shape(u));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
  }

  // Second build in another graph with the same store: nothing new.
  std::size_t before = b1.params.size();
  std::vector<std::string> trainable_before = b1.trainable;
  Graph g2;
  ParamFactory pf2{b1.params, &b1.trainable, nullptr};  // no init stream
  st_graph_block(g2, pf2, "blk", g2.var("x"), adjacency_const(g2), cfg);
  CHECK(b1.params.size() == before);
  CHECK(b1.trainable == trainable_before);
}

TEST_CASE("trainable list excludes running statistics") {
  Builder b;
  BlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 2;
  cfg.temporal_kernel = 3;
  st_graph_block(b.g, b.pf, "blk", b.g.var("x"), adjacency_const(b.g), cfg);
  for (const std::string& name : b.trainable) {
    CHECK(name.find("/bn_mean") == std::string::npos);
    CHECK(name.find("/bn_var") == std::string::npos);
  }
  CHECK(b.params.count("blk/bn_mean") == 1);
  CHECK(b.params.count("blk/bn_var") == 1);
  CHECK(std::count(b.trainable.begin(), b.trainable.end(), "blk/bn_gamma") == 1);
}

TEST_CASE("configuration validation") {
  Builder b;
  BlockConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 2;
  SUBCASE("even kernel") {
    cfg.temporal_kernel = 4;
    CHECK_THROWS_AS(st_graph_block(b.g, b.pf, "blk", b.g.var("x"),
                                   adjacency_const(b.g), cfg),
                    ValueError);
  }
  SUBCASE("bias under batchnorm") {
    cfg.with_bias = true;
    cfg.with_batchnorm = true;
    CHECK_THROWS_AS(st_graph_block(b.g, b.pf, "blk", b.g.var("x"),
                                   adjacency_const(b.g), cfg),
                    ValueError);
  }
  SUBCASE("missing init stream for a fresh parameter") {
    ParamFactory pf{b.params, nullptr, nullptr};
    CHECK_THROWS_AS(pf.weight(b.g, "w", {2, 2}, 2), ValueError);
  }
  SUBCASE("shape clash with an existing parameter") {
    b.pf.weight(b.g, "w", {2, 2}, 2);
    Graph g2;
    CHECK_THROWS_AS(b.pf.weight(g2, "w", {3, 2}, 3), ShapeError);
  }
}

TEST_CASE("dense layer computes x W + b") {
  Builder b;
  Expr y = dense(b.g, b.pf, "fc", b.g.var("x"), 3, 2);
  b.params["fc/w"] = Tensor::from({3, 2}, {1, 0, 0, 1, 1, 1});
  b.params["fc/b"] = Tensor::from({2}, {0.5, -0.5});
  Bindings in = b.params;
  in["x"] = Tensor::from({1, 3}, {2, 3, 4});
  const Tensor& v = b.g.forward(y, in);
  CHECK(v.at2(0, 0) == doctest::Approx(6.5));   // 2+4+0.5
  CHECK(v.at2(0, 1) == doctest::Approx(6.5));   // 3+4-0.5
}
