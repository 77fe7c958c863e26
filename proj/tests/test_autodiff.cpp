#include <doctest.h>

#include <cmath>
#include <vector>

#include "modnet/error.hpp"
#include "modnet/network.hpp"
#include "modnet/rng.hpp"
#include "reference_kernels.hpp"

using namespace modnet;

namespace {

Tensor random_input(int h, int w, int c, uint64_t seed) {
  Rng rng(seed);
  Tensor t({static_cast<size_t>(h), static_cast<size_t>(w), static_cast<size_t>(c)});
  for (auto& v : t.values) v = rng.gaussian();
  return t;
}

// Arithmetic oracle over the layer list: parameter count and spatial chain,
// computed without touching the network's own bookkeeping.
struct ArchOracle {
  long params = 0;
  std::vector<int> spatial;  // extent after every layer
};

ArchOracle count_oracle(const Arch& arch, int h, int c) {
  ArchOracle o;
  for (const auto& spec : arch.layers) {
    switch (spec.kind) {
      case LayerKind::Conv3x3:
        o.params += 9L * spec.in_channels * spec.out_channels + spec.out_channels;
        h -= 2;
        c = spec.out_channels;
        break;
      case LayerKind::PoolStride2:
        h /= 2;
        break;
      case LayerKind::ResnetBlock:
        o.params += 2 * (9L * c * c + c);
        break;
      case LayerKind::FullyConnected:
        o.params += static_cast<long>(h) * h * c * spec.output_dim + spec.output_dim;
        h = 1;
        c = spec.output_dim;
        break;
      case LayerKind::Relu:
        break;
    }
    o.spatial.push_back(h);
  }
  return o;
}

const EmbeddingObjective kSumLoss{
    [](const std::vector<double>& f) {
      double s = 0.0;
      for (double v : f) s += v;
      return s;
    },
    [](const std::vector<double>& f) { return std::vector<double>(f.size(), 1.0); }};

const EmbeddingObjective kSquaredNormLoss{
    [](const std::vector<double>& f) {
      double s = 0.0;
      for (double v : f) s += v * v;
      return s;
    },
    [](const std::vector<double>& f) {
      std::vector<double> g(f.size());
      for (size_t k = 0; k < f.size(); ++k) g[k] = 2.0 * f[k];
      return g;
    }};

}  // namespace

TEST_CASE("desk-scale parameter count matches the arithmetic oracle") {
  const Arch arch = conv_pool_resnet_arch(1, 8, {16, 16}, 16);
  Network net = build_network(arch, 32, 32, 1, 16, 7);
  size_t total = 0;
  for (const auto& p : net.params) total += p.t.numel();
  const ArchOracle oracle = count_oracle(arch, 32, 1);
  REQUIRE(static_cast<long>(total) == oracle.params);
  REQUIRE(net.shared_param_count() == total);
  REQUIRE(net.task_param_count() == 0);
}

TEST_CASE("full-scale tower reproduces the 148-73-35-16-7 spatial chain") {
  const Arch arch = conv_pool_resnet_arch(3, 32, {64, 128, 128, 128}, 256);
  Network net = build_network(arch, 150, 150, 3, 256, 3);
  std::vector<int> block_ends;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const auto& L = net.layers[i];
    if (L.spec.kind == LayerKind::ResnetBlock || (L.stage == "conv1" && L.spec.kind == LayerKind::Relu)) {
      block_ends.push_back(L.out_h);
    }
  }
  REQUIRE(block_ends == std::vector<int>{148, 73, 35, 16, 7});
  const Layer& fc = net.layers.back();
  REQUIRE(fc.spec.kind == LayerKind::FullyConnected);
  REQUIRE(fc.in_h == 7);
  REQUIRE(fc.in_w == 7);
  REQUIRE(fc.in_c == 128);
  REQUIRE(net.embedding_dim == 256);
}

TEST_CASE("identity fully-connected layer is the identity map") {
  Network net = build_network(single_fc_arch(4), 1, 1, 4, 4, 1);
  auto& w = net.params[0].t;
  std::fill(w.values.begin(), w.values.end(), 0.0);
  for (int i = 0; i < 4; ++i) w.values[i * 4 + i] = 1.0;
  std::fill(net.params[1].t.values.begin(), net.params[1].t.values.end(), 0.0);
  const Tensor x({4}, {0.5, -1.25, 3.0, 0.0});
  REQUIRE(forward(net, x).embedding == x.values);
}

TEST_CASE("zero final layer gives the all-zeros embedding") {
  Network net = build_network(conv_pool_resnet_arch(1, 2, {3}, 5), 12, 12, 1, 5, 9);
  for (auto& p : net.params) {
    if (p.name.rfind("fc/", 0) == 0) std::fill(p.t.values.begin(), p.t.values.end(), 0.0);
  }
  const auto emb = forward(net, random_input(12, 12, 1, 5)).embedding;
  for (double v : emb) REQUIRE(v == 0.0);
}

TEST_CASE("construction and forward are deterministic per seed") {
  const Arch arch = conv_pool_resnet_arch(1, 3, {4}, 6);
  Network a = build_network(arch, 12, 12, 1, 6, 99);
  Network b = build_network(arch, 12, 12, 1, 6, 99);
  REQUIRE(a.params.size() == b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) {
    REQUIRE(a.params[i].name == b.params[i].name);
    REQUIRE(a.params[i].t.values == b.params[i].t.values);
  }
  const Tensor x = random_input(12, 12, 1, 7);
  REQUIRE(forward(a, x).embedding == forward(b, x).embedding);
  REQUIRE(forward(a, x).embedding == forward(a, x).embedding);
}

TEST_CASE("forward matches a straight-line re-implementation of the tower") {
  const int h = 14, c1 = 3, cb = 4, e = 6;
  Network net = build_network(conv_pool_resnet_arch(1, c1, {cb}, e), h, h, 1, e, 123);
  const Tensor x = random_input(h, h, 1, 321);

  auto p = [&](const char* name) -> const std::vector<double>& {
    for (const auto& prm : net.params) {
      if (prm.name == name) return prm.t.values;
    }
    throw std::runtime_error(name);
  };

  // conv1 + relu
  std::vector<double> a1(static_cast<size_t>(h - 2) * (h - 2) * c1);
  refk::conv3x3_valid_forward(x.values.data(), h, h, 1, p("conv1/w").data(), p("conv1/b").data(), c1,
                              a1.data());
  refk::relu_forward(a1.data(), a1.size(), a1.data());
  // block2: conv + relu + pool + residual block
  const int h2 = h - 4;
  std::vector<double> a2(static_cast<size_t>(h2) * h2 * cb);
  refk::conv3x3_valid_forward(a1.data(), h - 2, h - 2, c1, p("block2/conv/w").data(),
                              p("block2/conv/b").data(), cb, a2.data());
  refk::relu_forward(a2.data(), a2.size(), a2.data());
  const int hp = h2 / 2;
  std::vector<double> a3(static_cast<size_t>(hp) * hp * cb);
  std::vector<int> arg(a3.size());
  refk::maxpool2_forward(a2.data(), h2, h2, cb, a3.data(), arg.data());
  std::vector<double> r1(a3.size()), r2(a3.size()), a4(a3.size());
  refk::conv3x3_same_forward(a3.data(), hp, hp, cb, p("block2/res1/w").data(),
                             p("block2/res1/b").data(), cb, r1.data());
  refk::relu_forward(r1.data(), r1.size(), r1.data());
  refk::conv3x3_same_forward(r1.data(), hp, hp, cb, p("block2/res2/w").data(),
                             p("block2/res2/b").data(), cb, r2.data());
  for (size_t k = 0; k < a4.size(); ++k) {
    const double s = a3[k] + r2[k];
    a4[k] = s > 0.0 ? s : 0.0;
  }
  std::vector<double> emb(e);
  refk::fc_forward(a4.data(), hp * hp * cb, p("fc/w").data(), p("fc/b").data(), e, emb.data());

  REQUIRE(forward(net, x).embedding == emb);
}

TEST_CASE("gradient accumulation is additive and order-independent") {
  Network net = build_network(conv_pool_resnet_arch(1, 2, {3}, 4), 12, 12, 1, 4, 17);
  const Tensor x = random_input(12, 12, 1, 18);
  const std::vector<double> g1 = {1.0, -2.0, 0.5, 3.0};
  const std::vector<double> g2 = {-0.25, 0.75, 2.0, -1.0};

  net.zero_grads();
  Tape t = forward(net, x);
  backward(net, t, g1);
  std::vector<std::vector<double>> once;
  for (const auto& p : net.params) once.push_back(p.t.grad);

  backward(net, t, g1);
  for (size_t i = 0; i < net.params.size(); ++i) {
    for (size_t k = 0; k < once[i].size(); ++k) {
      REQUIRE(net.params[i].t.grad[k] == 2.0 * once[i][k]);
    }
  }

  net.zero_grads();
  backward(net, t, g1);
  backward(net, t, g2);
  std::vector<std::vector<double>> ab;
  for (const auto& p : net.params) ab.push_back(p.t.grad);
  net.zero_grads();
  backward(net, t, g2);
  backward(net, t, g1);
  for (size_t i = 0; i < net.params.size(); ++i) REQUIRE(net.params[i].t.grad == ab[i]);

  net.zero_grads();
  backward(net, t, std::vector<double>(4, 0.0));
  for (const auto& p : net.params) {
    for (double v : p.t.grad) REQUIRE(v == 0.0);
  }
}

TEST_CASE("error contracts: shapes, state, configuration") {
  Network net = build_network(conv_pool_resnet_arch(1, 2, {3}, 4), 12, 12, 1, 4, 17);
  const Tensor bad({5, 5, 1});
  REQUIRE_THROWS_WITH_AS(forward(net, bad), doctest::Contains("[12x12x1]"), ShapeError);

  Tape cold = forward(net, random_input(12, 12, 1, 2), 0, false);
  REQUIRE_THROWS_AS(backward(net, cold, std::vector<double>(4, 0.0)), StateError);

  Tape t = forward(net, random_input(12, 12, 1, 2));
  REQUIRE_THROWS_AS(backward(net, t, std::vector<double>(3, 0.0)), ShapeError);

  // Inconsistent channel chain names the offending layer.
  Arch broken = conv_pool_resnet_arch(1, 2, {3}, 4);
  broken.layers[2].in_channels = 7;
  REQUIRE_THROWS_WITH_AS(build_network(broken, 12, 12, 1, 4, 1), doctest::Contains("layer 2"),
                         ConfigError);

  REQUIRE_THROWS_AS(finite_diff_check(net, random_input(12, 12, 1, 2), kSumLoss, 0.0),
                    ArgumentError);
}

TEST_CASE("finite differences: exact for linear maps, 1e-4 for the conv tower") {
  Network lin = build_network(single_fc_arch(3), 1, 1, 5, 3, 21);
  Rng rng(22);
  Tensor x({5});
  for (auto& v : x.values) v = rng.gaussian();
  // Linear in every parameter: exact at any step, so a wide one suppresses
  // rounding noise.
  const auto lin_rep = finite_diff_check(lin, x, kSumLoss, 1e-2);
  CHECK(lin_rep.max_rel_error < 1e-10);

  Network net = build_network(conv_pool_resnet_arch(1, 2, {3}, 4), 12, 12, 1, 4, 23);
  const auto rep = finite_diff_check(net, random_input(12, 12, 1, 24), kSquaredNormLoss, 1e-5);
  CHECK(rep.max_rel_error < 1e-4);
}
