#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "modnet/error.hpp"
#include "modnet/losses.hpp"
#include "modnet/rng.hpp"
#include "modnet/training.hpp"

using namespace modnet;

namespace {

// Independent central-difference oracle over a scalar function of one vector.
template <typename F>
std::vector<double> numeric_grad(F f, std::vector<double> v, double step = 1e-5) {
  std::vector<double> g(v.size());
  for (size_t k = 0; k < v.size(); ++k) {
    const double orig = v[k];
    v[k] = orig + step;
    const double fp = f(v);
    v[k] = orig - step;
    const double fm = f(v);
    v[k] = orig;
    g[k] = (fp - fm) / (2.0 * step);
  }
  return g;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    const double denom = std::max({std::fabs(a[k]), std::fabs(b[k]), 1e-12});
    CHECK(std::fabs(a[k] - b[k]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("triplet loss hand-computed values") {
  // Inactive hinge: 0 + 0.2 - 1 < 0.
  auto r = triplet_loss({0.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}, 0.2);
  CHECK(r.loss == 0.0);
  for (double v : r.grad_anchor) CHECK(v == 0.0);
  for (double v : r.grad_positive) CHECK(v == 0.0);
  for (double v : r.grad_negative) CHECK(v == 0.0);

  // 0.25 + 0.2 - 0.36.
  r = triplet_loss({0.0}, {0.5}, {0.6}, 0.2);
  CHECK(r.loss == doctest::Approx(0.09).epsilon(1e-12));

  // Anchor equals negative: loss d^2 + alpha, grad wrt positive 2(p - a).
  const std::vector<double> a = {1.0, -2.0}, p = {1.5, -1.0};
  r = triplet_loss(a, p, a, 0.2);
  CHECK(r.loss == doctest::Approx(0.25 + 1.0 + 0.2).epsilon(1e-12));
  CHECK(r.grad_positive[0] == doctest::Approx(2.0 * (p[0] - a[0])).epsilon(1e-12));
  CHECK(r.grad_positive[1] == doctest::Approx(2.0 * (p[1] - a[1])).epsilon(1e-12));

  CHECK_THROWS_AS(triplet_loss({0.0}, {0.0, 1.0}, {0.0}, 0.2), ShapeError);
}

TEST_CASE("triplet loss gradients match central differences to 1e-8") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a(4), p(4), n(4);
    for (auto* v : {&a, &p, &n}) {
      for (auto& x : *v) x = rng.gaussian();
    }
    const double alpha = 0.2;
    const auto res = triplet_loss(a, p, n, alpha);
    // Stay away from the hinge boundary.
    double dp = 0.0, dn = 0.0;
    for (size_t k = 0; k < 4; ++k) {
      dp += (a[k] - p[k]) * (a[k] - p[k]);
      dn += (a[k] - n[k]) * (a[k] - n[k]);
    }
    if (std::fabs(dp + alpha - dn) < 1e-3) continue;

    check_close(res.grad_anchor,
                numeric_grad([&](const std::vector<double>& v) { return triplet_loss(v, p, n, alpha).loss; }, a),
                1e-8);
    check_close(res.grad_positive,
                numeric_grad([&](const std::vector<double>& v) { return triplet_loss(a, v, n, alpha).loss; }, p),
                1e-8);
    check_close(res.grad_negative,
                numeric_grad([&](const std::vector<double>& v) { return triplet_loss(a, p, v, alpha).loss; }, n),
                1e-8);
  }
}

TEST_CASE("relevance regularizer hand-computed values") {
  // Identical relevant pair, distant irrelevant pair: inactive.
  auto r = relevance_regularizer({1.0, 1.0}, {1.0, 1.0}, {3.0, 3.0}, 0.5);
  CHECK(r.loss == 0.0);

  r = relevance_regularizer({1.0}, {2.0}, {1.5}, 0.5);
  CHECK(r.loss == doctest::Approx(1.25).epsilon(1e-12));

  // w_j == w_k cancels both distances: loss is exactly beta.
  const std::vector<double> wi = {0.3, -0.7}, wjk = {1.1, 0.4};
  r = relevance_regularizer(wi, wjk, wjk, 0.37);
  CHECK(r.loss == doctest::Approx(0.37).epsilon(1e-12));

  CHECK_THROWS_AS(relevance_regularizer({1.0}, {1.0, 2.0}, {1.0}, 0.1), ShapeError);

  // Gradients against the oracle.
  const std::vector<double> a = {0.2, -1.0}, b = {-0.4, 0.8}, c = {1.0, 0.5};
  const auto res = relevance_regularizer(a, b, c, 0.5);
  REQUIRE(res.loss > 0.0);
  check_close(res.grad_i,
              numeric_grad([&](const std::vector<double>& v) { return relevance_regularizer(v, b, c, 0.5).loss; }, a),
              1e-8);
  check_close(res.grad_j,
              numeric_grad([&](const std::vector<double>& v) { return relevance_regularizer(a, v, c, 0.5).loss; }, b),
              1e-8);
  check_close(res.grad_k,
              numeric_grad([&](const std::vector<double>& v) { return relevance_regularizer(a, b, v, 0.5).loss; }, c),
              1e-8);
}

TEST_CASE("batch triplet loss sums per-triplet losses with task routing") {
  AttributeSpec spec;
  spec.attribute_count = 2;
  spec.correlation = {{1.0, 0.0}, {0.0, 1.0}};
  spec.sample_count = 60;
  spec.input_kind = InputKind::Vector;
  spec.dim = 6;
  spec.noise_sigma = 0.5;
  spec.seed = 5;
  const Dataset ds = generate_dataset(spec);

  Network net = insert_modules(build_network(single_fc_arch(4), 1, 1, 6, 4, 6),
                               {"fc", ModVariant::ScalingVector}, 2);
  // Distinct per-task modulation so routing matters.
  net.params[net.mod_points[0].weight[1]].t.values = {0.5, -1.0, 2.0, 0.25};

  TripletBatch batch;
  for (int t = 0; t < 2; ++t) {
    const auto part = sample_triplets(ds, t, 3, 99);
    batch.entries.insert(batch.entries.end(), part.entries.begin(), part.entries.end());
  }

  double expected = 0.0;
  for (const auto& tr : batch.entries) {
    const auto fa = forward(net, ds.inputs[tr.anchor], tr.task, false).embedding;
    const auto fp = forward(net, ds.inputs[tr.positive], tr.task, false).embedding;
    const auto fn = forward(net, ds.inputs[tr.negative], tr.task, false).embedding;
    expected += triplet_loss(fa, fp, fn, 0.2).loss;
  }
  CHECK(batch_triplet_loss(batch, net, ds, 0.2) == doctest::Approx(expected).epsilon(1e-12));

  // Singleton reduction.
  TripletBatch one;
  one.entries = {batch.entries[0]};
  const auto& tr = one.entries[0];
  const double single =
      triplet_loss(forward(net, ds.inputs[tr.anchor], tr.task, false).embedding,
                   forward(net, ds.inputs[tr.positive], tr.task, false).embedding,
                   forward(net, ds.inputs[tr.negative], tr.task, false).embedding, 0.2)
          .loss;
  CHECK(batch_triplet_loss(one, net, ds, 0.2) == doctest::Approx(single).epsilon(1e-12));

  // Permutation invariance.
  TripletBatch shuffled = batch;
  std::reverse(shuffled.entries.begin(), shuffled.entries.end());
  CHECK(batch_triplet_loss(shuffled, net, ds, 0.2) ==
        doctest::Approx(batch_triplet_loss(batch, net, ds, 0.2)).epsilon(1e-12));

  CHECK_THROWS_AS(batch_triplet_loss(TripletBatch{}, net, ds, 0.2), ArgumentError);
}

TEST_CASE("embedding normalization has the exact pullback") {
  Rng rng(17);
  std::vector<double> f(5);
  for (auto& v : f) v = rng.gaussian();
  std::vector<double> d(5);
  for (auto& v : d) v = rng.gaussian();

  const auto analytic = l2_normalize_backward(f, d);
  const auto numeric = numeric_grad(
      [&](const std::vector<double>& v) {
        const auto nf = l2_normalize(v);
        double s = 0.0;
        for (size_t k = 0; k < nf.size(); ++k) s += nf[k] * d[k];
        return s;
      },
      f);
  check_close(analytic, numeric, 1e-7);

  const auto nf = l2_normalize(f);
  double norm = 0.0;
  for (double v : nf) norm += v * v;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}
