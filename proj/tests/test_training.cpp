#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "modnet/checkpoint.hpp"
#include "modnet/error.hpp"
#include "modnet/eval.hpp"
#include "modnet/training.hpp"

using namespace modnet;

namespace {

Dataset small_dataset(int tasks, int samples, uint64_t seed) {
  AttributeSpec spec;
  spec.attribute_count = tasks;
  spec.correlation.assign(tasks, std::vector<double>(tasks, 0.0));
  for (int i = 0; i < tasks; ++i) spec.correlation[i][i] = 1.0;
  spec.sample_count = samples;
  spec.input_kind = InputKind::Vector;
  spec.dim = 12;
  spec.noise_sigma = 0.8;
  spec.seed = seed;
  return generate_dataset(spec);
}

TrainConfig small_config(int tasks) {
  TrainConfig cfg;
  cfg.net.conv = false;
  cfg.net.input_h = 1;
  cfg.net.input_w = 1;
  cfg.net.input_c = 12;
  cfg.net.embedding_dim = 8;
  cfg.insertion = {"fc", ModVariant::ScalingVector};
  cfg.tasks = tasks;
  cfg.batch_size = 4 * tasks;
  cfg.epochs = 3;
  cfg.eval_triplets_per_task = 40;
  cfg.seed = 5;
  return cfg;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("adagrad reproduces the hand-computed update") {
  std::vector<double> p = {1.0};
  std::vector<double> g = {0.5};
  std::vector<double> acc = {0.0};
  adagrad_step(p, g, acc, 0.01, 1e-8);
  CHECK(acc[0] == doctest::Approx(0.25).epsilon(1e-15));
  const double expected = 1.0 - 0.01 * 0.5 / (std::sqrt(0.25) + 1e-8);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-7));

  // Zero gradient leaves parameters and accumulators untouched.
  std::vector<double> p2 = {1.0, -2.0};
  std::vector<double> acc2 = {0.3, 0.0};
  adagrad_step(p2, {0.0, 0.0}, acc2, 0.01, 1e-8);
  CHECK(p2 == std::vector<double>{1.0, -2.0});
  CHECK(acc2 == std::vector<double>{0.3, 0.0});

  // Constant gradients: per-coordinate step magnitudes strictly shrink.
  std::vector<double> p3 = {0.0};
  std::vector<double> acc3 = {0.0};
  double prev = 1e300;
  for (int i = 0; i < 5; ++i) {
    const double before = p3[0];
    adagrad_step(p3, {0.7}, acc3, 0.01, 1e-8);
    const double step = std::fabs(p3[0] - before);
    CHECK(step < prev);
    prev = step;
  }

  CHECK_THROWS_AS(adagrad_step(p3, {1.0, 2.0}, acc3, 0.01, 1e-8), ShapeError);
}

TEST_CASE("balanced batches split evenly across tasks") {
  const Dataset ds7 = small_dataset(7, 300, 1);
  TrainConfig cfg = small_config(7);
  cfg.batch_size = 168;
  const TripletBatch b = balanced_batch(ds7, cfg, 3);
  REQUIRE(b.entries.size() == 168);
  std::vector<int> per_task(7, 0);
  for (const auto& tr : b.entries) ++per_task[tr.task];
  for (int t = 0; t < 7; ++t) CHECK(per_task[t] == 24);

  cfg.batch_size = 180;
  cfg.tasks = 20;
  const Dataset ds20 = small_dataset(20, 400, 2);
  const TripletBatch b20 = balanced_batch(ds20, cfg, 3);
  std::vector<int> pt(20, 0);
  for (const auto& tr : b20.entries) ++pt[tr.task];
  for (int t = 0; t < 20; ++t) CHECK(pt[t] == 9);

  cfg.tasks = 1;
  const Dataset ds1 = small_dataset(1, 300, 3);
  const TripletBatch b1 = balanced_batch(ds1, cfg, 4);
  CHECK(b1.entries.size() == 180);

  cfg.tasks = 7;
  cfg.batch_size = 20;
  CHECK_THROWS_WITH_AS(balanced_batch(ds7, cfg, 3), doctest::Contains("divisible"), ConfigError);
}

TEST_CASE("variant structures expose the documented sharing split") {
  TrainConfig cfg = small_config(3);

  cfg.variant = Variant::Independent;
  const VariantModel itn = build_variant(cfg, 1);
  REQUIRE(itn.nets.size() == 3);
  CHECK(itn.shared_param_count() == 0);
  CHECK(itn.task_param_count() == 3 * (12 * 8 + 8));

  cfg.variant = Variant::FullyShared;
  const VariantModel fsn = build_variant(cfg, 1);
  CHECK(fsn.task_param_count() == 0);
  CHECK(fsn.shared_param_count() == 12 * 8 + 8);

  cfg.variant = Variant::IndependentBranch;
  cfg.branch_dim = 5;
  const VariantModel ib = build_variant(cfg, 1);
  CHECK(ib.task_param_count() == 3 * (8 * 5 + 5));
  CHECK(ib.nets[0].embedding_dim == 5);

  cfg.variant = Variant::CsnMask;
  const VariantModel csn = build_variant(cfg, 1);
  const auto& mp = csn.nets[0].mod_points.at(0);
  std::vector<double> coverage(8, 0.0);
  for (int t = 0; t < 3; ++t) {
    const auto& w = csn.nets[0].params[mp.weight[t]].t.values;
    CHECK_FALSE(csn.nets[0].params[mp.weight[t]].trainable);
    for (size_t k = 0; k < w.size(); ++k) {
      CHECK((w[k] == 0.0 || w[k] == 1.0));
      coverage[k] += w[k];
    }
  }
  for (double c : coverage) CHECK(c <= 1.0);  // non-overlapping slices

  cfg.variant = Variant::Modulated;
  const VariantModel mod = build_variant(cfg, 1);
  CHECK(mod.task_param_count() == 3 * 8);
  CHECK(mod.shared_param_count() == fsn.shared_param_count());
}

TEST_CASE("a zero learning rate trains to exactly the initial parameters") {
  const Dataset ds = small_dataset(2, 160, 4);
  TrainConfig cfg = small_config(2);
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  const TrainResult res = train(cfg, ds);
  const VariantModel fresh = build_variant(cfg, cfg.seed);
  for (size_t i = 0; i < fresh.nets[0].params.size(); ++i) {
    CHECK(res.model.nets[0].params[i].t.values == fresh.nets[0].params[i].t.values);
  }
}

TEST_CASE("training is deterministic and the loss comes down") {
  const Dataset ds = small_dataset(2, 400, 6);
  TrainConfig cfg = small_config(2);
  cfg.epochs = 10;
  const TrainResult a = train(cfg, ds);
  const TrainResult b = train(cfg, ds);

  const std::string pa = tmp_path("train_a.bin");
  const std::string pb = tmp_path("train_b.bin");
  a.model.save(pa);
  b.model.save(pb);
  std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);

  double first = 0.0, tenth = 0.0;
  for (double l : a.metrics.front().task_loss) first += l;
  for (double l : a.metrics.back().task_loss) tenth += l;
  CHECK(tenth < first);

  // Matching per-epoch metrics across the two runs.
  for (size_t e = 0; e < a.metrics.size(); ++e) {
    CHECK(a.metrics[e].task_loss == b.metrics[e].task_loss);
    CHECK(a.metrics[e].task_accuracy == b.metrics[e].task_accuracy);
  }
}

TEST_CASE("only-mask training freezes the shared parameters bit for bit") {
  const Dataset ds = small_dataset(2, 240, 7);
  TrainConfig cfg = small_config(2);
  cfg.variant = Variant::OnlyMask;
  cfg.epochs = 3;

  // Pre-trained checkpoint: a modulated run's weights.
  TrainConfig pre = small_config(2);
  pre.variant = Variant::Modulated;
  pre.epochs = 2;
  const TrainResult warm = train(pre, ds);
  const std::string ckpt = tmp_path("warm.bin");
  warm.model.save(ckpt);
  cfg.init_checkpoint = ckpt;

  const TrainResult res = train(cfg, ds);
  bool any_mod_changed = false;
  for (size_t i = 0; i < res.model.nets[0].params.size(); ++i) {
    const auto& after = res.model.nets[0].params[i];
    const auto& before = warm.model.nets[0].params[i];
    if (after.task_specific) {
      any_mod_changed |= (after.t.values != before.t.values);
    } else {
      REQUIRE(after.t.values == before.t.values);
    }
  }
  CHECK(any_mod_changed);
}

TEST_CASE("per-task gradient accumulation matches a serial recomputation") {
  const Dataset ds = small_dataset(2, 200, 8);
  TrainConfig cfg = small_config(2);
  const VariantModel model = build_variant(cfg, 11);
  const Network& net = model.nets[0];

  TripletBatch batch = balanced_batch(ds, cfg, 13);
  std::vector<Triplet> task0;
  for (const auto& tr : batch.entries) {
    if (tr.task == 0) task0.push_back(tr);
  }

  std::vector<std::vector<double>> accum;
  for (const auto& p : net.params) accum.emplace_back(p.t.numel(), 0.0);
  Network scratch = net;
  const double loss = accumulate_task_gradients(scratch, task0, ds, cfg.margins.alpha, false, accum);

  // Serial oracle: per-triplet backward into a fresh network, summed by hand.
  Network oracle_net = net;
  std::vector<std::vector<double>> expected;
  for (const auto& p : net.params) expected.emplace_back(p.t.numel(), 0.0);
  double expected_loss = 0.0;
  for (const auto& tr : task0) {
    oracle_net.zero_grads();
    Tape ta = forward(oracle_net, ds.inputs[tr.anchor], tr.task);
    Tape tp = forward(oracle_net, ds.inputs[tr.positive], tr.task);
    Tape tn = forward(oracle_net, ds.inputs[tr.negative], tr.task);
    const TripletResult r = triplet_loss(ta.embedding, tp.embedding, tn.embedding, cfg.margins.alpha);
    backward(oracle_net, ta, r.grad_anchor);
    backward(oracle_net, tp, r.grad_positive);
    backward(oracle_net, tn, r.grad_negative);
    expected_loss += r.loss;
    for (size_t p = 0; p < expected.size(); ++p) {
      for (size_t k = 0; k < expected[p].size(); ++k) {
        expected[p][k] += oracle_net.params[p].t.grad[k];
      }
    }
  }
  CHECK(loss == expected_loss);
  for (size_t p = 0; p < expected.size(); ++p) CHECK(accum[p] == expected[p]);
}

TEST_CASE("divergence aborts with the offending step") {
  const Dataset ds = small_dataset(2, 160, 9);
  TrainConfig cfg = small_config(2);
  cfg.learning_rate = 1e155;  // one step is enough to overflow the squared distances
  cfg.epochs = 2;
  CHECK_THROWS_WITH_AS(train(cfg, ds), doctest::Contains("step"), NumericError);
}

TEST_CASE("the relevance regularizer pulls declared-relevant tasks together") {
  const Dataset ds = small_dataset(3, 240, 10);
  TrainConfig cfg = small_config(3);
  cfg.margins.lambda = 0.5;
  cfg.margins.beta = 0.05;
  cfg.relevance_triples = {{0, 1, 2}};
  cfg.epochs = 4;
  const TrainResult res = train(cfg, ds);

  TrainConfig off = cfg;
  off.margins.lambda = 0.0;
  const TrainResult base = train(off, ds);

  const auto with_reg = task_distance(res.model.nets[0], 0, 1);
  const auto without = task_distance(base.model.nets[0], 0, 1);
  CHECK(with_reg.mean <= without.mean);
}

TEST_CASE("normalized-embedding training runs and stays deterministic") {
  const Dataset ds = small_dataset(2, 160, 12);
  TrainConfig cfg = small_config(2);
  cfg.normalize_embeddings = true;
  cfg.epochs = 2;
  const TrainResult a = train(cfg, ds);
  const TrainResult b = train(cfg, ds);
  for (size_t i = 0; i < a.model.nets[0].params.size(); ++i) {
    CHECK(a.model.nets[0].params[i].t.values == b.model.nets[0].params[i].t.values);
  }
  for (double l : a.metrics.back().task_loss) CHECK(std::isfinite(l));
}
