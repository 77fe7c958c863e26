#include "modnet/training.hpp"

#include <cmath>
#include <cstdio>

#include "modnet/checkpoint.hpp"
#include "modnet/error.hpp"
#include "modnet/eval.hpp"

namespace modnet {

void adagrad_step(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& acc,
                  double learning_rate, double epsilon) {
  if (p.size() != g.size() || p.size() != acc.size()) {
    throw ShapeError("adagrad_step: parameter/gradient/accumulator lengths differ");
  }
  for (size_t k = 0; k < p.size(); ++k) {
    acc[k] += g[k] * g[k];
    p[k] -= learning_rate * g[k] / (std::sqrt(acc[k]) + epsilon);
  }
}

AdagradState make_adagrad(const Network& net, double learning_rate, double epsilon) {
  AdagradState st;
  st.learning_rate = learning_rate;
  st.epsilon = epsilon;
  st.acc.reserve(net.params.size());
  for (const auto& p : net.params) st.acc.emplace_back(p.t.numel(), 0.0);
  return st;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Modulated: return "modulated";
    case Variant::FullyShared: return "fully-shared";
    case Variant::Independent: return "independent";
    case Variant::IndependentBranch: return "independent-branch";
    case Variant::OnlyMask: return "only-mask";
    case Variant::CsnMask: return "csn-mask";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "modulated") return Variant::Modulated;
  if (name == "fully-shared") return Variant::FullyShared;
  if (name == "independent") return Variant::Independent;
  if (name == "independent-branch") return Variant::IndependentBranch;
  if (name == "only-mask") return Variant::OnlyMask;
  if (name == "csn-mask") return Variant::CsnMask;
  throw ConfigError("unknown variant '" + name + "'");
}

Network build_base_network(const NetworkShape& shape, uint64_t seed) {
  if (shape.embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (shape.conv) {
    const Arch arch = conv_pool_resnet_arch(shape.input_c, shape.conv1_channels,
                                            shape.block_channels, shape.embedding_dim);
    return build_network(arch, shape.input_h, shape.input_w, shape.input_c, shape.embedding_dim,
                         seed);
  }
  const Arch arch = single_fc_arch(shape.embedding_dim);
  return build_network(arch, 1, 1, shape.input_h * shape.input_w * shape.input_c,
                       shape.embedding_dim, seed);
}

std::string TrainConfig::label() const {
  std::string l = variant_name(variant);
  if (variant == Variant::Modulated || variant == Variant::OnlyMask) {
    l += "[" + insertion.from_block +
         (insertion.variant == ModVariant::ProjectionMatrix ? ",projection" : "") + "]";
  }
  if (variant == Variant::IndependentBranch) l += "[" + std::to_string(branch_dim) + "]";
  return l;
}

void TrainConfig::validate(int dataset_attributes) const {
  if (tasks < 1) throw ConfigError("tasks must be >= 1");
  if (tasks > dataset_attributes) {
    throw ConfigError("tasks (" + std::to_string(tasks) + ") exceed dataset attributes (" +
                      std::to_string(dataset_attributes) + ")");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (batch_size % tasks != 0) {
    throw ConfigError("batch_size " + std::to_string(batch_size) +
                      " is not divisible by tasks " + std::to_string(tasks));
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(margins.alpha >= 0.0) || !(margins.beta >= 0.0) || !(margins.lambda >= 0.0) ||
      !std::isfinite(margins.alpha) || !std::isfinite(margins.beta) ||
      !std::isfinite(margins.lambda)) {
    throw ConfigError("margins (alpha, beta, lambda) must be finite and >= 0");
  }
  if (heldout_fraction <= 0.0 || heldout_fraction >= 1.0) {
    throw ConfigError("heldout_fraction must lie in (0, 1)");
  }
  if (eval_triplets_per_task < 1) throw ConfigError("eval_triplets_per_task must be >= 1");
  if (variant == Variant::IndependentBranch && branch_dim < 1) {
    throw ConfigError("independent-branch requires branch_dim >= 1");
  }
  for (const auto& tr : relevance_triples) {
    for (int id : tr) {
      if (id < 0 || id >= tasks) throw ConfigError("relevance triple names an unknown task");
    }
  }
}

int VariantModel::forward_task(int task) const {
  switch (variant) {
    case Variant::FullyShared:
    case Variant::Independent:
      return 0;
    default:
      return task;
  }
}

std::vector<double> VariantModel::embed(const Tensor& input, int task, bool normalize) const {
  if (task < 0 || task >= tasks) throw ArgumentError("task id out of range");
  std::vector<double> f = forward(net_for(task), input, forward_task(task), false).embedding;
  return normalize ? l2_normalize(f) : f;
}

size_t VariantModel::shared_param_count() const {
  if (variant == Variant::Independent) return 0;
  return nets[0].shared_param_count();
}

size_t VariantModel::task_param_count() const {
  if (variant == Variant::Independent) {
    size_t n = 0;
    for (const auto& net : nets) {
      for (const auto& p : net.params) n += p.t.numel();
    }
    return n;
  }
  return nets[0].task_param_count();
}

void VariantModel::zero_grads() {
  for (auto& net : nets) net.zero_grads();
}

void VariantModel::save(const std::string& path) const {
  if (variant == Variant::Independent) {
    std::vector<Record> records;
    for (size_t t = 0; t < nets.size(); ++t) {
      for (const auto& p : nets[t].params) {
        records.push_back({"task" + std::to_string(t) + "/" + p.name, Tensor(p.t.shape, p.t.values)});
      }
    }
    save_records(path, records);
    return;
  }
  save_checkpoint(path, nets[0]);
}

void VariantModel::load(const std::string& path) {
  if (variant == Variant::Independent) {
    const auto records = load_records(path);
    for (size_t t = 0; t < nets.size(); ++t) {
      for (auto& p : nets[t].params) {
        const std::string want = "task" + std::to_string(t) + "/" + p.name;
        bool found = false;
        for (const auto& r : records) {
          if (r.name == want) {
            if (r.tensor.shape != p.t.shape) {
              throw ConfigError("checkpoint parameter '" + want + "' has the wrong shape");
            }
            p.t.values = r.tensor.values;
            found = true;
            break;
          }
        }
        if (!found) throw ConfigError("checkpoint is missing parameter '" + want + "'");
      }
    }
    return;
  }
  load_checkpoint(path, nets[0]);
}

namespace {

// Per-task fully-connected heads after the embedding layer (the
// independent-branch baseline). Changes the model's embedding width to
// branch_dim.
void add_branch_heads(Network& net, int task_count, int branch_dim, uint64_t seed) {
  const int e = net.embedding_dim;
  Rng rng(substream(seed, 0xB4A9C));
  const double bound = std::sqrt(3.0 / e);
  ModPoint mp;
  mp.after_layer = static_cast<int>(net.layers.size()) - 1;
  mp.stage = net.layers.back().stage;
  mp.kind = ModKind::BranchFc;
  mp.in_dim = e;
  mp.out_dim = branch_dim;
  for (int t = 0; t < task_count; ++t) {
    Param w;
    w.name = "branch/" + std::to_string(t) + "/w";
    w.task_specific = true;
    w.t = Tensor({static_cast<size_t>(branch_dim), static_cast<size_t>(e)});
    for (auto& v : w.t.values) v = rng.uniform(-bound, bound);
    mp.weight.push_back(net.add_param(std::move(w)));
    Param b;
    b.name = "branch/" + std::to_string(t) + "/b";
    b.task_specific = true;
    b.t = Tensor({static_cast<size_t>(branch_dim)});
    for (auto& v : b.t.values) v = rng.uniform(-bound, bound);
    mp.bias.push_back(net.add_param(std::move(b)));
  }
  net.mod_points.push_back(std::move(mp));
  net.task_count = task_count;
  net.embedding_dim = branch_dim;
  net.rebuild_mod_index();
}

// Final-layer masks fixed to non-overlapping channel slices, never trained.
void make_masks_fixed_nonoverlapping(Network& net) {
  for (auto& mp : net.mod_points) {
    const int e = mp.in_dim;
    const int t_count = static_cast<int>(mp.weight.size());
    if (e < t_count) {
      throw ConfigError("csn-mask requires embedding_dim >= tasks (" + std::to_string(e) + " < " +
                        std::to_string(t_count) + ")");
    }
    const int base = e / t_count;
    const int rem = e % t_count;
    int offset = 0;
    for (int t = 0; t < t_count; ++t) {
      auto& p = net.params[mp.weight[t]];
      std::fill(p.t.values.begin(), p.t.values.end(), 0.0);
      const int len = base + (t < rem ? 1 : 0);
      for (int k = 0; k < len; ++k) p.t.values[offset + k] = 1.0;
      offset += len;
      p.trainable = false;
    }
  }
}

}  // namespace

VariantModel build_variant(const TrainConfig& cfg, uint64_t seed) {
  VariantModel model;
  model.variant = cfg.variant;
  model.tasks = cfg.tasks;
  switch (cfg.variant) {
    case Variant::FullyShared:
      model.nets.push_back(build_base_network(cfg.net, seed));
      break;
    case Variant::Modulated:
    case Variant::OnlyMask:
      model.nets.push_back(
          insert_modules(build_base_network(cfg.net, seed), cfg.insertion, cfg.tasks));
      break;
    case Variant::CsnMask: {
      Network net = insert_modules(build_base_network(cfg.net, seed),
                                   {"fc", ModVariant::ScalingVector}, cfg.tasks);
      make_masks_fixed_nonoverlapping(net);
      model.nets.push_back(std::move(net));
      break;
    }
    case Variant::IndependentBranch: {
      Network net = build_base_network(cfg.net, seed);
      add_branch_heads(net, cfg.tasks, cfg.branch_dim, seed);
      model.nets.push_back(std::move(net));
      break;
    }
    case Variant::Independent:
      for (int t = 0; t < cfg.tasks; ++t) {
        model.nets.push_back(build_base_network(cfg.net, substream(seed, 0xD15C + t)));
      }
      break;
  }
  if (!cfg.init_checkpoint.empty()) model.load(cfg.init_checkpoint);
  return model;
}

TripletBatch balanced_batch(const Dataset& ds, const TrainConfig& cfg, uint64_t seed) {
  if (cfg.batch_size % cfg.tasks != 0) {
    throw ConfigError("batch_size " + std::to_string(cfg.batch_size) +
                      " is not divisible by tasks " + std::to_string(cfg.tasks));
  }
  const int per_task = cfg.batch_size / cfg.tasks;
  std::vector<int> pool(ds.inputs.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  Rng rng(substream(seed, 0xBB));
  TripletBatch batch;
  for (int t = 0; t < cfg.tasks; ++t) {
    const TripletBatch part = sample_triplets_from(ds, pool, t, per_task, rng);
    batch.entries.insert(batch.entries.end(), part.entries.begin(), part.entries.end());
  }
  return batch;
}

double accumulate_task_gradients(const Network& net, const std::vector<Triplet>& triplets,
                                 const Dataset& ds, double alpha, bool normalize,
                                 std::vector<std::vector<double>>& accum) {
  const int n = static_cast<int>(triplets.size());
  // Each triplet's contribution is computed in isolation and merged in
  // triplet order afterwards, so the result does not depend on the thread
  // count. The per-triplet buffers cost batch_size x param_count doubles,
  // fine at desk scale.
  std::vector<std::vector<double>> contrib(static_cast<size_t>(n));
  std::vector<double> losses(static_cast<size_t>(n), 0.0);
  size_t flat_dim = 0;
  for (const auto& a : accum) flat_dim += a.size();

  std::exception_ptr failure = nullptr;
#pragma omp parallel
  {
    Network local = net;
    Tape ta, tp, tn;  // buffers live across the thread's triplets
#pragma omp for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
      try {
        const Triplet& tr = triplets[i];
        local.zero_grads();
        forward_into(local, ds.inputs[tr.anchor], tr.task, true, ta);
        forward_into(local, ds.inputs[tr.positive], tr.task, true, tp);
        forward_into(local, ds.inputs[tr.negative], tr.task, true, tn);
        TripletResult res;
        if (normalize) {
          res = triplet_loss(l2_normalize(ta.embedding), l2_normalize(tp.embedding),
                             l2_normalize(tn.embedding), alpha);
          res.grad_anchor = l2_normalize_backward(ta.embedding, res.grad_anchor);
          res.grad_positive = l2_normalize_backward(tp.embedding, res.grad_positive);
          res.grad_negative = l2_normalize_backward(tn.embedding, res.grad_negative);
        } else {
          res = triplet_loss(ta.embedding, tp.embedding, tn.embedding, alpha);
        }
        backward(local, ta, res.grad_anchor);
        backward(local, tp, res.grad_positive);
        backward(local, tn, res.grad_negative);
        auto& flat = contrib[i];
        flat.reserve(flat_dim);
        for (const auto& p : local.params) {
          flat.insert(flat.end(), p.t.grad.begin(), p.t.grad.end());
        }
        losses[i] = res.loss;
      } catch (...) {
#pragma omp critical(modnet_accumulate_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    size_t off = 0;
    for (auto& a : accum) {
      const double* g = contrib[i].data() + off;
      for (size_t k = 0; k < a.size(); ++k) a[k] += g[k];
      off += a.size();
    }
    total += losses[i];
  }
  return total;
}

namespace {

std::vector<std::vector<double>> zero_like_params(const Network& net) {
  std::vector<std::vector<double>> bufs;
  bufs.reserve(net.params.size());
  for (const auto& p : net.params) bufs.emplace_back(p.t.numel(), 0.0);
  return bufs;
}

void zero_buffers(std::vector<std::vector<double>>& bufs) {
  for (auto& b : bufs) std::fill(b.begin(), b.end(), 0.0);
}

void flatten_shared_from(const Network& net, const std::vector<std::vector<double>>& accum,
                         std::vector<double>& out) {
  out.clear();
  out.reserve(net.shared_param_count());
  for (size_t p = 0; p < net.params.size(); ++p) {
    if (net.params[p].task_specific) continue;
    out.insert(out.end(), accum[p].begin(), accum[p].end());
  }
}

// Scatter the relevance-regularizer gradient (over the concatenation of one
// task's scaling vectors) back onto the per-point parameter buffers.
void scatter_mod_gradient(const Network& net, int task, const std::vector<double>& g, double scale,
                          std::vector<std::vector<double>>& accum) {
  size_t off = 0;
  for (const auto& mp : net.mod_points) {
    auto& buf = accum[mp.weight[task]];
    for (size_t k = 0; k < buf.size(); ++k) buf[k] += scale * g[off + k];
    off += buf.size();
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate(ds.spec.attribute_count);

  TrainResult result;
  result.model = build_variant(cfg, cfg.seed);
  VariantModel& model = result.model;
  result.split = split_dataset(ds.spec.sample_count, cfg.heldout_fraction, cfg.eval_seed);

  const int T = cfg.tasks;
  const int per_task = cfg.batch_size / T;

  std::vector<TripletBatch> heldout_triplets;
  for (int t = 0; t < T; ++t) {
    Rng rng(substream(cfg.eval_seed, 500 + static_cast<uint64_t>(t)));
    heldout_triplets.push_back(
        sample_triplets_from(ds, result.split.heldout, t, cfg.eval_triplets_per_task, rng));
  }

  std::vector<AdagradState> states;
  for (const auto& net : model.nets) {
    states.push_back(make_adagrad(net, cfg.learning_rate));
  }

  const bool record_ucr = cfg.ucr_enabled && model.variant != Variant::Independent;
  if (record_ucr) result.ledger = make_ledger(T, /*lean=*/true);
  result.ucr_recorded = record_ucr;

  result.steps_per_epoch =
      std::max<long>(1, static_cast<long>(result.split.train.size()) / cfg.batch_size);

  Rng batch_rng(substream(cfg.seed, 0xBA7C4));

  std::vector<std::vector<std::vector<double>>> task_accum, step_total;
  for (const auto& net : model.nets) {
    task_accum.push_back(zero_like_params(net));
    step_total.push_back(zero_like_params(net));
  }
  std::vector<double> flat;

  long batch_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> loss_sum(T, 0.0);
    std::vector<long> triplet_count(T, 0);
    for (long step = 0; step < result.steps_per_epoch; ++step) {
      std::vector<std::vector<Triplet>> batch(T);
      for (int t = 0; t < T; ++t) {
        batch[t] =
            sample_triplets_from(ds, result.split.train, t, per_task, batch_rng).entries;
      }
      for (auto& bufs : step_total) zero_buffers(bufs);
      for (int t = 0; t < T; ++t) {
        const int ni = model.net_index(t);
        Network& net = model.nets[ni];
        zero_buffers(task_accum[ni]);
        std::vector<Triplet> routed = batch[t];
        for (auto& tr : routed) tr.task = model.forward_task(t);
        const double loss = accumulate_task_gradients(net, routed, ds, cfg.margins.alpha,
                                                      cfg.normalize_embeddings, task_accum[ni]);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss for task " + std::to_string(t) + " at step " +
                             std::to_string(batch_index));
        }
        loss_sum[t] += loss;
        triplet_count[t] += static_cast<long>(routed.size());
        if (record_ucr) {
          flatten_shared_from(net, task_accum[ni], flat);
          record_task_gradients(result.ledger, batch_index, t, flat);
        }
        auto& totals = step_total[ni];
        const auto& part = task_accum[ni];
        for (size_t p = 0; p < totals.size(); ++p) {
          for (size_t k = 0; k < totals[p].size(); ++k) totals[p][k] += part[p][k];
        }
      }

      if (cfg.margins.lambda > 0.0 && !cfg.relevance_triples.empty() &&
          !model.nets[0].mod_points.empty()) {
        Network& net = model.nets[0];
        for (const auto& triple : cfg.relevance_triples) {
          const auto wi = concat_task_vectors(net, triple[0]);
          const auto wj = concat_task_vectors(net, triple[1]);
          const auto wk = concat_task_vectors(net, triple[2]);
          const RelevanceResult rr = relevance_regularizer(wi, wj, wk, cfg.margins.beta);
          scatter_mod_gradient(net, triple[0], rr.grad_i, cfg.margins.lambda, step_total[0]);
          scatter_mod_gradient(net, triple[1], rr.grad_j, cfg.margins.lambda, step_total[0]);
          scatter_mod_gradient(net, triple[2], rr.grad_k, cfg.margins.lambda, step_total[0]);
        }
      }

      for (size_t ni = 0; ni < model.nets.size(); ++ni) {
        Network& net = model.nets[ni];
        for (size_t p = 0; p < net.params.size(); ++p) {
          Param& param = net.params[p];
          if (!param.trainable) continue;
          if (model.variant == Variant::OnlyMask && !param.task_specific) continue;
          adagrad_step(param.t.values, step_total[ni][p], states[ni].acc[p],
                       states[ni].learning_rate, states[ni].epsilon);
        }
      }
      ++batch_index;
    }

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      model.save(cfg.checkpoint_prefix + "epoch" + std::to_string(epoch + 1) + ".bin");
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.steps_done = batch_index;
    for (int t = 0; t < T; ++t) {
      m.task_loss.push_back(loss_sum[t] / static_cast<double>(triplet_count[t]));
      m.task_accuracy.push_back(
          retrieval_accuracy(model, t, heldout_triplets[t], ds, cfg.normalize_embeddings));
    }
    result.metrics.push_back(std::move(m));
  }
  return result;
}

void write_metrics_csv(std::ostream& os, const std::string& variant_label,
                       const std::vector<EpochMetrics>& metrics) {
  os << "epoch,step,variant,task,loss,accuracy\n";
  char buf[64];
  for (const auto& m : metrics) {
    for (size_t t = 0; t < m.task_loss.size(); ++t) {
      os << m.epoch << "," << m.steps_done << "," << variant_label << "," << t << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", m.task_loss[t]);
      os << buf << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", m.task_accuracy[t]);
      os << buf << "\n";
    }
  }
}

}  // namespace modnet
