#pragma once

#include <array>
#include <string>
#include <vector>

#include "modnet/losses.hpp"
#include "modnet/modulation.hpp"
#include "modnet/network.hpp"
#include "modnet/synthetic.hpp"
#include "modnet/ucr.hpp"

namespace modnet {

struct AdagradState {
  double learning_rate = 0.01;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> acc;  // one accumulator per parameter
};

// acc += g^2; p -= lr * g / (sqrt(acc) + eps), coordinatewise.
void adagrad_step(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& acc,
                  double learning_rate, double epsilon);

AdagradState make_adagrad(const Network& net, double learning_rate, double epsilon = 1e-8);

enum class Variant { Modulated, FullyShared, Independent, IndependentBranch, OnlyMask, CsnMask };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Base embedding network: either the conv tower or a lone fully-connected
// layer for vector inputs.
struct NetworkShape {
  bool conv = true;
  int input_h = 32, input_w = 32, input_c = 1;
  int conv1_channels = 8;
  std::vector<int> block_channels = {16, 16};
  int embedding_dim = 16;
};

Network build_base_network(const NetworkShape& shape, uint64_t seed);

struct TrainConfig {
  NetworkShape net;
  InsertionSpec insertion = {"block2", ModVariant::ScalingVector};
  Margins margins;
  Variant variant = Variant::Modulated;
  int branch_dim = 0;  // IndependentBranch head width
  int batch_size = 40;
  int epochs = 30;
  int tasks = 4;
  uint64_t seed = 1;
  // Split and held-out benchmark sampling; shared across variants so they all
  // face identical evaluation triplets.
  uint64_t eval_seed = 12345;
  double learning_rate = 0.01;
  bool ucr_enabled = true;
  bool normalize_embeddings = false;
  double heldout_fraction = 0.2;
  int eval_triplets_per_task = 200;
  std::string init_checkpoint;
  // When positive, a checkpoint lands at <checkpoint_prefix>epoch<k>.bin
  // every checkpoint_every epochs.
  int checkpoint_every = 0;
  std::string checkpoint_prefix;
  // (i, j, k): pair (i, j) declared more relevant than (i, k). Only consulted
  // when margins.lambda > 0.
  std::vector<std::array<int, 3>> relevance_triples;

  std::string label() const;
  void validate(int dataset_attributes) const;
};

// The parameter-sharing structure of one baseline or of the modulated method:
// a single network for all variants except Independent, which holds one
// network per task.
struct VariantModel {
  Variant variant = Variant::FullyShared;
  int tasks = 1;
  std::vector<Network> nets;

  int net_index(int task) const { return variant == Variant::Independent ? task : 0; }
  Network& net_for(int task) { return nets[net_index(task)]; }
  const Network& net_for(int task) const { return nets[net_index(task)]; }
  // Task id to pass to forward(): single-network variants route per task,
  // the others embed task-agnostically.
  int forward_task(int task) const;

  std::vector<double> embed(const Tensor& input, int task, bool normalize = false) const;
  size_t shared_param_count() const;
  size_t task_param_count() const;
  void zero_grads();
  void save(const std::string& path) const;
  void load(const std::string& path);
};

VariantModel build_variant(const TrainConfig& cfg, uint64_t seed);

// Exactly batch_size / tasks triplets per task; throws ConfigError when the
// batch size is not divisible by the task count.
TripletBatch balanced_batch(const Dataset& ds, const TrainConfig& cfg, uint64_t seed);

// Sub-batch forward/backward with per-triplet gradient contributions summed
// in triplet order into accum (one buffer per parameter of net). Thread-count
// invariant. Returns the summed triplet loss.
double accumulate_task_gradients(const Network& net, const std::vector<Triplet>& triplets,
                                 const Dataset& ds, double alpha, bool normalize,
                                 std::vector<std::vector<double>>& accum);

struct EpochMetrics {
  int epoch = 0;
  long steps_done = 0;
  std::vector<double> task_loss;      // mean per triplet
  std::vector<double> task_accuracy;  // held-out retrieval accuracy
};

struct TrainResult {
  VariantModel model;
  std::vector<EpochMetrics> metrics;
  UcrLedger ledger;  // empty when UCR is disabled or undefined for the variant
  bool ucr_recorded = false;
  Split split;
  long steps_per_epoch = 0;
};

TrainResult train(const TrainConfig& cfg, const Dataset& ds);

void write_metrics_csv(std::ostream& os, const std::string& variant_label,
                       const std::vector<EpochMetrics>& metrics);

}  // namespace modnet
