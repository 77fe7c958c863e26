#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modnet/tensor.hpp"

namespace modnet {

enum class LayerKind { Conv3x3, PoolStride2, ResnetBlock, FullyConnected, Relu };

std::string layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  int in_channels = 0;
  int out_channels = 0;
  int output_dim = 0;  // FullyConnected only
};

// Flat layer list plus a stage label per layer. The last layer of each stage
// is a boundary where task modulation can be inserted.
struct Arch {
  std::vector<LayerSpec> layers;
  std::vector<std::string> stages;
};

// Stage "conv1" (3x3 conv + relu), then one Conv-Pool-ResnetBlock stage per
// entry of block_channels ("block2", "block3", ...), then the final
// fully-connected embedding stage "fc". A block is a valid 3x3 conv, relu, a
// stride-2 max pool, and a two-conv residual block with shape-preserving
// padding.
Arch conv_pool_resnet_arch(int input_channels, int conv1_channels,
                           const std::vector<int>& block_channels,
                           int embedding_dim);

// A lone embedding layer, stage "fc". Used with vector inputs.
Arch single_fc_arch(int embedding_dim);

struct Param {
  std::string name;
  Tensor t;
  bool task_specific = false;
  bool trainable = true;
};

enum class ModKind { ScaleVector, ProjectionMatrix, BranchFc };

// One insertion point: a per-task transform applied to the output of
// layers[after_layer]. ScaleVector multiplies channels by a learned vector,
// ProjectionMatrix mixes channels with a learned square matrix, BranchFc is a
// per-task fully-connected head (baseline variants only).
struct ModPoint {
  int after_layer = -1;
  std::string stage;
  ModKind kind = ModKind::ScaleVector;
  int in_dim = 0;
  int out_dim = 0;
  std::vector<int> weight;  // param id per task
  std::vector<int> bias;    // BranchFc only
};

struct Layer {
  LayerSpec spec;
  std::string stage;
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  int w = -1, b = -1;    // Conv3x3 / FullyConnected (ResnetBlock: first conv)
  int w2 = -1, b2 = -1;  // ResnetBlock second conv
};

struct Network {
  int input_h = 0, input_w = 0, input_c = 0;
  int embedding_dim = 0;  // length of forward() output
  int task_count = 1;
  std::vector<Layer> layers;
  std::vector<Param> params;
  std::vector<ModPoint> mod_points;
  std::vector<int> mod_of_layer;  // per layer: index into mod_points or -1

  size_t shared_param_count() const;
  size_t task_param_count() const;
  size_t shared_grad_dim() const { return shared_param_count(); }
  void zero_grads();
  // Concatenation of all shared (non task-specific) parameter gradients in
  // registry order.
  void flatten_shared_grads(std::vector<double>& out) const;
  void rebuild_mod_index();
  int add_param(Param p);
};

// Parameters drawn uniform in +-sqrt(3/fan_in) from the seeded generator;
// identical seed gives bit-identical parameters.
Network build_network(const Arch& arch, int input_h, int input_w, int input_c,
                      int embedding_dim, uint64_t seed);

struct Tape {
  bool recorded = false;
  int task = 0;
  std::vector<double> embedding;
  std::vector<Tensor> act;     // act[i] = input of layer i, act[L] = output
  std::vector<Tensor> premod;  // raw layer output where a mod point follows
  std::vector<Tensor> res_hidden;            // ResnetBlock: relu(conv1(x))
  std::vector<std::vector<int>> pool_argmax;  // PoolStride2
  std::vector<double> input_grad;            // filled by backward()
  // Scratch for the residual interior and for backward; reused across calls.
  Tensor scratch;
  std::vector<double> bwd_g, bwd_dx, bwd_ds, bwd_dh1;
};

// When record is false only the embedding is produced (no backward possible).
Tape forward(const Network& net, const Tensor& input, int task = 0,
             bool record = true);

// Same pass, but reuses the tape's buffers: after the first call on a given
// network no allocations happen, which is what keeps the training loop fast.
void forward_into(const Network& net, const Tensor& input, int task, bool record, Tape& tape);

// Accumulates exact reverse-mode gradients into every parameter's grad buffer
// (additively across calls until zero_grads) and into tape.input_grad.
void backward(Network& net, Tape& tape, const std::vector<double>& embedding_grad);

// Scalar objective over the embedding with its exact gradient, for gradient
// verification.
struct EmbeddingObjective {
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> grad;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of backward() over every parameter of the network.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
FiniteDiffReport finite_diff_check(Network& net, const Tensor& input,
                                   const EmbeddingObjective& loss, double step,
                                   int task = 0);

}  // namespace modnet
