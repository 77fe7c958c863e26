#pragma once

#include <string>
#include <vector>

#include "modnet/network.hpp"

namespace modnet {

enum class ModVariant { ScalingVector, ProjectionMatrix };

// from_block names the earliest stage whose output gets a module; every later
// stage through the final embedding layer gets one as well.
struct InsertionSpec {
  std::string from_block = "fc";
  ModVariant variant = ModVariant::ScalingVector;
};

// Returns a copy of net with per-task modulation parameters registered at
// every stage boundary from spec.from_block onward. Scaling vectors are
// initialized to all ones, projection matrices to the identity, so a freshly
// modulated network computes exactly what the plain network computes.
// Parameter names are "mod/<stage>/<task>".
Network insert_modules(const Network& net, const InsertionSpec& spec, int task_count);

inline Tape forward_task(const Network& net, const Tensor& input, int task) {
  return forward(net, input, task);
}

// Standalone per-channel transforms (x is H x W x C); the same arithmetic the
// modulated network applies at its insertion points.
Tensor apply_scaling(const Tensor& x, const std::vector<double>& w);
Tensor apply_projection(const Tensor& x, const Tensor& w);

// Gradients of the transforms above; dx is overwritten, dw accumulated.
void apply_scaling_backward(const Tensor& x, const std::vector<double>& w,
                            const std::vector<double>& dy, std::vector<double>& dx,
                            std::vector<double>& dw);
void apply_projection_backward(const Tensor& x, const Tensor& w,
                               const std::vector<double>& dy, std::vector<double>& dx,
                               std::vector<double>& dw);

struct TaskDistance {
  double mean = 0.0;
  double variance = 0.0;
};

// Statistics of the elementwise |W_i - W_j| over all scaling-vector insertion
// points; a proxy for how differently two tasks use the shared features.
TaskDistance task_distance(const Network& net, int task_i, int task_j);

// Total number of task-specific parameters across all insertion points.
size_t additional_param_count(const Network& net);

// Concatenation of one task's scaling vectors over all insertion points.
std::vector<double> concat_task_vectors(const Network& net, int task);

}  // namespace modnet
