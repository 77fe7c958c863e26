#include "modnet/modulation.hpp"

#include <cmath>

#include "modnet/error.hpp"
#include "modnet/kernels.hpp"

namespace modnet {

namespace {

// Channel count of a feature map shaped {h,w,c} or {d}.
int channels_of(const Tensor& x) {
  if (x.shape.size() == 3) return static_cast<int>(x.shape[2]);
  if (x.shape.size() == 1) return static_cast<int>(x.shape[0]);
  throw ShapeError("expected a HxWxC or flat tensor, got " + shape_str(x.shape));
}

}  // namespace

Network insert_modules(const Network& net, const InsertionSpec& spec, int task_count) {
  if (task_count < 1) throw ArgumentError("task_count must be >= 1");
  if (!net.mod_points.empty()) throw StateError("network already carries modulation modules");

  // Stage order = first appearance in the layer list.
  std::vector<std::string> stage_order;
  for (const auto& L : net.layers) {
    if (stage_order.empty() || stage_order.back() != L.stage) stage_order.push_back(L.stage);
  }
  int from = -1;
  for (size_t s = 0; s < stage_order.size(); ++s) {
    if (stage_order[s] == spec.from_block) from = static_cast<int>(s);
  }
  if (from < 0) {
    std::string known;
    for (const auto& s : stage_order) known += (known.empty() ? "" : ", ") + s;
    throw ConfigError("unknown from_block '" + spec.from_block + "' (stages: " + known + ")");
  }

  Network out = net;
  out.task_count = task_count;
  for (size_t s = static_cast<size_t>(from); s < stage_order.size(); ++s) {
    const std::string& stage = stage_order[s];
    int last = -1;
    for (size_t i = 0; i < out.layers.size(); ++i) {
      if (out.layers[i].stage == stage) last = static_cast<int>(i);
    }
    const Layer& L = out.layers[last];
    const int c = L.spec.kind == LayerKind::FullyConnected ? L.spec.output_dim : L.out_c;
    ModPoint mp;
    mp.after_layer = last;
    mp.stage = stage;
    mp.kind = spec.variant == ModVariant::ScalingVector ? ModKind::ScaleVector
                                                        : ModKind::ProjectionMatrix;
    mp.in_dim = c;
    mp.out_dim = c;
    for (int t = 0; t < task_count; ++t) {
      Param p;
      p.name = "mod/" + stage + "/" + std::to_string(t);
      p.task_specific = true;
      if (mp.kind == ModKind::ScaleVector) {
        p.t = Tensor({static_cast<size_t>(c)}, std::vector<double>(c, 1.0));
      } else {
        p.t = Tensor({static_cast<size_t>(c), static_cast<size_t>(c)});
        for (int i = 0; i < c; ++i) p.t.values[static_cast<size_t>(i) * c + i] = 1.0;
      }
      mp.weight.push_back(out.add_param(std::move(p)));
    }
    out.mod_points.push_back(std::move(mp));
  }
  out.rebuild_mod_index();
  return out;
}

Tensor apply_scaling(const Tensor& x, const std::vector<double>& w) {
  const int c = channels_of(x);
  if (static_cast<int>(w.size()) != c) {
    throw ShapeError("scaling vector length " + std::to_string(w.size()) +
                     " does not match channel count " + std::to_string(c));
  }
  Tensor y(x.shape);
  kernels::scale_channels_forward(x.values.data(), static_cast<int>(x.numel()) / c, c, w.data(),
                                  y.values.data());
  return y;
}

Tensor apply_projection(const Tensor& x, const Tensor& w) {
  const int c = channels_of(x);
  if (w.shape != std::vector<size_t>{static_cast<size_t>(c), static_cast<size_t>(c)}) {
    throw ShapeError("projection matrix shape " + shape_str(w.shape) + " does not match CxC with C=" +
                     std::to_string(c));
  }
  Tensor y(x.shape);
  kernels::project_channels_forward(x.values.data(), static_cast<int>(x.numel()) / c, c,
                                    w.values.data(), y.values.data());
  return y;
}

void apply_scaling_backward(const Tensor& x, const std::vector<double>& w,
                            const std::vector<double>& dy, std::vector<double>& dx,
                            std::vector<double>& dw) {
  const int c = channels_of(x);
  if (static_cast<int>(w.size()) != c || dy.size() != x.numel()) {
    throw ShapeError("scaling backward shape mismatch");
  }
  dx.assign(x.numel(), 0.0);
  if (dw.size() != w.size()) dw.assign(w.size(), 0.0);
  kernels::scale_channels_backward(x.values.data(), w.data(), static_cast<int>(x.numel()) / c, c,
                                   dy.data(), dx.data(), dw.data());
}

void apply_projection_backward(const Tensor& x, const Tensor& w, const std::vector<double>& dy,
                               std::vector<double>& dx, std::vector<double>& dw) {
  const int c = channels_of(x);
  if (w.numel() != static_cast<size_t>(c) * c || dy.size() != x.numel()) {
    throw ShapeError("projection backward shape mismatch");
  }
  dx.assign(x.numel(), 0.0);
  if (dw.size() != w.numel()) dw.assign(w.numel(), 0.0);
  kernels::project_channels_backward(x.values.data(), w.values.data(),
                                     static_cast<int>(x.numel()) / c, c, dy.data(), dx.data(),
                                     dw.data());
}

TaskDistance task_distance(const Network& net, int task_i, int task_j) {
  if (task_i < 0 || task_i >= net.task_count || task_j < 0 || task_j >= net.task_count) {
    throw ArgumentError("task id out of range");
  }
  if (net.mod_points.empty()) throw ConfigError("network carries no modulation modules");
  double sum = 0.0, sumsq = 0.0;
  size_t n = 0;
  for (const auto& mp : net.mod_points) {
    if (mp.kind != ModKind::ScaleVector) {
      throw ConfigError("task_distance requires the scaling-vector variant at every insertion point");
    }
    const auto& wi = net.params[mp.weight[task_i]].t.values;
    const auto& wj = net.params[mp.weight[task_j]].t.values;
    for (size_t k = 0; k < wi.size(); ++k) {
      const double d = std::fabs(wi[k] - wj[k]);
      sum += d;
      sumsq += d * d;
      ++n;
    }
  }
  TaskDistance td;
  td.mean = sum / static_cast<double>(n);
  td.variance = sumsq / static_cast<double>(n) - td.mean * td.mean;
  return td;
}

size_t additional_param_count(const Network& net) { return net.task_param_count(); }

std::vector<double> concat_task_vectors(const Network& net, int task) {
  if (task < 0 || task >= net.task_count) throw ArgumentError("task id out of range");
  std::vector<double> out;
  for (const auto& mp : net.mod_points) {
    if (mp.kind != ModKind::ScaleVector) {
      throw ConfigError("concat_task_vectors requires the scaling-vector variant");
    }
    const auto& w = net.params[mp.weight[task]].t.values;
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

}  // namespace modnet
