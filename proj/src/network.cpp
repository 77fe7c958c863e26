#include "modnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "modnet/error.hpp"
#include "modnet/kernels.hpp"
#include "modnet/rng.hpp"

namespace modnet {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::PoolStride2: return "pool-stride2";
    case LayerKind::ResnetBlock: return "resnet-block";
    case LayerKind::FullyConnected: return "fully-connected";
    case LayerKind::Relu: return "relu";
  }
  return "?";
}

Arch conv_pool_resnet_arch(int input_channels, int conv1_channels,
                           const std::vector<int>& block_channels,
                           int embedding_dim) {
  Arch a;
  auto push = [&a](LayerSpec s, const std::string& stage) {
    a.layers.push_back(s);
    a.stages.push_back(stage);
  };
  push({LayerKind::Conv3x3, input_channels, conv1_channels, 0}, "conv1");
  push({LayerKind::Relu, conv1_channels, conv1_channels, 0}, "conv1");
  int c = conv1_channels;
  for (size_t i = 0; i < block_channels.size(); ++i) {
    const std::string stage = "block" + std::to_string(i + 2);
    const int oc = block_channels[i];
    push({LayerKind::Conv3x3, c, oc, 0}, stage);
    push({LayerKind::Relu, oc, oc, 0}, stage);
    push({LayerKind::PoolStride2, oc, oc, 0}, stage);
    push({LayerKind::ResnetBlock, oc, oc, 0}, stage);
    c = oc;
  }
  push({LayerKind::FullyConnected, c, 0, embedding_dim}, "fc");
  return a;
}

Arch single_fc_arch(int embedding_dim) {
  Arch a;
  a.layers.push_back({LayerKind::FullyConnected, 0, 0, embedding_dim});
  a.stages.push_back("fc");
  return a;
}

size_t Network::shared_param_count() const {
  size_t n = 0;
  for (const auto& p : params) {
    if (!p.task_specific) n += p.t.numel();
  }
  return n;
}

size_t Network::task_param_count() const {
  size_t n = 0;
  for (const auto& p : params) {
    if (p.task_specific) n += p.t.numel();
  }
  return n;
}

void Network::zero_grads() {
  for (auto& p : params) p.t.zero_grad();
}

void Network::flatten_shared_grads(std::vector<double>& out) const {
  out.clear();
  out.reserve(shared_param_count());
  for (const auto& p : params) {
    if (p.task_specific) continue;
    out.insert(out.end(), p.t.grad.begin(), p.t.grad.end());
  }
}

void Network::rebuild_mod_index() {
  mod_of_layer.assign(layers.size(), -1);
  for (size_t m = 0; m < mod_points.size(); ++m) {
    mod_of_layer[mod_points[m].after_layer] = static_cast<int>(m);
  }
}

int Network::add_param(Param p) {
  p.t.ensure_grad();
  params.push_back(std::move(p));
  return static_cast<int>(params.size()) - 1;
}

namespace {

std::string unique_name(const Network& net, std::string base) {
  bool clash = false;
  for (const auto& p : net.params) {
    if (p.name == base || p.name.rfind(base + "#", 0) == 0) clash = true;
  }
  if (!clash) return base;
  int k = 2;
  for (;;) {
    const std::string cand = base + "#" + std::to_string(k);
    bool taken = false;
    for (const auto& p : net.params) taken |= (p.name == cand);
    if (!taken) return cand;
    ++k;
  }
}

Tensor init_uniform(std::vector<size_t> shape, double fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(3.0 / fan_in);
  for (auto& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Network build_network(const Arch& arch, int input_h, int input_w, int input_c,
                      int embedding_dim, uint64_t seed) {
  if (arch.layers.empty()) throw ConfigError("architecture has no layers");
  if (arch.layers.size() != arch.stages.size()) {
    throw ConfigError("architecture stage labels do not cover all layers");
  }
  if (input_h < 1 || input_w < 1 || input_c < 1) {
    throw ConfigError("input size must be positive");
  }
  Network net;
  net.input_h = input_h;
  net.input_w = input_w;
  net.input_c = input_c;
  net.embedding_dim = embedding_dim;

  Rng rng(substream(seed, 0xA110C));
  int h = input_h, w = input_w, c = input_c;
  for (size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& spec = arch.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(spec.kind) + ")";
    Layer L;
    L.spec = spec;
    L.stage = arch.stages[i];
    L.in_h = h;
    L.in_w = w;
    L.in_c = c;
    switch (spec.kind) {
      case LayerKind::Conv3x3: {
        if (spec.in_channels != c) {
          throw ConfigError(where + ": expected in_channels " + std::to_string(c) +
                            ", got " + std::to_string(spec.in_channels));
        }
        if (spec.out_channels < 1) throw ConfigError(where + ": out_channels must be positive");
        if (h < 3 || w < 3) throw ConfigError(where + ": spatial extent too small for a valid 3x3 conv");
        const double fan_in = 9.0 * c;
        const std::string base = L.stage == "conv1" ? "conv1" : L.stage + "/conv";
        L.w = net.add_param({unique_name(net, base + "/w"),
                             init_uniform({3, 3, static_cast<size_t>(c), static_cast<size_t>(spec.out_channels)}, fan_in, rng)});
        L.b = net.add_param({unique_name(net, base + "/b"),
                             init_uniform({static_cast<size_t>(spec.out_channels)}, fan_in, rng)});
        h -= 2;
        w -= 2;
        c = spec.out_channels;
        break;
      }
      case LayerKind::Relu:
        if (spec.in_channels != 0 && spec.in_channels != c) {
          throw ConfigError(where + ": channel mismatch");
        }
        break;
      case LayerKind::PoolStride2:
        if (spec.in_channels != 0 && spec.in_channels != c) {
          throw ConfigError(where + ": channel mismatch");
        }
        if (h < 2 || w < 2) throw ConfigError(where + ": spatial extent too small to pool");
        h /= 2;
        w /= 2;
        break;
      case LayerKind::ResnetBlock: {
        if (spec.in_channels != c || spec.out_channels != c) {
          throw ConfigError(where + ": resnet-block requires in_channels == out_channels == " +
                            std::to_string(c));
        }
        const double fan_in = 9.0 * c;
        const auto cs = static_cast<size_t>(c);
        L.w = net.add_param({unique_name(net, L.stage + "/res1/w"), init_uniform({3, 3, cs, cs}, fan_in, rng)});
        L.b = net.add_param({unique_name(net, L.stage + "/res1/b"), init_uniform({cs}, fan_in, rng)});
        L.w2 = net.add_param({unique_name(net, L.stage + "/res2/w"), init_uniform({3, 3, cs, cs}, fan_in, rng)});
        L.b2 = net.add_param({unique_name(net, L.stage + "/res2/b"), init_uniform({cs}, fan_in, rng)});
        break;
      }
      case LayerKind::FullyConnected: {
        if (i + 1 != arch.layers.size()) {
          throw ConfigError(where + ": fully-connected must be the final layer");
        }
        if (spec.in_channels != 0 && spec.in_channels != c) {
          throw ConfigError(where + ": expected in_channels " + std::to_string(c) +
                            ", got " + std::to_string(spec.in_channels));
        }
        if (spec.output_dim < 1) throw ConfigError(where + ": output_dim must be positive");
        if (spec.output_dim != embedding_dim) {
          throw ConfigError(where + ": output_dim " + std::to_string(spec.output_dim) +
                            " does not match embedding_dim " + std::to_string(embedding_dim));
        }
        const long flat = static_cast<long>(h) * w * c;
        L.w = net.add_param({unique_name(net, "fc/w"),
                             init_uniform({static_cast<size_t>(spec.output_dim), static_cast<size_t>(flat)},
                                          static_cast<double>(flat), rng)});
        L.b = net.add_param({unique_name(net, "fc/b"),
                             init_uniform({static_cast<size_t>(spec.output_dim)}, static_cast<double>(flat), rng)});
        h = 1;
        w = 1;
        c = spec.output_dim;
        break;
      }
    }
    L.out_h = h;
    L.out_w = w;
    L.out_c = c;
    net.layers.push_back(L);
  }
  if (net.layers.back().spec.kind != LayerKind::FullyConnected) {
    throw ConfigError("final layer must be fully-connected");
  }
  net.rebuild_mod_index();
  return net;
}

namespace {

// Shape + size the tensor without giving up its capacity.
void ensure_tensor(Tensor& t, std::initializer_list<size_t> shape) {
  t.shape.assign(shape);
  t.values.resize(Tensor::count(t.shape));
}

}  // namespace

void forward_into(const Network& net, const Tensor& input, int task, bool record, Tape& tape) {
  if (task < 0 || task >= net.task_count) {
    throw ArgumentError("task id " + std::to_string(task) + " out of range [0, " +
                        std::to_string(net.task_count) + ")");
  }
  const std::vector<size_t> want = {static_cast<size_t>(net.input_h),
                                    static_cast<size_t>(net.input_w),
                                    static_cast<size_t>(net.input_c)};
  const bool flat_ok = net.input_h == 1 && net.input_w == 1 && input.shape.size() == 1 &&
                       input.shape[0] == static_cast<size_t>(net.input_c);
  if (!flat_ok && input.shape != want) {
    throw ShapeError("input shape mismatch: expected " + shape_str(want) + ", got " +
                     shape_str(input.shape));
  }

  const size_t nl = net.layers.size();
  tape.task = task;
  tape.recorded = record;
  tape.input_grad.clear();
  // Both modes route through tape.act so buffers persist across calls; in
  // no-record mode the layer inputs simply are not valid for backward.
  tape.act.resize(nl + 1);
  tape.premod.resize(nl);
  tape.res_hidden.resize(nl);
  tape.pool_argmax.resize(nl);

  ensure_tensor(tape.act[0], {want[0], want[1], want[2]});
  tape.act[0].values.assign(input.values.begin(), input.values.end());

  for (size_t i = 0; i < nl; ++i) {
    const Layer& L = net.layers[i];
    const Tensor& cur = tape.act[i];
    const int mi = net.mod_of_layer.empty() ? -1 : net.mod_of_layer[i];
    // The raw layer output lands in premod[i] when a module follows.
    Tensor& out = mi >= 0 ? tape.premod[i] : tape.act[i + 1];
    switch (L.spec.kind) {
      case LayerKind::Conv3x3: {
        ensure_tensor(out, {static_cast<size_t>(L.out_h), static_cast<size_t>(L.out_w),
                            static_cast<size_t>(L.out_c)});
        kernels::conv3x3_valid_forward(cur.values.data(), L.in_h, L.in_w, L.in_c,
                                       net.params[L.w].t.values.data(),
                                       net.params[L.b].t.values.data(), L.out_c, out.values.data());
        break;
      }
      case LayerKind::Relu: {
        ensure_tensor(out, {cur.shape[0], cur.shape[1], cur.shape[2]});
        kernels::relu_forward(cur.values.data(), cur.numel(), out.values.data());
        break;
      }
      case LayerKind::PoolStride2: {
        ensure_tensor(out, {static_cast<size_t>(L.out_h), static_cast<size_t>(L.out_w),
                            static_cast<size_t>(L.out_c)});
        tape.pool_argmax[i].resize(out.numel());
        kernels::maxpool2_forward(cur.values.data(), L.in_h, L.in_w, L.in_c, out.values.data(),
                                  tape.pool_argmax[i].data());
        break;
      }
      case LayerKind::ResnetBlock: {
        const int h = L.in_h, w = L.in_w, c = L.in_c;
        Tensor& h1 = tape.res_hidden[i];
        ensure_tensor(h1, {cur.shape[0], cur.shape[1], cur.shape[2]});
        kernels::conv3x3_same_forward(cur.values.data(), h, w, c, net.params[L.w].t.values.data(),
                                      net.params[L.b].t.values.data(), c, h1.values.data());
        kernels::relu_forward(h1.values.data(), h1.numel(), h1.values.data());
        Tensor& h2 = tape.scratch;
        ensure_tensor(h2, {cur.shape[0], cur.shape[1], cur.shape[2]});
        kernels::conv3x3_same_forward(h1.values.data(), h, w, c, net.params[L.w2].t.values.data(),
                                      net.params[L.b2].t.values.data(), c, h2.values.data());
        ensure_tensor(out, {cur.shape[0], cur.shape[1], cur.shape[2]});
        for (size_t k = 0; k < out.numel(); ++k) {
          const double v = cur.values[k] + h2.values[k];
          out.values[k] = v > 0.0 ? v : 0.0;
        }
        break;
      }
      case LayerKind::FullyConnected: {
        ensure_tensor(out, {static_cast<size_t>(L.spec.output_dim)});
        kernels::fc_forward(cur.values.data(), L.in_h * L.in_w * L.in_c,
                            net.params[L.w].t.values.data(), net.params[L.b].t.values.data(),
                            L.spec.output_dim, out.values.data());
        break;
      }
    }
    if (mi >= 0) {
      const ModPoint& mp = net.mod_points[mi];
      Tensor& dst = tape.act[i + 1];
      const auto& wp = net.params[mp.weight[task]].t;
      const int hw = static_cast<int>(out.numel()) / mp.in_dim;
      switch (mp.kind) {
        case ModKind::ScaleVector:
          dst.shape = out.shape;
          dst.values.resize(out.numel());
          kernels::scale_channels_forward(out.values.data(), hw, mp.in_dim, wp.values.data(),
                                          dst.values.data());
          break;
        case ModKind::ProjectionMatrix:
          dst.shape = out.shape;
          dst.values.resize(out.numel());
          kernels::project_channels_forward(out.values.data(), hw, mp.in_dim, wp.values.data(),
                                            dst.values.data());
          break;
        case ModKind::BranchFc: {
          ensure_tensor(dst, {static_cast<size_t>(mp.out_dim)});
          const auto& bp = net.params[mp.bias[task]].t;
          kernels::fc_forward(out.values.data(), mp.in_dim, wp.values.data(), bp.values.data(),
                              mp.out_dim, dst.values.data());
          break;
        }
      }
    }
  }
  tape.embedding = tape.act[nl].values;
}

Tape forward(const Network& net, const Tensor& input, int task, bool record) {
  Tape tape;
  forward_into(net, input, task, record, tape);
  return tape;
}

void backward(Network& net, Tape& tape, const std::vector<double>& embedding_grad) {
  if (!tape.recorded) throw StateError("backward requires a recorded forward tape");
  if (embedding_grad.size() != tape.embedding.size()) {
    throw ShapeError("embedding gradient length " + std::to_string(embedding_grad.size()) +
                     " does not match embedding length " + std::to_string(tape.embedding.size()));
  }

  std::vector<double>& g = tape.bwd_g;
  std::vector<double>& dx = tape.bwd_dx;
  g.assign(embedding_grad.begin(), embedding_grad.end());

  for (int i = static_cast<int>(net.layers.size()) - 1; i >= 0; --i) {
    const Layer& L = net.layers[i];
    const int mi = net.mod_of_layer[i];
    if (mi >= 0) {
      const ModPoint& mp = net.mod_points[mi];
      const Tensor& x = tape.premod[i];
      auto& wp = net.params[mp.weight[tape.task]].t;
      const int hw = static_cast<int>(x.numel()) / mp.in_dim;
      dx.resize(x.numel());
      switch (mp.kind) {
        case ModKind::ScaleVector:
          kernels::scale_channels_backward(x.values.data(), wp.values.data(), hw, mp.in_dim,
                                           g.data(), dx.data(), wp.grad.data());
          break;
        case ModKind::ProjectionMatrix:
          kernels::project_channels_backward(x.values.data(), wp.values.data(), hw, mp.in_dim,
                                             g.data(), dx.data(), wp.grad.data());
          break;
        case ModKind::BranchFc: {
          auto& bp = net.params[mp.bias[tape.task]].t;
          kernels::fc_backward(x.values.data(), mp.in_dim, wp.values.data(), mp.out_dim, g.data(),
                               dx.data(), wp.grad.data(), bp.grad.data());
          break;
        }
      }
      std::swap(g, dx);
    }
    const Tensor& x = tape.act[i];
    // Raw (pre-modulation) output of this layer.
    const Tensor& y = mi >= 0 ? tape.premod[i] : tape.act[i + 1];
    dx.resize(x.numel());
    switch (L.spec.kind) {
      case LayerKind::Conv3x3:
        kernels::conv3x3_valid_backward(x.values.data(), L.in_h, L.in_w, L.in_c,
                                        net.params[L.w].t.values.data(), L.out_c, g.data(), dx.data(),
                                        net.params[L.w].t.grad.data(), net.params[L.b].t.grad.data());
        break;
      case LayerKind::Relu:
        kernels::relu_backward(y.values.data(), g.data(), y.numel(), dx.data());
        break;
      case LayerKind::PoolStride2:
        kernels::maxpool2_backward(tape.pool_argmax[i].data(), g.data(), y.numel(), x.numel(),
                                   dx.data());
        break;
      case LayerKind::ResnetBlock: {
        const int h = L.in_h, w = L.in_w, c = L.in_c;
        const Tensor& h1 = tape.res_hidden[i];
        std::vector<double>& ds = tape.bwd_ds;
        std::vector<double>& dh1 = tape.bwd_dh1;
        ds.resize(y.numel());
        dh1.resize(h1.numel());
        kernels::relu_backward(y.values.data(), g.data(), y.numel(), ds.data());
        kernels::conv3x3_same_backward(h1.values.data(), h, w, c, net.params[L.w2].t.values.data(), c,
                                       ds.data(), dh1.data(), net.params[L.w2].t.grad.data(),
                                       net.params[L.b2].t.grad.data());
        for (size_t k = 0; k < dh1.size(); ++k) dh1[k] = h1.values[k] > 0.0 ? dh1[k] : 0.0;
        kernels::conv3x3_same_backward(x.values.data(), h, w, c, net.params[L.w].t.values.data(), c,
                                       dh1.data(), dx.data(), net.params[L.w].t.grad.data(),
                                       net.params[L.b].t.grad.data());
        // Skip connection.
        for (size_t k = 0; k < dx.size(); ++k) dx[k] += ds[k];
        break;
      }
      case LayerKind::FullyConnected:
        kernels::fc_backward(x.values.data(), L.in_h * L.in_w * L.in_c,
                             net.params[L.w].t.values.data(), L.spec.output_dim, g.data(), dx.data(),
                             net.params[L.w].t.grad.data(), net.params[L.b].t.grad.data());
        break;
    }
    std::swap(g, dx);
  }
  tape.input_grad.assign(g.begin(), g.end());
  tape.act[0].ensure_grad();
  for (size_t k = 0; k < g.size(); ++k) tape.act[0].grad[k] += g[k];
}

FiniteDiffReport finite_diff_check(Network& net, const Tensor& input,
                                   const EmbeddingObjective& loss, double step, int task) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be positive");

  net.zero_grads();
  Tape tape = forward(net, input, task);
  const double base = loss.value(tape.embedding);
  if (!std::isfinite(base)) throw NumericError("finite_diff_check: non-finite loss at base point");
  backward(net, tape, loss.grad(tape.embedding));

  std::vector<std::vector<double>> analytic;
  analytic.reserve(net.params.size());
  for (const auto& p : net.params) analytic.push_back(p.t.grad);

  FiniteDiffReport rep;
  for (size_t pi = 0; pi < net.params.size(); ++pi) {
    auto& vals = net.params[pi].t.values;
    for (size_t k = 0; k < vals.size(); ++k) {
      const double orig = vals[k];
      vals[k] = orig + step;
      const double fp = loss.value(forward(net, input, task, false).embedding);
      vals[k] = orig - step;
      const double fm = loss.value(forward(net, input, task, false).embedding);
      vals[k] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("finite_diff_check: non-finite loss when perturbing " +
                           net.params[pi].name + "[" + std::to_string(k) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[pi][k];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = net.params[pi].name + "[" + std::to_string(k) + "]";
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace modnet
