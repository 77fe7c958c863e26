#include "modnet/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "modnet/error.hpp"

namespace modnet {

int AttributeSpec::input_dim() const {
  return input_kind == InputKind::Vector ? dim : height * width;
}

void AttributeSpec::validate() const {
  if (attribute_count < 1) throw ConfigError("attribute_count must be >= 1");
  if (sample_count < 4) throw ConfigError("sample_count must be >= 4");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be finite and >= 0");
  }
  if (input_kind == InputKind::Vector) {
    if (dim < 1) throw ConfigError("vector input dim must be >= 1");
  } else {
    if (height < 1 || width < 1) throw ConfigError("image height/width must be >= 1");
  }
  const size_t t = static_cast<size_t>(attribute_count);
  if (correlation.size() != t) throw ConfigError("correlation matrix must be T x T");
  for (size_t i = 0; i < t; ++i) {
    if (correlation[i].size() != t) throw ConfigError("correlation matrix must be T x T");
    if (std::fabs(correlation[i][i] - 1.0) > 1e-12) {
      throw ConfigError("correlation matrix must have a unit diagonal");
    }
    for (size_t j = 0; j < t; ++j) {
      const double v = correlation[i][j];
      if (!std::isfinite(v) || v < -1.0 - 1e-12 || v > 1.0 + 1e-12) {
        throw ConfigError("correlation entries must lie in [-1, 1]");
      }
      if (std::fabs(v - correlation[j][i]) > 1e-12) {
        throw ConfigError("correlation matrix must be symmetric");
      }
    }
  }
}

std::vector<std::vector<double>> cholesky_psd(const std::vector<std::vector<double>>& m) {
  const size_t n = m.size();
  const double tol = 1e-9;
  std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
  for (size_t j = 0; j < n; ++j) {
    double d = m[j][j];
    for (size_t k = 0; k < j; ++k) d -= L[j][k] * L[j][k];
    if (d < -tol) throw ConfigError("correlation matrix is not positive semidefinite");
    L[j][j] = d > tol ? std::sqrt(d) : 0.0;
    for (size_t i = j + 1; i < n; ++i) {
      double s = m[i][j];
      for (size_t k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
      if (L[j][j] > 0.0) {
        L[i][j] = s / L[j][j];
      } else if (std::fabs(s) > tol) {
        throw ConfigError("correlation matrix is not positive semidefinite");
      } else {
        L[i][j] = 0.0;
      }
    }
  }
  return L;
}

Dataset generate_dataset(const AttributeSpec& spec) {
  spec.validate();
  const auto L = cholesky_psd(spec.correlation);
  const int T = spec.attribute_count;
  const int D = spec.input_dim();
  const int N = spec.sample_count;

  // Fixed random rendering of the attribute vector into input space.
  std::vector<double> embed(static_cast<size_t>(D) * T);
  {
    Rng er(substream(spec.seed, 1));
    for (auto& v : embed) v = er.gaussian();
  }

  Dataset ds;
  ds.spec = spec;
  ds.inputs.resize(N);
  ds.labels.assign(N, std::vector<uint8_t>(T, 0));

  // Per-sample independent streams keep generation order-free.
#pragma omp parallel for schedule(static)
  for (int s = 0; s < N; ++s) {
    Rng rs(substream(spec.seed, 1000 + static_cast<uint64_t>(s)));
    std::vector<double> g(T), z(T, 0.0);
    for (int t = 0; t < T; ++t) g[t] = rs.gaussian();
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k <= t; ++k) z[t] += L[t][k] * g[k];
    }
    std::vector<double> signed_attr(T);
    for (int t = 0; t < T; ++t) {
      ds.labels[s][t] = z[t] > 0.0 ? 1 : 0;
      signed_attr[t] = ds.labels[s][t] ? 1.0 : -1.0;
    }
    Tensor x = spec.input_kind == InputKind::Vector
                   ? Tensor({static_cast<size_t>(D)})
                   : Tensor({static_cast<size_t>(spec.height), static_cast<size_t>(spec.width), 1});
    for (int d = 0; d < D; ++d) {
      double v = 0.0;
      for (int t = 0; t < T; ++t) v += embed[static_cast<size_t>(d) * T + t] * signed_attr[t];
      x.values[d] = v + spec.noise_sigma * rs.gaussian();
    }
    ds.inputs[s] = std::move(x);
  }
  return ds;
}

TripletBatch sample_triplets_from(const Dataset& ds, const std::vector<int>& pool, int task,
                                  int count, Rng& rng) {
  if (task < 0 || task >= ds.spec.attribute_count) throw ArgumentError("task id out of range");
  if (count < 1) throw ArgumentError("triplet count must be >= 1");
  std::vector<int> side[2];
  for (int idx : pool) side[ds.labels[idx][task]].push_back(idx);
  if (side[0].empty() || side[1].empty()) {
    throw ConfigError("degenerate task " + std::to_string(task) +
                      ": only one label value present in the sampling pool");
  }
  // Anchors need a distinct positive, so a side qualifies only with >= 2
  // members.
  std::vector<int> anchors;
  for (int v = 0; v < 2; ++v) {
    if (side[v].size() >= 2) anchors.insert(anchors.end(), side[v].begin(), side[v].end());
  }
  if (anchors.empty()) {
    throw ConfigError("degenerate task " + std::to_string(task) + ": no label value has two samples");
  }

  TripletBatch batch;
  batch.entries.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int a = anchors[rng.below(anchors.size())];
    const int la = ds.labels[a][task];
    const auto& same = side[la];
    const auto& other = side[1 - la];
    // Uniform over same-label samples excluding the anchor.
    size_t pi = rng.below(same.size() - 1);
    int p = same[pi];
    if (p == a) p = same[same.size() - 1];
    const int n = other[rng.below(other.size())];
    batch.entries.push_back({a, p, n, task});
  }
  return batch;
}

TripletBatch sample_triplets(const Dataset& ds, int task, int count, uint64_t seed) {
  std::vector<int> pool(ds.inputs.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  Rng rng(substream(seed, 7700 + static_cast<uint64_t>(task)));
  return sample_triplets_from(ds, pool, task, count, rng);
}

Split split_dataset(int sample_count, double heldout_fraction, uint64_t seed) {
  if (sample_count < 1) throw ArgumentError("sample_count must be >= 1");
  if (heldout_fraction < 0.0 || heldout_fraction >= 1.0) {
    throw ArgumentError("heldout_fraction must lie in [0, 1)");
  }
  std::vector<int> perm(sample_count);
  for (int i = 0; i < sample_count; ++i) perm[i] = i;
  Rng rng(substream(seed, 42));
  for (int i = sample_count - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  const int held = static_cast<int>(std::llround(heldout_fraction * sample_count));
  Split sp;
  sp.train.assign(perm.begin(), perm.end() - held);
  sp.heldout.assign(perm.end() - held, perm.end());
  return sp;
}

double expected_agreement(double rho) {
  return 0.5 + std::asin(std::clamp(rho, -1.0, 1.0)) / 3.14159265358979323846;
}

std::vector<std::vector<double>> empirical_agreement(const Dataset& ds) {
  const int T = ds.spec.attribute_count;
  std::vector<std::vector<double>> agree(T, std::vector<double>(T, 0.0));
  for (const auto& row : ds.labels) {
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < T; ++j) {
        if (row[i] == row[j]) agree[i][j] += 1.0;
      }
    }
  }
  for (auto& row : agree) {
    for (auto& v : row) v /= static_cast<double>(ds.labels.size());
  }
  return agree;
}

}  // namespace modnet
