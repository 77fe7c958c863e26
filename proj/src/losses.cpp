#include "modnet/losses.hpp"

#include <cmath>
#include <limits>

#include "modnet/error.hpp"

namespace modnet {

TripletResult triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                           const std::vector<double>& negative, double alpha) {
  const size_t n = anchor.size();
  if (positive.size() != n || negative.size() != n) {
    throw ShapeError("triplet embeddings must share one length, got " + std::to_string(n) + "/" +
                     std::to_string(positive.size()) + "/" + std::to_string(negative.size()));
  }
  double dp = 0.0, dn = 0.0;
  for (size_t k = 0; k < n; ++k) {
    const double ap = anchor[k] - positive[k];
    const double an = anchor[k] - negative[k];
    dp += ap * ap;
    dn += an * an;
  }
  TripletResult r;
  r.grad_anchor.assign(n, 0.0);
  r.grad_positive.assign(n, 0.0);
  r.grad_negative.assign(n, 0.0);
  if (!std::isfinite(dp) || !std::isfinite(dn)) {
    // Overflowed distances must surface as a numerical failure, not as an
    // inactive hinge.
    r.loss = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double hinge = dp + alpha - dn;
  if (hinge > 0.0) {
    r.loss = hinge;
    for (size_t k = 0; k < n; ++k) {
      r.grad_anchor[k] = 2.0 * (negative[k] - positive[k]);
      r.grad_positive[k] = -2.0 * (anchor[k] - positive[k]);
      r.grad_negative[k] = 2.0 * (anchor[k] - negative[k]);
    }
  }
  return r;
}

double batch_triplet_loss(const TripletBatch& batch, const Network& net, const Dataset& ds,
                          double alpha, bool normalize_embeddings) {
  if (batch.entries.empty()) throw ArgumentError("batch_triplet_loss: empty batch");
  auto embed = [&](int sample, int task) {
    std::vector<double> f = forward(net, ds.inputs[sample], task, false).embedding;
    return normalize_embeddings ? l2_normalize(f) : f;
  };
  double total = 0.0;
  for (const auto& tr : batch.entries) {
    total += triplet_loss(embed(tr.anchor, tr.task), embed(tr.positive, tr.task),
                          embed(tr.negative, tr.task), alpha)
                 .loss;
  }
  return total;
}

RelevanceResult relevance_regularizer(const std::vector<double>& w_i, const std::vector<double>& w_j,
                                      const std::vector<double>& w_k, double beta) {
  const size_t n = w_i.size();
  if (w_j.size() != n || w_k.size() != n) {
    throw ShapeError("relevance regularizer vectors must share one length");
  }
  double dij = 0.0, dik = 0.0;
  for (size_t m = 0; m < n; ++m) {
    const double a = w_i[m] - w_j[m];
    const double b = w_i[m] - w_k[m];
    dij += a * a;
    dik += b * b;
  }
  RelevanceResult r;
  r.grad_i.assign(n, 0.0);
  r.grad_j.assign(n, 0.0);
  r.grad_k.assign(n, 0.0);
  const double hinge = dij + beta - dik;
  if (hinge > 0.0) {
    r.loss = hinge;
    for (size_t m = 0; m < n; ++m) {
      r.grad_i[m] = 2.0 * (w_k[m] - w_j[m]);
      r.grad_j[m] = -2.0 * (w_i[m] - w_j[m]);
      r.grad_k[m] = 2.0 * (w_i[m] - w_k[m]);
    }
  }
  return r;
}

std::vector<double> l2_normalize(const std::vector<double>& f) {
  double sq = 0.0;
  for (double v : f) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw NumericError("cannot normalize a zero embedding");
  std::vector<double> out(f.size());
  for (size_t k = 0; k < f.size(); ++k) out[k] = f[k] / norm;
  return out;
}

std::vector<double> l2_normalize_backward(const std::vector<double>& f,
                                          const std::vector<double>& d_normalized) {
  if (d_normalized.size() != f.size()) throw ShapeError("normalize backward shape mismatch");
  double sq = 0.0, dot = 0.0;
  for (size_t k = 0; k < f.size(); ++k) sq += f[k] * f[k];
  const double norm = std::sqrt(sq);
  if (norm == 0.0) throw NumericError("cannot normalize a zero embedding");
  for (size_t k = 0; k < f.size(); ++k) dot += f[k] * d_normalized[k];
  std::vector<double> out(f.size());
  for (size_t k = 0; k < f.size(); ++k) {
    out[k] = d_normalized[k] / norm - f[k] * dot / (norm * norm * norm);
  }
  return out;
}

}  // namespace modnet
