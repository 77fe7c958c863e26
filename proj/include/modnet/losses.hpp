#pragma once

#include <vector>

#include "modnet/network.hpp"
#include "modnet/synthetic.hpp"

namespace modnet {

struct Margins {
  double alpha = 0.2;   // triplet margin
  double beta = 0.1;    // relevance margin
  double lambda = 0.0;  // relevance regularizer weight (off by default)
};

// Hinge on squared Euclidean distances:
//   max(0, ||a - p||^2 + alpha - ||a - n||^2)
// Gradients are exact and zero on the inactive side of the hinge.
struct TripletResult {
  double loss = 0.0;
  std::vector<double> grad_anchor, grad_positive, grad_negative;
};

TripletResult triplet_loss(const std::vector<double>& anchor, const std::vector<double>& positive,
                           const std::vector<double>& negative, double alpha);

// Sum of per-triplet losses; each triplet is embedded with its own task's
// modulation. Forward only.
double batch_triplet_loss(const TripletBatch& batch, const Network& net, const Dataset& ds,
                          double alpha, bool normalize_embeddings = false);

// Same hinge over task modulation vectors: (i, j) is the pair declared more
// relevant than (i, k).
struct RelevanceResult {
  double loss = 0.0;
  std::vector<double> grad_i, grad_j, grad_k;
};

RelevanceResult relevance_regularizer(const std::vector<double>& w_i, const std::vector<double>& w_j,
                                      const std::vector<double>& w_k, double beta);

// f / ||f||, with the exact pullback of a downstream gradient. Used when
// normalize_embeddings is enabled.
std::vector<double> l2_normalize(const std::vector<double>& f);
std::vector<double> l2_normalize_backward(const std::vector<double>& f,
                                          const std::vector<double>& d_normalized);

}  // namespace modnet
