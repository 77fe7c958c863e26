#pragma once

#include <cstdint>
#include <vector>

#include "modnet/rng.hpp"
#include "modnet/tensor.hpp"

namespace modnet {

enum class InputKind { Vector, Image };

// Controllable multi-attribute task family. Binary attribute labels come from
// correlated Gaussian latents thresholded at zero, so any pairwise label
// agreement rate has the closed form 1/2 + asin(rho)/pi. Inputs are a fixed
// random linear rendering of the +-1 attribute vector plus Gaussian noise.
struct AttributeSpec {
  int attribute_count = 0;
  std::vector<std::vector<double>> correlation;  // T x T, unit diagonal
  int sample_count = 0;
  InputKind input_kind = InputKind::Vector;
  int dim = 0;                 // Vector inputs
  int height = 0, width = 0;   // Image inputs (single channel)
  double noise_sigma = 0.0;
  uint64_t seed = 0;

  int input_dim() const;
  void validate() const;  // throws ConfigError naming the offending field
};

struct Dataset {
  AttributeSpec spec;
  std::vector<Tensor> inputs;
  std::vector<std::vector<uint8_t>> labels;  // [sample][task], values 0/1
};

struct Triplet {
  int anchor = 0, positive = 0, negative = 0, task = 0;
};

struct TripletBatch {
  std::vector<Triplet> entries;
};

Dataset generate_dataset(const AttributeSpec& spec);

// count triplets for one task, anchors covering both label values; positive
// shares the anchor's label, negative has the other one.
TripletBatch sample_triplets(const Dataset& ds, int task, int count, uint64_t seed);
TripletBatch sample_triplets_from(const Dataset& ds, const std::vector<int>& pool, int task,
                                  int count, Rng& rng);

struct Split {
  std::vector<int> train, heldout;
};

// Seeded permutation; the last fraction of it becomes the held-out set.
Split split_dataset(int sample_count, double heldout_fraction, uint64_t seed);

// Gaussian orthant agreement rate for a latent correlation rho.
double expected_agreement(double rho);

// Fraction of samples on which each pair of attribute columns agrees.
std::vector<std::vector<double>> empirical_agreement(const Dataset& ds);

// PSD-tolerant Cholesky factor; throws ConfigError if m is not positive
// semidefinite.
std::vector<std::vector<double>> cholesky_psd(const std::vector<std::vector<double>>& m);

}  // namespace modnet
