#pragma once

#include <string>
#include <vector>

#include "modnet/synthetic.hpp"
#include "modnet/tensor.hpp"

namespace modnet {

// Binary container: a little-endian format-version integer followed by
// (name, shape, float64 values) records. Round trips are bit-exact.
struct Record {
  std::string name;
  Tensor tensor;
};

void save_records(const std::string& path, const std::vector<Record>& records);
std::vector<Record> load_records(const std::string& path);

struct Network;

// Every parameter group of the network, in registry order.
void save_checkpoint(const std::string& path, const Network& net);
// Loads values into an already-built network; names and shapes must match.
void load_checkpoint(const std::string& path, Network& net);

// Dataset container: the spec fields, the label matrix, and all inputs packed
// into one record. The loader re-validates the dataset invariants.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace modnet
