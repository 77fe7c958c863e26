#pragma once

#include <map>
#include <ostream>
#include <set>
#include <vector>

#include "modnet/network.hpp"

namespace modnet {

// Tracks, per mini-batch and per task, the flattened shared-parameter
// gradient, and derives the Update Compliance Ratio: for a task pair, the
// fraction of batches whose gradients had a non-negative inner product. In
// lean mode only the pairwise signs are kept; both modes produce identical
// reports.
struct UcrLedger {
  int task_count = 0;
  bool lean = false;
  size_t shared_dim = 0;  // fixed by the first record

  struct BatchRec {
    std::map<int, std::vector<double>> grads;        // full mode
    std::map<std::pair<int, int>, int> signs;        // lean mode (eager)
    std::set<int> tasks;
  };
  std::map<long, BatchRec> batches;
};

UcrLedger make_ledger(int task_count, bool lean = false);

// +1 when <a, b> >= 0, else -1. A zero inner product exhibits no conflict.
int compliance_sign(const std::vector<double>& a, const std::vector<double>& b);

void record_task_gradients(UcrLedger& ledger, long batch_index, int task,
                           const std::vector<double>& flat_shared_grads);
// Flattens the network's shared parameter gradients (task-specific groups are
// excluded by construction).
void record_task_gradients(UcrLedger& ledger, long batch_index, int task, const Network& net);

// T x T matrix of compliance ratios over batches in [first_batch, last_batch]
// (inclusive); symmetric, unit diagonal.
std::vector<std::vector<double>> ucr_report(const UcrLedger& ledger, long first_batch,
                                            long last_batch);

// One row per unordered pair: task_i,task_j,epoch,ucr.
void write_ucr_csv_header(std::ostream& os);
void append_ucr_csv(std::ostream& os, const std::vector<std::vector<double>>& ucr, int epoch);

}  // namespace modnet
