#include "modnet/ucr.hpp"

#include <cstdio>

#include "modnet/error.hpp"

namespace modnet {

UcrLedger make_ledger(int task_count, bool lean) {
  if (task_count < 1) throw ArgumentError("ledger task_count must be >= 1");
  UcrLedger l;
  l.task_count = task_count;
  l.lean = lean;
  return l;
}

int compliance_sign(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("compliance_sign: gradient lengths differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0;
  for (size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot >= 0.0 ? 1 : -1;
}

void record_task_gradients(UcrLedger& ledger, long batch_index, int task,
                           const std::vector<double>& flat_shared_grads) {
  if (task < 0 || task >= ledger.task_count) throw ArgumentError("ledger task id out of range");
  if (ledger.shared_dim == 0) ledger.shared_dim = flat_shared_grads.size();
  if (flat_shared_grads.size() != ledger.shared_dim) {
    throw ShapeError("shared gradient length changed between records (" +
                     std::to_string(flat_shared_grads.size()) + " vs " +
                     std::to_string(ledger.shared_dim) + ")");
  }
  if (ledger.lean && !ledger.batches.empty() && batch_index < ledger.batches.rbegin()->first) {
    throw StateError("lean ledger requires non-decreasing batch indices");
  }
  auto& rec = ledger.batches[batch_index];
  if (rec.tasks.count(task)) {
    throw StateError("duplicate gradient record for batch " + std::to_string(batch_index) +
                     ", task " + std::to_string(task));
  }
  rec.tasks.insert(task);
  if (ledger.lean) {
    // Signs are resolved against the other tasks already seen in this batch;
    // the vectors of older batches are already gone.
    for (const auto& [other, g] : rec.grads) {
      const int a = other < task ? other : task;
      const int b = other < task ? task : other;
      rec.signs[{a, b}] = compliance_sign(g, flat_shared_grads);
    }
    rec.grads[task] = flat_shared_grads;
    if (rec.tasks.size() == static_cast<size_t>(ledger.task_count)) rec.grads.clear();
    // Batches before this one are complete; drop their raw vectors too.
    for (auto& [idx, old] : ledger.batches) {
      if (idx < batch_index) old.grads.clear();
    }
  } else {
    rec.grads[task] = flat_shared_grads;
  }
}

void record_task_gradients(UcrLedger& ledger, long batch_index, int task, const Network& net) {
  std::vector<double> flat;
  net.flatten_shared_grads(flat);
  record_task_gradients(ledger, batch_index, task, flat);
}

std::vector<std::vector<double>> ucr_report(const UcrLedger& ledger, long first_batch,
                                            long last_batch) {
  const int T = ledger.task_count;
  auto lo = ledger.batches.lower_bound(first_batch);
  auto hi = ledger.batches.upper_bound(last_batch);
  if (lo == hi) throw ArgumentError("ucr_report: no recorded batches in the requested range");

  std::vector<std::vector<double>> ucr(T, std::vector<double>(T, 1.0));
  for (int t = 0; t < T; ++t) {
    for (int u = t + 1; u < T; ++u) {
      long total = 0, positive = 0;
      for (auto it = lo; it != hi; ++it) {
        const auto& rec = it->second;
        if (!rec.tasks.count(t) || !rec.tasks.count(u)) continue;
        int sign;
        if (ledger.lean) {
          sign = rec.signs.at({t, u});
        } else {
          sign = compliance_sign(rec.grads.at(t), rec.grads.at(u));
        }
        ++total;
        if (sign > 0) ++positive;
      }
      if (total == 0) {
        throw StateError("ucr_report: tasks " + std::to_string(t) + " and " + std::to_string(u) +
                         " share no batch in the requested range");
      }
      ucr[t][u] = ucr[u][t] = static_cast<double>(positive) / static_cast<double>(total);
    }
  }
  return ucr;
}

void write_ucr_csv_header(std::ostream& os) { os << "task_i,task_j,epoch,ucr\n"; }

void append_ucr_csv(std::ostream& os, const std::vector<std::vector<double>>& ucr, int epoch) {
  char buf[64];
  for (size_t t = 0; t < ucr.size(); ++t) {
    for (size_t u = t + 1; u < ucr.size(); ++u) {
      std::snprintf(buf, sizeof(buf), "%.17g", ucr[t][u]);
      os << t << "," << u << "," << epoch << "," << buf << "\n";
    }
  }
}

}  // namespace modnet
