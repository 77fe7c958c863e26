#include "modnet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "modnet/error.hpp"

namespace modnet {

namespace {

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

double retrieval_accuracy(const std::function<std::vector<double>(int sample)>& embed,
                          const TripletBatch& triplets, int task) {
  if (triplets.entries.empty()) throw ArgumentError("retrieval_accuracy: empty triplet set");
  for (const auto& tr : triplets.entries) {
    if (tr.task != task) {
      throw ArgumentError("retrieval_accuracy: triplet belongs to task " + std::to_string(tr.task) +
                          ", expected " + std::to_string(task));
    }
  }
  // Embed each distinct sample once.
  std::set<int> unique;
  for (const auto& tr : triplets.entries) {
    unique.insert(tr.anchor);
    unique.insert(tr.positive);
    unique.insert(tr.negative);
  }
  const std::vector<int> ids(unique.begin(), unique.end());
  std::vector<std::vector<double>> emb(ids.size());
  const long n = static_cast<long>(ids.size());
  // Exceptions cannot unwind out of a parallel region; carry the first one.
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    try {
      emb[i] = embed(ids[i]);
    } catch (...) {
#pragma omp critical(modnet_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::map<int, const std::vector<double>*> lookup;
  for (size_t i = 0; i < ids.size(); ++i) lookup[ids[i]] = &emb[i];

  long success = 0;
  const long m = static_cast<long>(triplets.entries.size());
#pragma omp parallel for schedule(static) reduction(+ : success)
  for (long i = 0; i < m; ++i) {
    const auto& tr = triplets.entries[i];
    const auto& fa = *lookup.at(tr.anchor);
    if (euclidean(fa, *lookup.at(tr.positive)) < euclidean(fa, *lookup.at(tr.negative))) {
      ++success;
    }
  }
  return static_cast<double>(success) / static_cast<double>(m);
}

double retrieval_accuracy(const VariantModel& model, int task, const TripletBatch& triplets,
                          const Dataset& ds, bool normalize) {
  return retrieval_accuracy(
      [&](int sample) { return model.embed(ds.inputs[sample], task, normalize); }, triplets, task);
}

double retrieval_accuracy(const Network& net, int task, const TripletBatch& triplets,
                          const Dataset& ds) {
  return retrieval_accuracy(
      [&](int sample) { return forward(net, ds.inputs[sample], task, false).embedding; }, triplets,
      task);
}

double RetrievalReport::mean_accuracy(const std::string& variant) const {
  double sum = 0.0;
  long n = 0;
  for (const auto& run : runs) {
    if (run.variant != variant) continue;
    for (double a : run.task_accuracy) {
      sum += a;
      ++n;
    }
  }
  if (n == 0) throw ArgumentError("no runs for variant '" + variant + "'");
  return sum / static_cast<double>(n);
}

double RetrievalReport::mean_pair_ucr(const std::string& variant) const {
  double sum = 0.0;
  long n = 0;
  for (const auto& run : runs) {
    if (run.variant != variant || run.final_ucr.empty()) continue;
    for (size_t t = 0; t < run.final_ucr.size(); ++t) {
      for (size_t u = t + 1; u < run.final_ucr.size(); ++u) {
        sum += run.final_ucr[t][u];
        ++n;
      }
    }
  }
  if (n == 0) throw ArgumentError("no UCR records for variant '" + variant + "'");
  return sum / static_cast<double>(n);
}

RetrievalReport compare_variants(const std::vector<TrainConfig>& cfgs, const Dataset& ds,
                                 const std::vector<uint64_t>& seeds) {
  if (cfgs.empty() || seeds.empty()) throw ConfigError("compare_variants: nothing to run");
  for (const auto& cfg : cfgs) {
    if (cfg.tasks != cfgs[0].tasks || cfg.eval_seed != cfgs[0].eval_seed ||
        cfg.eval_triplets_per_task != cfgs[0].eval_triplets_per_task) {
      throw ConfigError("compare_variants: configs must share tasks and evaluation settings");
    }
  }

  RetrievalReport report;
  report.tasks = cfgs[0].tasks;

  std::vector<TrainConfig> jobs;
  for (const auto& base_cfg : cfgs) {
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base_cfg;
      cfg.seed = seed;
      jobs.push_back(cfg);
    }
  }
  report.runs.resize(jobs.size());

  // Runs are fully independent, so a couple of worker threads may chew
  // through them; results land in fixed slots, so the report never depends on
  // scheduling.
  std::atomic<size_t> next{0};
  std::exception_ptr failure = nullptr;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const TrainConfig& cfg = jobs[j];
      try {
        const TrainResult res = train(cfg, ds);
        CompareRun run;
        run.variant = cfg.label();
        run.seed = cfg.seed;
        run.task_accuracy = res.metrics.back().task_accuracy;
        run.shared_params = res.model.shared_param_count();
        run.task_specific_params = res.model.task_param_count();
        if (res.ucr_recorded) {
          const long last_first = (static_cast<long>(cfg.epochs) - 1) * res.steps_per_epoch;
          run.final_ucr = ucr_report(res.ledger, last_first,
                                     static_cast<long>(cfg.epochs) * res.steps_per_epoch - 1);
        }
        report.runs[j] = std::move(run);
      } catch (const NumericError& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) {
          failure = std::make_exception_ptr(
              NumericError(std::string(e.what()) + " (variant " + cfg.label() + ", seed " +
                           std::to_string(cfg.seed) + ")"));
        }
        return;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const size_t workers =
      std::min<size_t>(jobs.size(), std::max(1u, std::thread::hardware_concurrency()));
#ifdef _OPENMP
  // Worker threads own the cores; nested kernel parallelism would only
  // oversubscribe them.
  const int omp_prev = omp_get_max_threads();
  const int omp_share = std::max(1, static_cast<int>(std::thread::hardware_concurrency() /
                                                     std::max<size_t>(1, workers)));
  omp_set_num_threads(omp_share);
#endif
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
#ifdef _OPENMP
  omp_set_num_threads(omp_prev);
#endif
  if (failure) std::rethrow_exception(failure);
  return report;
}

void write_report_csv(std::ostream& os, const RetrievalReport& report) {
  os << "variant,task,accuracy,shared_params,task_params\n";
  std::vector<std::string> order;
  for (const auto& run : report.runs) {
    if (std::find(order.begin(), order.end(), run.variant) == order.end()) {
      order.push_back(run.variant);
    }
  }
  char buf[64];
  for (const auto& variant : order) {
    for (int t = 0; t < report.tasks; ++t) {
      double sum = 0.0;
      long n = 0;
      size_t shared = 0, task_params = 0;
      for (const auto& run : report.runs) {
        if (run.variant != variant) continue;
        sum += run.task_accuracy[t];
        ++n;
        shared = run.shared_params;
        task_params = run.task_specific_params;
      }
      std::snprintf(buf, sizeof(buf), "%.17g", sum / static_cast<double>(n));
      os << variant << "," << t << "," << buf << "," << shared << "," << task_params << "\n";
    }
  }
}

void write_report_summary(std::ostream& os, const RetrievalReport& report) {
  std::vector<std::string> order;
  for (const auto& run : report.runs) {
    if (std::find(order.begin(), order.end(), run.variant) == order.end()) {
      order.push_back(run.variant);
    }
  }
  os << "variant                        mean_acc  sd_acc   shared_params  task_params  mean_pair_ucr\n";
  for (const auto& variant : order) {
    std::vector<double> means;
    size_t shared = 0, task_params = 0;
    bool has_ucr = false;
    for (const auto& run : report.runs) {
      if (run.variant != variant) continue;
      double m = 0.0;
      for (double a : run.task_accuracy) m += a;
      means.push_back(m / static_cast<double>(run.task_accuracy.size()));
      shared = run.shared_params;
      task_params = run.task_specific_params;
      has_ucr |= !run.final_ucr.empty();
    }
    double mean = 0.0;
    for (double m : means) mean += m;
    mean /= static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    const double sd = means.size() > 1 ? std::sqrt(var / static_cast<double>(means.size() - 1)) : 0.0;

    char line[256];
    if (has_ucr) {
      std::snprintf(line, sizeof(line), "%-30s %8.4f  %6.4f  %13zu  %11zu  %12.4f\n",
                    variant.c_str(), mean, sd, shared, task_params,
                    report.mean_pair_ucr(variant));
    } else {
      std::snprintf(line, sizeof(line), "%-30s %8.4f  %6.4f  %13zu  %11zu  %12s\n", variant.c_str(),
                    mean, sd, shared, task_params, "-");
    }
    os << line;
  }
}

void write_triplets_csv(std::ostream& os, const std::vector<TripletBatch>& per_task) {
  os << "task,anchor,positive,negative\n";
  for (const auto& batch : per_task) {
    for (const auto& tr : batch.entries) {
      os << tr.task << "," << tr.anchor << "," << tr.positive << "," << tr.negative << "\n";
    }
  }
}

}  // namespace modnet
