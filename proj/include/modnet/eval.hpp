#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "modnet/training.hpp"

namespace modnet {

// Fraction of triplets whose positive lies strictly closer (Euclidean) to the
// anchor than the negative; ties count as failures.
double retrieval_accuracy(const std::function<std::vector<double>(int sample)>& embed,
                          const TripletBatch& triplets, int task);
double retrieval_accuracy(const VariantModel& model, int task, const TripletBatch& triplets,
                          const Dataset& ds, bool normalize = false);
double retrieval_accuracy(const Network& net, int task, const TripletBatch& triplets,
                          const Dataset& ds);

struct CompareRun {
  std::string variant;
  uint64_t seed = 0;
  std::vector<double> task_accuracy;
  size_t shared_params = 0;
  size_t task_specific_params = 0;
  std::vector<std::vector<double>> final_ucr;  // empty when not recorded
};

struct RetrievalReport {
  int tasks = 0;
  std::vector<CompareRun> runs;

  double mean_accuracy(const std::string& variant) const;
  // Mean of final-epoch UCR over unordered task pairs and seeds.
  double mean_pair_ucr(const std::string& variant) const;
};

// Trains every config for every seed; all runs share the dataset, the
// held-out split, and the evaluation triplets.
RetrievalReport compare_variants(const std::vector<TrainConfig>& cfgs, const Dataset& ds,
                                 const std::vector<uint64_t>& seeds);

// variant,task,accuracy,shared_params,task_params with accuracy averaged over
// seeds.
void write_report_csv(std::ostream& os, const RetrievalReport& report);
// Plain-text table: one row per variant with mean accuracy, parameter counts,
// and mean pairwise UCR.
void write_report_summary(std::ostream& os, const RetrievalReport& report);

void write_triplets_csv(std::ostream& os, const std::vector<TripletBatch>& per_task);

}  // namespace modnet
