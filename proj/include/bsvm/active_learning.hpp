#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "bsvm/data.hpp"
#include "bsvm/predict.hpp"

namespace bsvm {

enum class QueryPolicy { kVariationRatio, kMeanEntropy };

QueryPolicy parse_policy(const std::string& name);
std::string policy_name(QueryPolicy p);

struct ALConfig {
  QueryPolicy policy = QueryPolicy::kVariationRatio;
  int budget = 100;
  Eigen::Index inducing_points = 4;
  int retrain_epochs = 200;
  double retrain_lr = 0.02;  // cold-start retrains on a handful of points
                             // need a larger step than the full-data default
  std::vector<std::uint64_t> seeds = {0};
  int vr_samples = 128;
  int threads = 0;           // 0 = hardware concurrency

  void validate() const;
};

struct QueryRecord {
  int step = 0;            // 0 = state right after the seed labeling
  long query_index = -1;   // pool index added at this step, -1 for step 0
  double policy_score = 0.0;
  long n_labeled = 0;
  double test_error = 0.0;
};

struct ActiveLearningTrace {
  std::uint64_t seed = 0;
  std::vector<QueryRecord> records;  // budget + 1 entries
};

/// Policy scores over a predictive distribution: the variation ratio, or
/// the Shannon entropy (natural log) of the softmaxed means.
Eigen::VectorXd policy_score(const PredictiveDistribution& dist, QueryPolicy policy,
                             int vr_samples, std::uint64_t seed);

/// Pool-based simulation, one trace per seed. Each seed labels one uniform
/// random pool instance per class, trains from scratch, then for `budget`
/// rounds scores the unlabeled pool, queries the maximizer (ties toward the
/// smallest pool index), retrains, and records the 0/1 test error. Seeds run
/// as independent parallel jobs.
std::vector<ActiveLearningTrace> run_active_learning(const Dataset& pool, const Dataset& test,
                                                     const ALConfig& cfg);

void write_trace_csv(const ActiveLearningTrace& trace, const std::string& path);
/// step, n_labeled, mean and standard error of the test error across seeds.
void write_aggregate_csv(const std::vector<ActiveLearningTrace>& traces, const std::string& path);

}  // namespace bsvm
