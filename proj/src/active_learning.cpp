#include "bsvm/active_learning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "bsvm/errors.hpp"
#include "bsvm/optim.hpp"
#include "bsvm/rng.hpp"

namespace bsvm {

QueryPolicy parse_policy(const std::string& name) {
  if (name == "variation_ratio") return QueryPolicy::kVariationRatio;
  if (name == "mean_entropy") return QueryPolicy::kMeanEntropy;
  throw ConfigError("unknown query policy: " + name);
}

std::string policy_name(QueryPolicy p) {
  return p == QueryPolicy::kVariationRatio ? "variation_ratio" : "mean_entropy";
}

void ALConfig::validate() const {
  if (budget < 0) throw ConfigError("active learning: budget must be nonnegative");
  if (inducing_points < 1) throw ConfigError("active learning: need at least one inducing point");
  if (retrain_epochs < 1) throw ConfigError("active learning: retrain epochs must be positive");
  if (!(retrain_lr > 0.0)) throw ConfigError("active learning: retrain learning rate must be positive");
  if (seeds.empty()) throw ConfigError("active learning: need at least one seed");
  if (vr_samples < 1) throw ConfigError("active learning: vr_samples must be positive");
}

Eigen::VectorXd policy_score(const PredictiveDistribution& dist, QueryPolicy policy,
                             int vr_samples, std::uint64_t seed) {
  if (policy == QueryPolicy::kVariationRatio) {
    return variation_ratio(dist, vr_samples, seed);
  }
  const Eigen::MatrixXd probs = mean_softmax(dist);
  Eigen::VectorXd entropy(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    entropy(i) = h;
  }
  return entropy;
}

namespace {

double test_error(const ModelState& state, const Dataset& test) {
  const Eigen::VectorXi labels = decide(predict_dist(state, test.X));
  double wrong = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != test.y(i)) wrong += 1.0;
  }
  return wrong / static_cast<double>(std::max<Eigen::Index>(1, labels.size()));
}

ModelState retrain(const Dataset& pool, const std::vector<long>& labeled, const ALConfig& cfg,
                   std::uint64_t seed) {
  const Eigen::Index n = static_cast<Eigen::Index>(labeled.size());
  Eigen::MatrixXd x(n, pool.X.cols());
  Eigen::VectorXi y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = pool.X.row(labeled[static_cast<std::size_t>(i)]);
    y(i) = pool.y(labeled[static_cast<std::size_t>(i)]);
  }
  ModelState state = init_model(x, pool.class_count,
                                std::min<Eigen::Index>(cfg.inducing_points, n), seed);
  TrainConfig tc;
  tc.method = TrainMethod::kAdam;
  tc.epochs = cfg.retrain_epochs;
  tc.learning_rate = cfg.retrain_lr;
  tc.seed = seed;
  train_adam(state, x, y, tc);
  return state;
}

ModelState init_untrained(const Dataset& pool, const std::vector<long>& labeled,
                          const ALConfig& cfg, std::uint64_t seed) {
  const Eigen::Index n = static_cast<Eigen::Index>(labeled.size());
  Eigen::MatrixXd x(n, pool.X.cols());
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = pool.X.row(labeled[static_cast<std::size_t>(i)]);
  return init_model(x, pool.class_count, std::min<Eigen::Index>(cfg.inducing_points, n), seed);
}

ActiveLearningTrace run_one_seed(const Dataset& pool, const Dataset& test, const ALConfig& cfg,
                                 std::uint64_t seed) {
  ActiveLearningTrace trace;
  trace.seed = seed;

  // one uniform random instance per class, drawn before any policy work so
  // both policies start from the same labeled set
  auto rng = make_rng(derive_seed(seed, 0xA11F));
  std::vector<char> is_labeled(static_cast<std::size_t>(pool.size()), 0);
  std::vector<long> labeled;
  for (int c = 1; c <= pool.class_count; ++c) {
    std::vector<long> members;
    for (Eigen::Index i = 0; i < pool.size(); ++i) {
      if (pool.y(i) == c) members.push_back(static_cast<long>(i));
    }
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    const long chosen = members[pick(rng)];
    is_labeled[static_cast<std::size_t>(chosen)] = 1;
    labeled.push_back(chosen);
  }

  // row 0 is the post-initialization state, before any training round
  {
    const ModelState fresh = init_untrained(pool, labeled, cfg, derive_seed(seed, 0x7E000));
    trace.records.push_back(
        {0, -1, 0.0, static_cast<long>(labeled.size()), test_error(fresh, test)});
  }

  // each round: train from scratch on the labeled set, score the unlabeled
  // pool, query the maximizer, add its label, record the test error
  for (int step = 1; step <= cfg.budget; ++step) {
    const ModelState state = retrain(
        pool, labeled, cfg, derive_seed(seed, 0x7E000 + static_cast<std::uint64_t>(step)));

    std::vector<long> unlabeled;
    for (Eigen::Index i = 0; i < pool.size(); ++i) {
      if (!is_labeled[static_cast<std::size_t>(i)]) unlabeled.push_back(static_cast<long>(i));
    }
    if (unlabeled.empty()) break;

    Eigen::MatrixXd x_pool(static_cast<Eigen::Index>(unlabeled.size()), pool.X.cols());
    for (std::size_t k = 0; k < unlabeled.size(); ++k) {
      x_pool.row(static_cast<Eigen::Index>(k)) = pool.X.row(unlabeled[k]);
    }
    const PredictiveDistribution dist = predict_dist(state, x_pool);
    const Eigen::VectorXd scores =
        policy_score(dist, cfg.policy, cfg.vr_samples,
                     derive_seed(seed, 0x5C02E000ULL + static_cast<std::uint64_t>(step)));

    // maximizer, ties toward the smallest pool index (unlabeled is sorted)
    std::size_t best = 0;
    for (std::size_t k = 1; k < unlabeled.size(); ++k) {
      if (scores(static_cast<Eigen::Index>(k)) > scores(static_cast<Eigen::Index>(best))) {
        best = k;
      }
    }
    const long query = unlabeled[best];
    is_labeled[static_cast<std::size_t>(query)] = 1;
    labeled.push_back(query);

    trace.records.push_back({step, query, scores(static_cast<Eigen::Index>(best)),
                             static_cast<long>(labeled.size()), test_error(state, test)});
  }
  return trace;
}

}  // namespace

std::vector<ActiveLearningTrace> run_active_learning(const Dataset& pool, const Dataset& test,
                                                     const ALConfig& cfg) {
  cfg.validate();
  pool.validate();
  test.validate();
  if (test.X.cols() != pool.X.cols()) {
    throw IngestError("active learning: pool and test feature counts differ");
  }
  std::vector<char> seen(static_cast<std::size_t>(pool.class_count), 0);
  for (Eigen::Index i = 0; i < pool.size(); ++i) seen[static_cast<std::size_t>(pool.y(i) - 1)] = 1;
  for (int c = 0; c < pool.class_count; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw IngestError("active learning: pool is missing class " +
                        pool.label_names[static_cast<std::size_t>(c)]);
    }
  }

  std::vector<ActiveLearningTrace> traces(cfg.seeds.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(
      cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : hw,
      static_cast<unsigned>(cfg.seeds.size()));

  if (workers <= 1) {
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
      traces[k] = run_one_seed(pool, test, cfg, cfg.seeds[k]);
    }
    return traces;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cfg.seeds.size()) break;
      try {
        traces[k] = run_one_seed(pool, test, cfg, cfg.seeds[k]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return traces;
}

void write_trace_csv(const ActiveLearningTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open trace file for writing: " + path);
  out << "step,query_index,policy_score,n_labeled,test_error\n";
  for (const auto& rec : trace.records) {
    out << rec.step << ',' << rec.query_index << ',' << format_double(rec.policy_score) << ','
        << rec.n_labeled << ',' << format_double(rec.test_error) << '\n';
  }
}

void write_aggregate_csv(const std::vector<ActiveLearningTrace>& traces,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open aggregate file for writing: " + path);
  out << "step,n_labeled,mean_test_error,stderr_test_error,n_seeds\n";
  if (traces.empty()) return;
  const std::size_t steps = traces.front().records.size();
  for (std::size_t s = 0; s < steps; ++s) {
    double sum = 0.0;
    double count = 0.0;
    for (const auto& tr : traces) {
      if (s < tr.records.size()) {
        sum += tr.records[s].test_error;
        count += 1.0;
      }
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& tr : traces) {
      if (s < tr.records.size()) {
        sq += (tr.records[s].test_error - mean) * (tr.records[s].test_error - mean);
      }
    }
    const double stderr_val = count > 1.0 ? std::sqrt(sq / (count - 1.0)) / std::sqrt(count) : 0.0;
    out << traces.front().records[s].step << ',' << traces.front().records[s].n_labeled << ','
        << format_double(mean) << ',' << format_double(stderr_val) << ','
        << static_cast<long>(count) << '\n';
  }
}

}  // namespace bsvm
