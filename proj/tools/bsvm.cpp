#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsvm/active_learning.hpp"
#include "bsvm/data.hpp"
#include "bsvm/errors.hpp"
#include "bsvm/gradcheck.hpp"
#include "bsvm/optim.hpp"
#include "bsvm/predict.hpp"
#include "bsvm/serialize.hpp"
#include "bsvm/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class PhaseTimer {
 public:
  void start(const std::string& phase) {
    current_ = phase;
    t0_ = std::chrono::steady_clock::now();
  }
  void stop() {
    if (current_.empty()) return;
    timings_[current_] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    current_.clear();
  }
  json to_json() const {
    json j;
    double total = 0.0;
    for (const auto& [phase, secs] : timings_) {
      j[phase] = secs;
      total += secs;
    }
    j["total"] = total;
    return j;
  }

 private:
  std::string current_;
  std::chrono::steady_clock::time_point t0_;
  std::map<std::string, double> timings_;
};

std::string manifest_path_for(const std::string& primary_output) {
  fs::path p(primary_output);
  p.replace_extension();
  return p.string() + ".manifest.json";
}

void write_manifest(const std::string& command, const json& config, std::uint64_t seed,
                    const PhaseTimer& timer, const std::vector<std::string>& outputs,
                    const std::string& path) {
  json doc;
  doc["command"] = command;
  doc["version"] = bsvm::kVersion;
  doc["config"] = config;
  doc["seed"] = seed;
  doc["timings_seconds"] = timer.to_json();
  doc["outputs"] = outputs;
  std::ofstream out(path);
  if (!out) throw bsvm::IngestError("cannot open manifest for writing: " + path);
  out << doc.dump(2) << '\n';
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw bsvm::ConfigError("--seeds: no seeds given");
  return seeds;
}

int cmd_train(const std::string& data_path, const std::string& label, const std::string& out,
              std::string trace_path, const std::string& method, int inducing, int epochs,
              double lr, double rho, double beta1, double beta2, double adam_eps,
              std::uint64_t seed, int hyperopt_every, int batch_size, bool alpha_gradient,
              double jitter) {
  bsvm::TrainConfig cfg;
  cfg.method = bsvm::parse_train_method(method);
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.rho = rho;
  cfg.adam_beta1 = beta1;
  cfg.adam_beta2 = beta2;
  cfg.adam_eps = adam_eps;
  cfg.seed = seed;
  cfg.hyperopt_every = hyperopt_every;
  cfg.batch_size = batch_size;
  cfg.alpha_gradient_updates = alpha_gradient;
  cfg.validate();

  PhaseTimer timer;
  timer.start("load");
  bsvm::Dataset data = bsvm::load_csv(data_path, label);
  bsvm::standardize_fit(data);
  timer.stop();

  timer.start("train");
  bsvm::ModelState state =
      bsvm::init_model(data.X, data.class_count, inducing, seed, jitter);
  const bsvm::TrainTrace trace = bsvm::fit(state, data.X, data.y, cfg);
  timer.stop();

  timer.start("write");
  if (trace_path.empty()) {
    fs::path p(out);
    p.replace_extension();
    trace_path = p.string() + ".trace.csv";
  }
  bsvm::ModelBundle bundle{std::move(state), data.standardizer, data.label_names};
  bsvm::save_model(bundle, out);
  bsvm::write_trace_csv(trace, trace_path);
  timer.stop();

  json config{{"data", data_path},         {"label", label},
              {"out", out},                {"trace", trace_path},
              {"method", method},          {"inducing", inducing},
              {"epochs", epochs},          {"lr", lr},
              {"rho", rho},                {"beta1", beta1},
              {"beta2", beta2},            {"adam_eps", adam_eps},
              {"hyperopt_every", hyperopt_every}, {"batch_size", batch_size},
              {"alpha_gradient", alpha_gradient}, {"jitter", jitter}};
  write_manifest("train", config, seed, timer, {out, trace_path}, manifest_path_for(out));
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& label, const std::string& out, int vr_samples,
                std::uint64_t seed) {
  PhaseTimer timer;
  timer.start("load");
  const bsvm::ModelBundle bundle = bsvm::load_model(model_path);
  bsvm::Dataset data = bsvm::load_csv_for_prediction(data_path, label, bundle.label_names);
  const Eigen::MatrixXd x = bundle.standardizer.apply(data.X);
  timer.stop();

  timer.start("predict");
  const bsvm::PredictiveDistribution dist = bsvm::predict_dist(bundle.state, x);
  const Eigen::VectorXi labels = bsvm::decide(dist);
  const Eigen::VectorXd vr = bsvm::variation_ratio(dist, vr_samples, seed);
  timer.stop();

  timer.start("write");
  std::ofstream os(out);
  if (!os) throw bsvm::IngestError("cannot open prediction file for writing: " + out);
  os << "index,predicted_class,variation_ratio";
  for (int j = 1; j <= bundle.state.n_classes; ++j) os << ",mean_" << j;
  for (int j = 1; j <= bundle.state.n_classes; ++j) os << ",var_" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < dist.n_points(); ++i) {
    os << i << ',' << bundle.label_names[static_cast<std::size_t>(labels(i) - 1)] << ','
       << bsvm::format_double(vr(i));
    for (Eigen::Index j = 0; j < dist.n_classes(); ++j) {
      os << ',' << bsvm::format_double(dist.means(i, j));
    }
    for (Eigen::Index j = 0; j < dist.n_classes(); ++j) {
      os << ',' << bsvm::format_double(dist.variances(i, j));
    }
    os << '\n';
  }
  os.close();
  timer.stop();

  json config{{"model", model_path}, {"data", data_path},      {"label", label},
              {"out", out},          {"vr_samples", vr_samples}};
  if (data.y.size() > 0) {
    double wrong = 0.0;
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
      if (labels(i) != data.y(i)) wrong += 1.0;
    }
    config["test_error"] = wrong / static_cast<double>(data.y.size());
  }
  write_manifest("predict", config, seed, timer, {out}, manifest_path_for(out));
  return 0;
}

int cmd_active_learn(const std::string& pool_path, const std::string& test_path,
                     const std::string& label, const std::string& policy, int budget,
                     int inducing, int retrain_epochs, double retrain_lr,
                     const std::string& seeds_csv, int vr_samples, int threads,
                     const std::string& out_prefix) {
  PhaseTimer timer;
  timer.start("load");
  bsvm::Dataset pool = bsvm::load_csv(pool_path, label);
  bsvm::Dataset test = bsvm::load_csv_for_prediction(test_path, label, pool.label_names);
  if (test.y.size() == 0) {
    throw bsvm::IngestError("active-learn: test file must contain the label column");
  }
  bsvm::standardize_fit(pool);
  bsvm::standardize_apply(test, pool.standardizer);
  timer.stop();

  bsvm::ALConfig cfg;
  cfg.policy = bsvm::parse_policy(policy);
  cfg.budget = budget;
  cfg.inducing_points = inducing;
  cfg.retrain_epochs = retrain_epochs;
  cfg.retrain_lr = retrain_lr;
  cfg.seeds = parse_seed_list(seeds_csv);
  cfg.vr_samples = vr_samples;
  cfg.threads = threads;
  cfg.validate();

  timer.start("simulate");
  const auto traces = bsvm::run_active_learning(pool, test, cfg);
  timer.stop();

  timer.start("write");
  std::vector<std::string> outputs;
  for (const auto& tr : traces) {
    const std::string path = out_prefix + ".seed" + std::to_string(tr.seed) + ".csv";
    bsvm::write_trace_csv(tr, path);
    outputs.push_back(path);
  }
  const std::string agg = out_prefix + ".aggregate.csv";
  bsvm::write_aggregate_csv(traces, agg);
  outputs.push_back(agg);
  timer.stop();

  json config{{"pool", pool_path},
              {"test", test_path},
              {"label", label},
              {"policy", policy},
              {"budget", budget},
              {"inducing", inducing},
              {"retrain_epochs", retrain_epochs},
              {"retrain_lr", retrain_lr},
              {"seeds", seeds_csv},
              {"vr_samples", vr_samples},
              {"threads", threads},
              {"out_prefix", out_prefix}};
  write_manifest("active-learn", config, cfg.seeds.front(), timer, outputs,
                 out_prefix + ".manifest.json");
  return 0;
}

int cmd_rank(const std::string& table_path, const std::string& out) {
  PhaseTimer timer;
  timer.start("rank");
  const bsvm::AccuracyTable table = bsvm::load_accuracy_table(table_path);
  const auto ranks = bsvm::mean_ranks(table);
  bsvm::write_rank_csv(ranks, out);
  std::cout << bsvm::format_rank_table(ranks);
  timer.stop();

  json config{{"table", table_path}, {"out", out}};
  write_manifest("rank", config, 0, timer, {out}, manifest_path_for(out));
  return 0;
}

int cmd_gradcheck(int n, int classes, int inducing, int dims, std::uint64_t seed,
                  double tolerance, double perturb_analytic) {
  const bsvm::RandomInstance inst =
      bsvm::make_random_instance(n, classes, inducing, dims, seed);
  const Eigen::VectorXi t = bsvm::competitor_classes(inst.state, inst.y);
  const bsvm::GradCheckReport report =
      bsvm::gradient_check(inst.state, inst.y, t, perturb_analytic);

  auto print_block = [](const char* name, const bsvm::GradCheckBlock& block) {
    std::printf("%-6s max_rel_error=%.3e worst=%s\n", name, block.max_rel_error,
                block.worst_coordinate.c_str());
  };
  print_block("mu", report.mu);
  print_block("chol", report.chol);
  print_block("alpha", report.alpha);

  if (!report.passes(tolerance)) {
    const bsvm::GradCheckBlock* worst = &report.mu;
    if (report.chol.max_rel_error > worst->max_rel_error) worst = &report.chol;
    if (report.alpha.max_rel_error > worst->max_rel_error) worst = &report.alpha;
    std::fprintf(stderr, "gradcheck FAILED: %s off by %.3e (tolerance %.1e)\n",
                 worst->worst_coordinate.c_str(), worst->max_rel_error, tolerance);
    return 2;
  }
  std::printf("gradcheck passed (tolerance %.1e)\n", tolerance);
  return 0;
}

int cmd_synth(const std::string& out, long n, int classes, int dims, double separation,
              std::uint64_t seed, const std::string& label) {
  PhaseTimer timer;
  timer.start("generate");
  const bsvm::Dataset d = bsvm::make_blobs(n, classes, dims, separation, seed);
  bsvm::save_csv(d, out, label);
  timer.stop();

  json config{{"out", out},   {"n", n},
              {"classes", classes}, {"dims", dims},
              {"separation", separation}, {"label", label}};
  write_manifest("synth", config, seed, timer, {out}, manifest_path_for(out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse variational multi-class Bayesian SVM"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a model on a CSV dataset");
  std::string tr_data, tr_label = "target", tr_out, tr_trace, tr_method = "adam";
  int tr_inducing = 64, tr_epochs = 1000, tr_hyperopt = 0, tr_batch = 0;
  double tr_lr = 5e-4, tr_rho = 0.5, tr_b1 = 0.9, tr_b2 = 0.999, tr_eps = 1e-8,
         tr_jitter = 1e-6;
  std::uint64_t tr_seed = 0;
  bool tr_alpha_grad = false;
  train->add_option("--data", tr_data, "Training CSV")->required();
  train->add_option("--label", tr_label, "Label column name")->capture_default_str();
  train->add_option("--out", tr_out, "Output model JSON")->required();
  train->add_option("--trace", tr_trace, "Trace CSV path (default: <out>.trace.csv)");
  train->add_option("--method", tr_method, "Training method: adam | coord_ascent")
      ->capture_default_str();
  train->add_option("--inducing", tr_inducing, "Number of inducing points")
      ->capture_default_str();
  train->add_option("--epochs", tr_epochs, "Training epochs")->capture_default_str();
  train->add_option("--lr", tr_lr, "Adam learning rate")->capture_default_str();
  train->add_option("--rho", tr_rho, "Coordinate-ascent step in (0,1]")->capture_default_str();
  train->add_option("--beta1", tr_b1, "Adam beta1")->capture_default_str();
  train->add_option("--beta2", tr_b2, "Adam beta2")->capture_default_str();
  train->add_option("--adam-eps", tr_eps, "Adam epsilon")->capture_default_str();
  train->add_option("--seed", tr_seed, "Random seed")->capture_default_str();
  train->add_option("--hyperopt-every", tr_hyperopt,
                    "Refine kernel hyperparameters every k epochs (0 = frozen)")
      ->capture_default_str();
  train->add_option("--batch-size", tr_batch, "Minibatch size (0 = full batch)")
      ->capture_default_str();
  train->add_flag("--alpha-gradient", tr_alpha_grad,
                  "Update alpha by gradient instead of the closed form");
  train->add_option("--jitter", tr_jitter, "Kernel jitter")->capture_default_str();

  // predict
  auto* predict = app.add_subcommand("predict", "Predict with a trained model");
  std::string pr_model, pr_data, pr_label, pr_out;
  int pr_vr = 128;
  std::uint64_t pr_seed = 0;
  predict->add_option("--model", pr_model, "Model JSON")->required();
  predict->add_option("--data", pr_data, "Input CSV")->required();
  predict->add_option("--label", pr_label, "Label column to exclude (optional)");
  predict->add_option("--out", pr_out, "Prediction CSV")->required();
  predict->add_option("--vr-samples", pr_vr, "Variation-ratio sample count")
      ->capture_default_str();
  predict->add_option("--seed", pr_seed, "Sampling seed")->capture_default_str();

  // active-learn
  auto* al = app.add_subcommand("active-learn", "Simulated pool-based active learning");
  std::string al_pool, al_test, al_label = "target", al_policy = "variation_ratio",
              al_seeds = "0", al_prefix;
  int al_budget = 100, al_inducing = 4, al_epochs = 200, al_vr = 128, al_threads = 0;
  double al_lr = 0.02;
  al->add_option("--pool", al_pool, "Pool CSV")->required();
  al->add_option("--test", al_test, "Held-out test CSV")->required();
  al->add_option("--label", al_label, "Label column name")->capture_default_str();
  al->add_option("--policy", al_policy, "variation_ratio | mean_entropy")
      ->capture_default_str();
  al->add_option("--budget", al_budget, "Number of queries")->capture_default_str();
  al->add_option("--inducing", al_inducing, "Inducing points per retrain")
      ->capture_default_str();
  al->add_option("--retrain-epochs", al_epochs, "Adam epochs per retrain")
      ->capture_default_str();
  al->add_option("--retrain-lr", al_lr, "Adam learning rate per retrain")
      ->capture_default_str();
  al->add_option("--seeds", al_seeds, "Comma-separated seed list")->capture_default_str();
  al->add_option("--vr-samples", al_vr, "Variation-ratio sample count")->capture_default_str();
  al->add_option("--threads", al_threads, "Worker threads (0 = hardware)")
      ->capture_default_str();
  al->add_option("--out-prefix", al_prefix, "Prefix for trace/aggregate outputs")->required();

  // rank
  auto* rank = app.add_subcommand("rank", "Mean-rank comparison from an accuracy table");
  std::string rk_table, rk_out = "ranks.csv";
  rank->add_option("--table", rk_table, "Long-form CSV dataset,method,accuracy")->required();
  rank->add_option("--out", rk_out, "Output CSV")->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Verify analytic gradients by finite differences");
  int gc_n = 20, gc_classes = 3, gc_inducing = 5, gc_dims = 3;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-5, gc_perturb = 0.0;
  gc->add_option("--n", gc_n, "Observations")->capture_default_str();
  gc->add_option("--classes", gc_classes, "Classes")->capture_default_str();
  gc->add_option("--inducing", gc_inducing, "Inducing points")->capture_default_str();
  gc->add_option("--dims", gc_dims, "Input dimensions")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Instance seed")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Maximum relative error")->capture_default_str();
  gc->add_option("--perturb-analytic", gc_perturb,
                 "Fault injection: offset added to analytic gradients")
      ->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate Gaussian-blob CSV data");
  std::string sy_out, sy_label = "target";
  long sy_n = 300;
  int sy_classes = 3, sy_dims = 2;
  double sy_sep = 6.0;
  std::uint64_t sy_seed = 0;
  synth->add_option("--out", sy_out, "Output CSV")->required();
  synth->add_option("--n", sy_n, "Number of points")->capture_default_str();
  synth->add_option("--classes", sy_classes, "Number of classes")->capture_default_str();
  synth->add_option("--dims", sy_dims, "Feature dimensions")->capture_default_str();
  synth->add_option("--separation", sy_sep, "Center separation")->capture_default_str();
  synth->add_option("--seed", sy_seed, "Random seed")->capture_default_str();
  synth->add_option("--label", sy_label, "Label column name")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (train->parsed()) {
      return cmd_train(tr_data, tr_label, tr_out, tr_trace, tr_method, tr_inducing, tr_epochs,
                       tr_lr, tr_rho, tr_b1, tr_b2, tr_eps, tr_seed, tr_hyperopt, tr_batch,
                       tr_alpha_grad, tr_jitter);
    }
    if (predict->parsed()) {
      return cmd_predict(pr_model, pr_data, pr_label, pr_out, pr_vr, pr_seed);
    }
    if (al->parsed()) {
      return cmd_active_learn(al_pool, al_test, al_label, al_policy, al_budget, al_inducing,
                              al_epochs, al_lr, al_seeds, al_vr, al_threads, al_prefix);
    }
    if (rank->parsed()) return cmd_rank(rk_table, rk_out);
    if (gc->parsed()) {
      return cmd_gradcheck(gc_n, gc_classes, gc_inducing, gc_dims, gc_seed, gc_tol, gc_perturb);
    }
    if (synth->parsed()) {
      return cmd_synth(sy_out, sy_n, sy_classes, sy_dims, sy_sep, sy_seed, sy_label);
    }
  } catch (const bsvm::IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const bsvm::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const bsvm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 3;
}
