#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace bsvm {

/// Column standardization fitted on a training split: zero-variance columns
/// are dropped, the rest mapped to zero mean and unit standard deviation.
struct Standardizer {
  Eigen::VectorXd means;          // per kept column
  Eigen::VectorXd stds;           // per kept column
  std::vector<int> kept_columns;  // indices into the original feature matrix

  bool fitted() const { return !kept_columns.empty() || means.size() > 0; }
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

/// Fits on `x`; emits one stderr warning per dropped constant column when
/// `warn` is set.
Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& x, bool warn = true);

struct Dataset {
  Eigen::MatrixXd X;                     // N x M
  Eigen::VectorXi y;                     // length N, values in 1..C
  int class_count = 0;
  std::vector<std::string> label_names;  // original label per class, index j-1
  std::vector<std::string> feature_names;
  Standardizer standardizer;             // set once a fitting split applied it
  bool standardized = false;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  void validate() const;
};

/// CSV ingestion: UTF-8 with a header row; the label column may hold
/// integers or categorical strings, mapped to 1..C in first-appearance
/// order. Parse problems report 1-based line numbers.
Dataset load_csv(const std::string& path, const std::string& label_column);

/// Writes features plus the label column (original label names).
void save_csv(const Dataset& d, const std::string& path, const std::string& label_column);

/// Prediction-time ingestion against a fixed label list: `label_column` may
/// be empty or absent from the header (y comes back empty), otherwise label
/// values must appear in `label_names`. No minimum class-count requirement.
Dataset load_csv_for_prediction(const std::string& path, const std::string& label_column,
                                const std::vector<std::string>& label_names);

/// Isotropic unit-variance Gaussian clusters with centers at mutual
/// distance `separation`; class sizes balanced to within one.
Dataset make_blobs(Eigen::Index n, int classes, Eigen::Index dims, double separation,
                   std::uint64_t seed);

/// Cluster centers used by make_blobs: a regular simplex with edge length
/// `separation` when dims >= classes - 1, otherwise seeded random directions
/// rescaled to the requested mean separation.
Eigen::MatrixXd blob_centers(int classes, Eigen::Index dims, double separation,
                             std::uint64_t seed = 0);

/// Stratified by default; standardization fitted on the train part and
/// applied to both. Unstratified mode is a seeded permutation split.
std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_fraction,
                                             std::uint64_t seed, bool stratified = true);

/// In-place: fit on d.X, drop constant columns, transform.
void standardize_fit(Dataset& d, bool warn = true);
/// In-place: apply an already-fitted standardizer.
void standardize_apply(Dataset& d, const Standardizer& s);

struct AccuracyTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  Eigen::MatrixXd accuracy;  // methods x datasets, complete

  void validate() const;
};

/// Long-form CSV `dataset,method,accuracy`; every (method, dataset) pair
/// must appear exactly once.
AccuracyTable load_accuracy_table(const std::string& path);

/// Competition ranks of one dataset column, descending accuracy; tied
/// entries share the average of their positions.
Eigen::VectorXd tied_ranks_desc(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Per-method mean rank across datasets, keyed by method name.
std::vector<std::pair<std::string, double>> mean_ranks(const AccuracyTable& t);

void write_rank_csv(const std::vector<std::pair<std::string, double>>& ranks,
                    const std::string& path);
std::string format_rank_table(const std::vector<std::pair<std::string, double>>& ranks);

/// 17-significant-digit float formatting shared by all CSV writers.
std::string format_double(double v);

}  // namespace bsvm
