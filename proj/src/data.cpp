#include "bsvm/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "bsvm/errors.hpp"
#include "bsvm/rng.hpp"

namespace bsvm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(kept_columns.size()));
  for (std::size_t k = 0; k < kept_columns.size(); ++k) {
    const Eigen::Index col = kept_columns[k];
    if (col >= x.cols()) throw ConfigError("standardizer: column index out of range");
    out.col(static_cast<Eigen::Index>(k)) =
        (x.col(col).array() - means(static_cast<Eigen::Index>(k))) /
        stds(static_cast<Eigen::Index>(k));
  }
  return out;
}

Standardizer fit_standardizer(const Eigen::Ref<const Eigen::MatrixXd>& x, bool warn) {
  constexpr double kStdFloor = 1e-12;
  Standardizer s;
  std::vector<double> means;
  std::vector<double> stds;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() /
                       std::max<double>(1.0, static_cast<double>(x.rows()));
    const double sd = std::sqrt(var);
    if (sd <= kStdFloor) {
      if (warn) std::cerr << "warning: dropping constant feature column " << c << "\n";
      continue;
    }
    s.kept_columns.push_back(static_cast<int>(c));
    means.push_back(mean);
    stds.push_back(sd);
  }
  s.means = Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.stds = Eigen::Map<const Eigen::VectorXd>(stds.data(), static_cast<Eigen::Index>(stds.size()));
  if (s.kept_columns.empty()) throw IngestError("standardization: every feature column is constant");
  return s;
}

void Dataset::validate() const {
  if (X.rows() != y.size()) throw IngestError("dataset: feature/label row mismatch");
  if (class_count < 2) throw IngestError("dataset: need at least two classes");
  if (!X.allFinite()) throw IngestError("dataset: non-finite features");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) < 1 || y(i) > class_count) throw IngestError("dataset: label out of range");
  }
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IngestError(path + ": empty file");
  const std::vector<std::string> header = split_line(line);
  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = static_cast<int>(i);
      break;
    }
  }
  if (label_idx < 0) {
    throw IngestError(path + ": label column '" + label_column + "' not found in header");
  }
  const std::size_t n_cols = header.size();
  const std::size_t n_features = n_cols - 1;

  std::vector<double> features;
  std::vector<int> labels;
  std::vector<std::string> label_names;
  std::map<std::string, int> label_map;
  long line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != n_cols) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << n_cols << " fields, got " << fields.size();
      throw IngestError(os.str());
    }
    for (std::size_t i = 0; i < n_cols; ++i) {
      if (static_cast<int>(i) == label_idx) {
        const std::string& name = fields[i];
        auto it = label_map.find(name);
        if (it == label_map.end()) {
          it = label_map.emplace(name, static_cast<int>(label_names.size()) + 1).first;
          label_names.push_back(name);
        }
        labels.push_back(it->second);
      } else {
        double v = 0.0;
        if (!parse_number(fields[i], v)) {
          std::ostringstream os;
          os << path << ":" << line_no << ": non-numeric feature value '" << fields[i]
             << "' in column '" << header[i] << "'";
          throw IngestError(os.str());
        }
        features.push_back(v);
      }
    }
  }

  const Eigen::Index n = static_cast<Eigen::Index>(labels.size());
  if (n == 0) throw IngestError(path + ": no data rows");
  if (label_names.size() < 2) {
    throw IngestError(path + ": labels contain a single class '" + label_names.front() + "'");
  }

  Dataset d;
  d.X.resize(n, static_cast<Eigen::Index>(n_features));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
      d.X(r, c) = features[static_cast<std::size_t>(r) * n_features + static_cast<std::size_t>(c)];
    }
  }
  d.y = Eigen::Map<const Eigen::VectorXi>(labels.data(), n);
  d.class_count = static_cast<int>(label_names.size());
  d.label_names = std::move(label_names);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) != label_idx) d.feature_names.push_back(header[i]);
  }
  d.validate();
  return d;
}

Dataset load_csv_for_prediction(const std::string& path, const std::string& label_column,
                                const std::vector<std::string>& label_names) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IngestError(path + ": empty file");
  const std::vector<std::string> header = split_line(line);
  int label_idx = -1;
  if (!label_column.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == label_column) {
        label_idx = static_cast<int>(i);
        break;
      }
    }
  }
  const std::size_t n_cols = header.size();
  const std::size_t n_features = label_idx >= 0 ? n_cols - 1 : n_cols;

  std::map<std::string, int> label_map;
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    label_map.emplace(label_names[i], static_cast<int>(i) + 1);
  }

  std::vector<double> features;
  std::vector<int> labels;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != n_cols) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << n_cols << " fields, got " << fields.size();
      throw IngestError(os.str());
    }
    for (std::size_t i = 0; i < n_cols; ++i) {
      if (static_cast<int>(i) == label_idx) {
        const auto it = label_map.find(fields[i]);
        if (it == label_map.end()) {
          std::ostringstream os;
          os << path << ":" << line_no << ": label '" << fields[i]
             << "' not among the model's classes";
          throw IngestError(os.str());
        }
        labels.push_back(it->second);
      } else {
        double v = 0.0;
        if (!parse_number(fields[i], v)) {
          std::ostringstream os;
          os << path << ":" << line_no << ": non-numeric feature value '" << fields[i]
             << "' in column '" << header[i] << "'";
          throw IngestError(os.str());
        }
        features.push_back(v);
      }
    }
  }

  const Eigen::Index n =
      static_cast<Eigen::Index>(n_features > 0 ? features.size() / n_features : 0);
  if (n == 0) throw IngestError(path + ": no data rows");

  Dataset d;
  d.X.resize(n, static_cast<Eigen::Index>(n_features));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
      d.X(r, c) = features[static_cast<std::size_t>(r) * n_features + static_cast<std::size_t>(c)];
    }
  }
  if (!labels.empty()) d.y = Eigen::Map<const Eigen::VectorXi>(labels.data(), n);
  d.class_count = static_cast<int>(label_names.size());
  d.label_names = label_names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (static_cast<int>(i) != label_idx) d.feature_names.push_back(header[i]);
  }
  if (!d.X.allFinite()) throw IngestError(path + ": non-finite features");
  return d;
}

void save_csv(const Dataset& d, const std::string& path, const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open CSV file for writing: " + path);
  for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
    if (static_cast<std::size_t>(c) < d.feature_names.size()) {
      out << d.feature_names[static_cast<std::size_t>(c)];
    } else {
      out << 'x' << (c + 1);
    }
    out << ',';
  }
  out << label_column << '\n';
  for (Eigen::Index r = 0; r < d.X.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) out << format_double(d.X(r, c)) << ',';
    out << d.label_names[static_cast<std::size_t>(d.y(r) - 1)] << '\n';
  }
}

Eigen::MatrixXd blob_centers(int classes, Eigen::Index dims, double separation,
                             std::uint64_t seed) {
  if (classes < 1 || dims < 1) throw ConfigError("blob_centers: classes and dims must be positive");
  if (separation < 0.0) throw ConfigError("blob_centers: separation must be nonnegative");

  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(classes, dims);
  if (classes == 1 || separation == 0.0) return centers;

  if (dims >= classes - 1) {
    // regular simplex with edge `separation`: start from scaled unit vectors
    // in R^classes, center them, and express in an orthonormal basis of
    // their span
    Eigen::MatrixXd simplex =
        (separation / std::sqrt(2.0)) * Eigen::MatrixXd::Identity(classes, classes);
    const Eigen::RowVectorXd centroid = simplex.colwise().mean();
    simplex.rowwise() -= centroid;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(simplex, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd coords =
        svd.matrixU().leftCols(classes - 1) *
        svd.singularValues().head(classes - 1).asDiagonal();
    centers.leftCols(classes - 1) = coords;
  } else {
    // not enough dimensions for mutual equidistance: seeded directions
    // rescaled so the mean pairwise distance matches
    auto rng = make_rng(derive_seed(seed, 0xCE17E5));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index r = 0; r < centers.rows(); ++r) {
      for (Eigen::Index c = 0; c < dims; ++c) centers(r, c) = gauss(rng);
    }
    double mean_dist = 0.0;
    int pairs = 0;
    for (int i = 0; i < classes; ++i) {
      for (int j = i + 1; j < classes; ++j) {
        mean_dist += (centers.row(i) - centers.row(j)).norm();
        ++pairs;
      }
    }
    mean_dist /= static_cast<double>(pairs);
    if (mean_dist > 0.0) centers *= separation / mean_dist;
  }
  return centers;
}

Dataset make_blobs(Eigen::Index n, int classes, Eigen::Index dims, double separation,
                   std::uint64_t seed) {
  if (n < classes) throw ConfigError("make_blobs: need at least one point per class");
  if (classes < 2) throw ConfigError("make_blobs: need at least two classes");
  const Eigen::MatrixXd centers = blob_centers(classes, dims, separation, seed);

  Dataset d;
  d.X.resize(n, dims);
  d.y.resize(n);
  auto rng = make_rng(derive_seed(seed, 0xB70B5));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % classes);
    for (Eigen::Index c = 0; c < dims; ++c) d.X(i, c) = centers(cls, c) + gauss(rng);
    d.y(i) = cls + 1;
  }
  d.class_count = classes;
  for (int j = 1; j <= classes; ++j) d.label_names.push_back(std::to_string(j));
  for (Eigen::Index c = 0; c < dims; ++c) d.feature_names.push_back("x" + std::to_string(c + 1));
  return d;
}

void standardize_fit(Dataset& d, bool warn) {
  d.standardizer = fit_standardizer(d.X, warn);
  d.X = d.standardizer.apply(d.X);
  std::vector<std::string> kept_names;
  for (int c : d.standardizer.kept_columns) {
    if (static_cast<std::size_t>(c) < d.feature_names.size()) {
      kept_names.push_back(d.feature_names[static_cast<std::size_t>(c)]);
    }
  }
  d.feature_names = std::move(kept_names);
  d.standardized = true;
}

void standardize_apply(Dataset& d, const Standardizer& s) {
  d.X = s.apply(d.X);
  std::vector<std::string> kept_names;
  for (int c : s.kept_columns) {
    if (static_cast<std::size_t>(c) < d.feature_names.size()) {
      kept_names.push_back(d.feature_names[static_cast<std::size_t>(c)]);
    }
  }
  d.feature_names = std::move(kept_names);
  d.standardizer = s;
  d.standardized = true;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_fraction,
                                             std::uint64_t seed, bool stratified) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("train_test_split: test fraction must lie in (0, 1)");
  }
  const Eigen::Index n = d.size();
  std::vector<char> in_test(static_cast<std::size_t>(n), 0);
  auto rng = make_rng(derive_seed(seed, 0x5B117));

  if (stratified) {
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(d.class_count));
    for (Eigen::Index i = 0; i < n; ++i) {
      by_class[static_cast<std::size_t>(d.y(i) - 1)].push_back(i);
    }
    const long total_test = std::lround(test_fraction * static_cast<double>(n));
    long assigned = 0;
    std::vector<long> take(static_cast<std::size_t>(d.class_count));
    for (int c = 0; c < d.class_count; ++c) {
      const auto& members = by_class[static_cast<std::size_t>(c)];
      if (members.size() < 2) {
        throw ConfigError("train_test_split: class " + std::to_string(c + 1) +
                          " has fewer than two members");
      }
      take[static_cast<std::size_t>(c)] = static_cast<long>(
          std::floor(test_fraction * static_cast<double>(members.size())));
      assigned += take[static_cast<std::size_t>(c)];
    }
    // remainder goes to classes in index order
    while (assigned < total_test) {
      bool progressed = false;
      for (int c = 0; assigned < total_test && c < d.class_count; ++c) {
        const auto sz = static_cast<long>(by_class[static_cast<std::size_t>(c)].size());
        if (take[static_cast<std::size_t>(c)] < sz - 1) {
          ++take[static_cast<std::size_t>(c)];
          ++assigned;
          progressed = true;
        }
      }
      if (!progressed) break;
    }
    for (int c = 0; c < d.class_count; ++c) {
      auto members = by_class[static_cast<std::size_t>(c)];
      std::shuffle(members.begin(), members.end(), rng);
      for (long k = 0; k < take[static_cast<std::size_t>(c)]; ++k) {
        in_test[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = 1;
      }
    }
  } else {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const long total_test = std::lround(test_fraction * static_cast<double>(n));
    for (long k = 0; k < total_test; ++k) {
      in_test[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
    }
  }

  auto collect = [&](bool test_part) {
    Dataset part;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((in_test[static_cast<std::size_t>(i)] != 0) == test_part) rows.push_back(i);
    }
    part.X.resize(static_cast<Eigen::Index>(rows.size()), d.X.cols());
    part.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      part.X.row(static_cast<Eigen::Index>(k)) = d.X.row(rows[k]);
      part.y(static_cast<Eigen::Index>(k)) = d.y(rows[k]);
    }
    part.class_count = d.class_count;
    part.label_names = d.label_names;
    part.feature_names = d.feature_names;
    return part;
  };

  Dataset train = collect(false);
  Dataset test = collect(true);
  standardize_fit(train, /*warn=*/false);
  standardize_apply(test, train.standardizer);
  return {std::move(train), std::move(test)};
}

void AccuracyTable::validate() const {
  if (accuracy.rows() != static_cast<Eigen::Index>(methods.size()) ||
      accuracy.cols() != static_cast<Eigen::Index>(datasets.size())) {
    throw IngestError("accuracy table: matrix shape does not match the name lists");
  }
  if (!accuracy.allFinite()) throw IngestError("accuracy table: incomplete matrix");
}

AccuracyTable load_accuracy_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open accuracy table: " + path);

  std::string line;
  if (!std::getline(in, line)) throw IngestError(path + ": empty file");
  const auto header = split_line(line);
  if (header.size() != 3 || header[0] != "dataset" || header[1] != "method" ||
      header[2] != "accuracy") {
    throw IngestError(path + ": expected header 'dataset,method,accuracy'");
  }

  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::map<std::string, int> method_idx;
  std::map<std::string, int> dataset_idx;
  struct Cell {
    int m, d;
    double acc;
  };
  std::vector<Cell> cells;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 3) {
      throw IngestError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    double acc = 0.0;
    if (!parse_number(fields[2], acc) || acc < 0.0 || acc > 1.0) {
      throw IngestError(path + ":" + std::to_string(line_no) + ": accuracy '" + fields[2] +
                        "' not in [0, 1]");
    }
    auto mit = method_idx.find(fields[1]);
    if (mit == method_idx.end()) {
      mit = method_idx.emplace(fields[1], static_cast<int>(methods.size())).first;
      methods.push_back(fields[1]);
    }
    auto dit = dataset_idx.find(fields[0]);
    if (dit == dataset_idx.end()) {
      dit = dataset_idx.emplace(fields[0], static_cast<int>(datasets.size())).first;
      datasets.push_back(fields[0]);
    }
    cells.push_back({mit->second, dit->second, acc});
  }

  AccuracyTable t;
  t.methods = std::move(methods);
  t.datasets = std::move(datasets);
  t.accuracy = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(t.methods.size()),
                                         static_cast<Eigen::Index>(t.datasets.size()),
                                         std::numeric_limits<double>::quiet_NaN());
  for (const auto& cell : cells) {
    if (std::isfinite(t.accuracy(cell.m, cell.d))) {
      throw IngestError(path + ": duplicate cell for method '" +
                        t.methods[static_cast<std::size_t>(cell.m)] + "' and dataset '" +
                        t.datasets[static_cast<std::size_t>(cell.d)] + "'");
    }
    t.accuracy(cell.m, cell.d) = cell.acc;
  }
  for (Eigen::Index m = 0; m < t.accuracy.rows(); ++m) {
    for (Eigen::Index d = 0; d < t.accuracy.cols(); ++d) {
      if (!std::isfinite(t.accuracy(m, d))) {
        throw IngestError(path + ": missing accuracy for method '" +
                          t.methods[static_cast<std::size_t>(m)] + "' on dataset '" +
                          t.datasets[static_cast<std::size_t>(d)] + "'");
      }
    }
  }
  return t;
}

Eigen::VectorXd tied_ranks_desc(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Eigen::Index k = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) > values(b); });

  Eigen::VectorXd ranks(k);
  Eigen::Index pos = 0;
  while (pos < k) {
    Eigen::Index end = pos;
    while (end + 1 < k && values(order[static_cast<std::size_t>(end + 1)]) ==
                              values(order[static_cast<std::size_t>(pos)])) {
      ++end;
    }
    // positions pos..end (0-based) share the average of ranks pos+1..end+1
    const double avg = 0.5 * static_cast<double>(pos + end) + 1.0;
    for (Eigen::Index i = pos; i <= end; ++i) {
      ranks(order[static_cast<std::size_t>(i)]) = avg;
    }
    pos = end + 1;
  }
  return ranks;
}

std::vector<std::pair<std::string, double>> mean_ranks(const AccuracyTable& t) {
  t.validate();
  const Eigen::Index n_methods = t.accuracy.rows();
  const Eigen::Index n_datasets = t.accuracy.cols();
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_methods);
  for (Eigen::Index d = 0; d < n_datasets; ++d) {
    sums += tied_ranks_desc(t.accuracy.col(d));
  }
  std::vector<std::pair<std::string, double>> out;
  for (Eigen::Index m = 0; m < n_methods; ++m) {
    out.emplace_back(t.methods[static_cast<std::size_t>(m)],
                     sums(m) / static_cast<double>(n_datasets));
  }
  return out;
}

void write_rank_csv(const std::vector<std::pair<std::string, double>>& ranks,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot open rank file for writing: " + path);
  out << "method,mean_rank\n";
  for (const auto& [name, rank] : ranks) out << name << ',' << format_double(rank) << '\n';
}

std::string format_rank_table(const std::vector<std::pair<std::string, double>>& ranks) {
  std::size_t width = 6;
  for (const auto& [name, _] : ranks) width = std::max(width, name.size());
  std::ostringstream os;
  os << std::left;
  os.width(static_cast<std::streamsize>(width + 2));
  os << "method";
  os << "mean_rank\n";
  for (const auto& [name, rank] : ranks) {
    os.width(static_cast<std::streamsize>(width + 2));
    os << name;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", rank);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace bsvm
