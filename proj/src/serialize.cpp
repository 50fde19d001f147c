#include "bsvm/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "bsvm/errors.hpp"

namespace bsvm {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) {
      throw IngestError("model file: ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["n_classes"] = bundle.state.n_classes;
  doc["kernel"] = {{"lengthscale", vector_to_json(bundle.state.hyper.lengthscale)},
                   {"signal_variance", bundle.state.hyper.signal_variance},
                   {"jitter", bundle.state.hyper.jitter}};
  doc["inducing_inputs"] = matrix_to_json(bundle.state.Z.Z);
  doc["mu"] = matrix_to_json(bundle.state.vp.mu);
  json chols = json::array();
  for (const auto& l : bundle.state.vp.chol_sigma) chols.push_back(matrix_to_json(l));
  doc["chol_sigma"] = std::move(chols);
  doc["alpha"] = vector_to_json(bundle.state.vp.alpha);
  doc["standardization"] = {{"means", vector_to_json(bundle.standardizer.means)},
                            {"stds", vector_to_json(bundle.standardizer.stds)},
                            {"kept_columns", bundle.standardizer.kept_columns}};
  doc["labels"] = bundle.label_names;

  std::ofstream out(path);
  if (!out) throw IngestError("cannot open model file for writing: " + path);
  out << doc.dump(2) << '\n';
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open model file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IngestError("model file " + path + ": " + e.what());
  }

  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw IngestError("model file " + path + ": unsupported format version");
    }
    ModelBundle bundle;
    bundle.state.n_classes = doc.at("n_classes").get<int>();
    bundle.state.hyper.lengthscale = vector_from_json(doc.at("kernel").at("lengthscale"));
    bundle.state.hyper.signal_variance = doc.at("kernel").at("signal_variance").get<double>();
    bundle.state.hyper.jitter = doc.at("kernel").at("jitter").get<double>();
    bundle.state.Z.Z = matrix_from_json(doc.at("inducing_inputs"));
    bundle.state.vp.mu = matrix_from_json(doc.at("mu"));
    for (const auto& l : doc.at("chol_sigma")) {
      bundle.state.vp.chol_sigma.push_back(matrix_from_json(l));
    }
    bundle.state.vp.alpha = vector_from_json(doc.at("alpha"));
    bundle.standardizer.means = vector_from_json(doc.at("standardization").at("means"));
    bundle.standardizer.stds = vector_from_json(doc.at("standardization").at("stds"));
    bundle.standardizer.kept_columns =
        doc.at("standardization").at("kept_columns").get<std::vector<int>>();
    bundle.label_names = doc.at("labels").get<std::vector<std::string>>();

    bundle.state.vp.validate();
    bundle.state.hyper.validate();
    bundle.state.Z.validate();
    bundle.state.cache = build_prior_cache(bundle.state.Z, bundle.state.hyper);
    bundle.state.cache_stale = false;
    return bundle;
  } catch (const json::exception& e) {
    throw IngestError("model file " + path + ": " + e.what());
  }
}

}  // namespace bsvm
