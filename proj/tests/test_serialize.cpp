#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "bsvm/data.hpp"
#include "bsvm/errors.hpp"
#include "bsvm/gradcheck.hpp"
#include "bsvm/predict.hpp"
#include "bsvm/serialize.hpp"

using namespace bsvm;

TEST_CASE("model JSON round trip preserves parameters and predictions") {
  RandomInstance inst = make_random_instance(14, 3, 5, 3, 8);
  Standardizer std_stats;
  std_stats.means = Eigen::VectorXd::Constant(3, 0.5);
  std_stats.stds = Eigen::VectorXd::Constant(3, 2.0);
  std_stats.kept_columns = {0, 1, 2};

  const std::string path = "model_roundtrip_test.json";
  ModelBundle bundle{inst.state, std_stats, {"red", "green", "blue"}};
  save_model(bundle, path);
  const ModelBundle back = load_model(path);
  std::remove(path.c_str());

  CHECK(back.state.n_classes == 3);
  CHECK((back.state.vp.mu - inst.state.vp.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.state.vp.alpha - inst.state.vp.alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.state.Z.Z - inst.state.Z.Z).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 0; j < 3; ++j) {
    CHECK((back.state.vp.chol_sigma[static_cast<std::size_t>(j)] -
           inst.state.vp.chol_sigma[static_cast<std::size_t>(j)])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  CHECK(back.label_names == bundle.label_names);
  CHECK(back.standardizer.kept_columns == std_stats.kept_columns);

  // a reloaded model predicts identically
  const Eigen::MatrixXd x_test = inst.x.topRows(5);
  const PredictiveDistribution a = predict_dist(inst.state, x_test);
  const PredictiveDistribution b = predict_dist(back.state, x_test);
  CHECK((a.means - b.means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.variances - b.variances).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model loading rejects malformed documents") {
  SUBCASE("not JSON") {
    std::ofstream("bad_model_test.json") << "not json at all {";
    CHECK_THROWS_AS(load_model("bad_model_test.json"), IngestError);
    std::remove("bad_model_test.json");
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model("nonexistent_model.json"), IngestError); }
  SUBCASE("wrong version") {
    std::ofstream("ver_model_test.json") << "{\"format_version\": 999}";
    CHECK_THROWS_AS(load_model("ver_model_test.json"), IngestError);
    std::remove("ver_model_test.json");
  }
}
