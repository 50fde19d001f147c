#pragma once

#include <string>
#include <vector>

#include "bsvm/data.hpp"
#include "bsvm/model.hpp"

namespace bsvm {

inline constexpr int kModelFormatVersion = 1;

/// Everything needed to predict on raw data: the model state plus the
/// training-split standardization and the original label names.
struct ModelBundle {
  ModelState state;
  Standardizer standardizer;
  std::vector<std::string> label_names;
};

/// Single JSON document: kernel hyperparameters, Z, mu, Cholesky factors,
/// alpha, class count, standardization statistics, label names, and a
/// format-version field.
void save_model(const ModelBundle& bundle, const std::string& path);

/// Rebuilds the inducing-point part of the kernel cache on load; the
/// training-data part is not stored.
ModelBundle load_model(const std::string& path);

}  // namespace bsvm
