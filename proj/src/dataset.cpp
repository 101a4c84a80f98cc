#include "bmask/dataset.hpp"

#include <stdexcept>
#include <string>

namespace bmask {

void Dataset::validate() const {
  if (x.rows() < 1 || x.cols() < 1) {
    throw std::invalid_argument("dataset needs at least one sample and one feature");
  }
  if (y.size() != x.rows()) {
    throw std::invalid_argument("target length " + std::to_string(y.size()) +
                                " does not match " + std::to_string(x.rows()) + " rows");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw std::invalid_argument("dataset contains NaN or Inf");
  }
  if (true_beta && true_beta->size() != x.cols()) {
    throw std::invalid_argument("true_beta length does not match feature count");
  }
  if (true_irrelevant) {
    for (Index k : *true_irrelevant) {
      if (k < 0 || k >= x.cols()) {
        throw std::invalid_argument("true_irrelevant index out of range");
      }
    }
  }
}

std::optional<std::vector<bool>> Dataset::truth_zero_mask() const {
  const auto k = static_cast<std::size_t>(features());
  if (true_irrelevant) {
    std::vector<bool> mask(k, false);
    for (Index j : *true_irrelevant) mask[static_cast<std::size_t>(j)] = true;
    return mask;
  }
  if (true_beta) {
    std::vector<bool> mask(k, false);
    for (std::size_t j = 0; j < k; ++j) mask[j] = ((*true_beta)(static_cast<Index>(j)) == 0.0);
    return mask;
  }
  return std::nullopt;
}

Dataset select_features(const Dataset& data, const std::vector<Index>& columns) {
  Dataset out;
  out.x.resize(data.samples(), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.x.col(static_cast<Index>(j)) = data.x.col(columns[j]);
  }
  out.y = data.y;
  if (data.true_beta) {
    Eigen::VectorXd tb(static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) tb(static_cast<Index>(j)) = (*data.true_beta)(columns[j]);
    out.true_beta = tb;
  }
  if (data.true_irrelevant) {
    std::vector<Index> mapped;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      for (Index k : *data.true_irrelevant) {
        if (k == columns[j]) mapped.push_back(static_cast<Index>(j));
      }
    }
    out.true_irrelevant = mapped;
  }
  return out;
}

}  // namespace bmask
