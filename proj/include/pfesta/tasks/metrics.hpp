#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "pfesta/engine/tensor.hpp"

namespace pfesta::tasks {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Probability that a random positive outscores a random negative, ties
// counted one half. Needs at least one label of each kind.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean of the one-vs-rest AUCs. scores[i][c] is sample i's score for class c.
double mean_one_vs_rest_auc(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& classes,
                            std::size_t n_classes);

double mse(const Tensor& pred, const Tensor& target);

// Both inputs thresholded at 0.5. Two empty masks score 1.
double dice(const Tensor& pred, const Tensor& truth);

}  // namespace pfesta::tasks
