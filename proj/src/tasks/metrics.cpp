#include "pfesta/tasks/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace pfesta::tasks {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw MetricError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U from mid-ranks of tied groups.
  double positive_rank_sum = 0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = (i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0 && labels[order[k]] != 1) throw MetricError("auc: labels must be 0 or 1");
      if (labels[order[k]] == 1) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auc: needs both positive and negative labels");
  const double u = positive_rank_sum - positives * (positives + 1) / 2.0;
  return u / (static_cast<double>(positives) * negatives);
}

double mean_one_vs_rest_auc(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& classes,
                            std::size_t n_classes) {
  if (scores.size() != classes.size()) throw MetricError("auc: scores and classes differ in length");
  double sum = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s.push_back(scores[i].at(c));
      l.push_back(classes[i] == c ? 1 : 0);
    }
    sum += auc(s, l);
  }
  return sum / n_classes;
}

double mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw MetricError("mse: shapes " + shape_string(pred.shape()) + " and " + shape_string(target.shape()));
  }
  if (pred.empty()) throw MetricError("mse: empty input");
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    sum += d * d;
  }
  return sum / pred.size();
}

double dice(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw MetricError("dice: shapes " + shape_string(pred.shape()) + " and " + shape_string(truth.shape()));
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= 0.5f, t = truth[i] >= 0.5f;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * both / static_cast<double>(a + b);
}

}  // namespace pfesta::tasks
