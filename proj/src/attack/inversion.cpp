#include "pfesta/attack/inversion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <tuple>

#include "pfesta/tasks/world.hpp"

namespace pfesta::attack {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.dim(0), t.dim(1));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
  return m;
}

Tensor from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = static_cast<float>(m(r, c));
  return t;
}

// Greedy one-to-one matching of rows to positions by ascending distance.
std::vector<std::size_t> nearest_assignment(const Matrix& rows, const Matrix& refs) {
  const auto n = static_cast<std::size_t>(rows.rows());
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back((rows.row(j) - refs.row(i)).squaredNorm(), j, i);
  std::sort(pairs.begin(), pairs.end());
  std::vector<std::size_t> out(n, n);
  std::vector<bool> taken(n, false);
  for (const auto& [d, j, i] : pairs)
    if (out[j] == n && !taken[i]) {
      out[j] = i;
      taken[i] = true;
    }
  return out;
}

}  // namespace

bool Knowledge::covers(const Knowledge& other) const {
  return (embedder || !other.embedder) && (pos_embedding || !other.pos_embedding) &&
         (permutation || !other.permutation);
}

std::string Knowledge::label() const {
  std::string s;
  s += embedder ? 'E' : '-';
  s += pos_embedding ? 'P' : '-';
  s += permutation ? 'K' : '-';
  return s;
}

Tensor projection_pseudo_inverse(const Tensor& weight) {
  if (weight.rank() != 2) throw AttackError("projection must be a matrix");
  const Matrix w = to_matrix(weight);
  if (w.rows() > w.cols()) throw AttackError("projection maps to fewer dimensions than a patch has");
  // Least squares for p in p * W = r is solving W^T p^T = r^T.
  const Matrix wt = w.transpose();
  Eigen::ColPivHouseholderQR<Matrix> qr(wt);
  if (qr.rank() < w.rows()) throw AttackError("projection is rank deficient; patches are not recoverable");
  const Matrix left = qr.solve(Matrix::Identity(wt.rows(), wt.rows()));  // [patch_dim x dim]
  return from_matrix(left.transpose());
}

Inversion invert(const AttackScenario& scenario, const model::HeadParams& truth, const AttackerAids& aids) {
  const auto& cfg = truth.config;
  const std::size_t n = cfg.n_tokens();
  if (scenario.intercepted.rank() != 2 || scenario.intercepted.dim(0) != n || scenario.intercepted.dim(1) != cfg.dim)
    throw AttackError("intercepted tokens do not match the head geometry");
  const auto& knows = scenario.knows;
  if (knows.permutation && (!aids.key || aids.key->size() != n)) throw AttackError("known permutation needs its key");
  if (!knows.embedder && !aids.surrogate) throw AttackError("unknown embedder needs a surrogate head");

  const auto& own = knows.embedder ? truth : *aids.surrogate;
  const Matrix pinv = to_matrix(projection_pseudo_inverse(own.params.at("proj.weight")));
  const Tensor& bias = own.params.at("proj.bias");
  Matrix pos = Matrix::Zero(n, cfg.dim);
  if (knows.pos_embedding) pos = to_matrix(truth.params.at("pos_embedding"));

  Matrix rows = to_matrix(scenario.intercepted);
  for (Eigen::Index j = 0; j < rows.rows(); ++j)
    for (Eigen::Index c = 0; c < rows.cols(); ++c) rows(j, c) -= bias[c];

  Inversion out;
  if (knows.permutation) {
    out.assignment = aids.key->forward();
  } else if (knows.pos_embedding) {
    out.assignment = nearest_assignment(rows, pos);
  } else {
    out.assignment.resize(n);
    std::iota(out.assignment.begin(), out.assignment.end(), std::size_t{0});
  }

  Matrix patches(n, cfg.patch_dim());
  for (std::size_t j = 0; j < n; ++j) {
    const auto at = out.assignment[j];
    patches.row(at) = (rows.row(j) - pos.row(at)) * pinv;
  }
  out.patches = from_matrix(patches);
  return out;
}

InversionScore score(const Inversion& inversion, const Tensor& true_patches, const perm::PermutationKey& key) {
  if (inversion.patches.shape() != true_patches.shape()) throw AttackError("patch shapes differ");
  const std::size_t n = true_patches.dim(0), w = true_patches.dim(1);
  InversionScore s;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0;
    for (std::size_t c = 0; c < w; ++c) {
      const double d = static_cast<double>(inversion.patches.at(i, c)) - true_patches.at(i, c);
      acc += d * d;
    }
    s.per_patch_mse.push_back(acc / w);
    s.mse += acc / w / n;
  }
  std::size_t hits = 0;
  for (std::size_t j = 0; j < n; ++j) hits += inversion.assignment[j] == key.forward()[j];
  s.assignment_accuracy = static_cast<double>(hits) / n;
  return s;
}

ReportRow run_trials(const TrialConfig& cfg, const Knowledge& knows) {
  if (cfg.head.image_h != cfg.head.image_w) throw AttackError("trial images must be square");
  if (cfg.trials == 0) throw AttackError("at least one trial is required");
  Rng head_rng = make_stream(cfg.seed, {0x61747461, 0});
  const auto truth = model::init_head(cfg.head, head_rng);
  Rng key_rng = make_stream(cfg.seed, {0x61747461, 2});

  ReportRow row{knows, cfg.trials, 0, 0, 0};
  double sum_sq = 0;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Rng surrogate_rng = make_stream(cfg.seed, {0x61747461, 1, t});
    const auto surrogate = model::init_head(cfg.head, surrogate_rng);
    const auto sample = tasks::generate_sample(cfg.seed, 0, tasks::TaskKind::Classification, t % tasks::kClasses, t,
                                               cfg.head.image_h);
    const auto key = perm::generate_key(t, cfg.head.n_tokens(), key_rng);
    AttackScenario sc{knows, perm::permute(model::embed_patches(sample.image, truth), key)};
    const auto inv = invert(sc, truth, {&key, &surrogate});
    const auto s = score(inv, model::extract_patches(sample.image, cfg.head), key);
    row.mse += s.mse / cfg.trials;
    sum_sq += s.mse * s.mse;
    row.assignment_accuracy += s.assignment_accuracy / cfg.trials;
  }
  if (cfg.trials > 1) {
    const double n = static_cast<double>(cfg.trials);
    row.mse_stderr = std::sqrt(std::max(0.0, sum_sq / n - row.mse * row.mse) / (n - 1));
  }
  return row;
}

bool ordered_by_knowledge(const ReportRow& more, const ReportRow& less) {
  if (!more.knows.covers(less.knows)) throw AttackError("rows are not ordered by knowledge");
  if (more.knows.embedder) return less.mse >= more.mse;
  const double slack = 3 * std::hypot(more.mse_stderr, less.mse_stderr);
  return less.mse >= more.mse - slack;
}

std::vector<ReportRow> run_grid(const TrialConfig& cfg) {
  std::vector<Knowledge> grid;
  for (int mask = 7; mask >= 0; --mask) grid.push_back({bool(mask & 4), bool(mask & 2), bool(mask & 1)});
  std::stable_sort(grid.begin(), grid.end(), [](const Knowledge& a, const Knowledge& b) { return a.count() > b.count(); });
  std::vector<ReportRow> rows;
  for (const auto& k : grid) rows.push_back(run_trials(cfg, k));
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "knows_embedder,knows_pos_embedding,knows_permutation,trials,mse,mse_stderr,assignment_accuracy\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%zu,%.9g,%.3g,%.6f\n", r.knows.embedder, r.knows.pos_embedding,
                  r.knows.permutation, r.trials, r.mse, r.mse_stderr, r.assignment_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace pfesta::attack
