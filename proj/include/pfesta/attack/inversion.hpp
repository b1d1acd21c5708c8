#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfesta/model/vit.hpp"
#include "pfesta/perm/permutation.hpp"

// Linear inversion of intercepted head outputs back to image patches. The
// attacker sees the token rows exactly as transport carries them and knows
// some subset of: the true embedder, the position embedding, the permutation.
namespace pfesta::attack {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Knowledge {
  bool embedder = true;
  bool pos_embedding = true;
  bool permutation = true;

  int count() const { return int(embedder) + int(pos_embedding) + int(permutation); }
  bool covers(const Knowledge& other) const;
  std::string label() const;
};

struct AttackScenario {
  Knowledge knows;
  Tensor intercepted;  // [n_tokens x dim]
};

// What the attacker can bring along. `key` is consulted only when the
// permutation is known, `surrogate` only when the embedder is not.
struct AttackerAids {
  const perm::PermutationKey* key = nullptr;
  const model::HeadParams* surrogate = nullptr;
};

struct Inversion {
  Tensor patches;                      // [n_tokens x patch_dim] in claimed position order
  std::vector<std::size_t> assignment;  // intercepted row -> claimed position
};

struct InversionScore {
  std::vector<double> per_patch_mse;
  double mse = 0;
  double assignment_accuracy = 0;
};

// Least-squares left inverse of a [patch_dim x dim] projection, as a
// [dim x patch_dim] matrix. Throws AttackError when the projection does not
// have full row rank.
Tensor projection_pseudo_inverse(const Tensor& weight);

Inversion invert(const AttackScenario& scenario, const model::HeadParams& truth, const AttackerAids& aids);

InversionScore score(const Inversion& inversion, const Tensor& true_patches, const perm::PermutationKey& key);

struct TrialConfig {
  std::uint64_t seed = 0;
  std::size_t trials = 200;
  model::HeadConfig head{1, 16, 16, 4, 32};
};

struct ReportRow {
  Knowledge knows;
  std::size_t trials = 0;
  double mse = 0;
  double mse_stderr = 0;  // standard error of the per-trial mean
  double assignment_accuracy = 0;
};

// One row, averaged over cfg.trials fresh (image, key, surrogate) draws
// against a fixed true head.
ReportRow run_trials(const TrialConfig& cfg, const Knowledge& knows);

// Whether `less` (covered by `more`) reconstructs no better than `more`.
// Without the embedder the position aids cannot help in expectation, so such
// pairs are compared up to three combined standard errors.
bool ordered_by_knowledge(const ReportRow& more, const ReportRow& less);

// All eight flag combinations, most knowledge first.
std::vector<ReportRow> run_grid(const TrialConfig& cfg);

std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace pfesta::attack
