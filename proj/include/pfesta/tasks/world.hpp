#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pfesta/engine/tensor.hpp"

namespace pfesta::tasks {

enum class TaskKind { Classification, Severity, Segmentation };

std::string_view to_string(TaskKind kind);
std::optional<TaskKind> task_from_string(std::string_view s);

inline constexpr std::size_t kClasses = 3;  // normal, bilateral, unilateral
inline constexpr std::size_t kRegions = 6;  // 2 columns x 3 rows of the lung field

class WorldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// What was planted in an image. Classification and severity labels are both
// read off the blobs; the segmentation band is drawn independently.
struct Latent {
  std::size_t class_id = 0;
  std::array<float, kRegions> region_occupancy{};
  bool has_band = false;
};

struct Sample {
  std::uint64_t id = 0;
  Tensor image;  // [1 x H x W]
  Tensor label;  // [3] one-hot, [6] occupancy, or [H x W] mask
  Latent latent;
};

struct TaskSetup {
  TaskKind kind = TaskKind::Classification;
  std::string name;
  std::vector<std::size_t> client_sizes;
  // Per client, relative weights over the 3 latent classes; empty means
  // balanced. Allocation uses largest remainders.
  std::vector<std::array<double, kClasses>> class_weights;
  // Samples available per latent class for training; 0 means "enough for any
  // allocation". Requests above it raise WorldError.
  std::size_t pool_per_class = 0;
  std::size_t test_size = 60;
};

struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t image_size = 32;
  std::vector<TaskSetup> tasks;
};

struct TaskData {
  TaskSetup setup;
  std::vector<std::vector<Sample>> clients;  // training partitions
  std::vector<Sample> test;
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<TaskData> tasks;

  std::size_t client_count() const;
};

// Weights that move a fraction `skew` of each client's mass onto class
// (client mod 3). skew = 0 is balanced.
std::vector<std::array<double, kClasses>> skewed_weights(std::size_t n_clients, double skew);

// Largest-remainder split of `total` by `weights`; ties go to the lower index.
std::array<std::size_t, kClasses> allocate(std::size_t total, const std::array<double, kClasses>& weights);

// A single sample drawn from its own (seed, task, class, index) stream.
Sample generate_sample(std::uint64_t seed, std::size_t task_index, TaskKind kind, std::size_t class_id,
                       std::uint64_t index, std::size_t image_size);

SyntheticWorld generate_world(const WorldConfig& config);

// Label tensor shape for a task kind at a given image size.
Shape label_shape(TaskKind kind, std::size_t image_size);

// Per-client class counts, one line per (task, client).
std::string manifest(const SyntheticWorld& world);

// Images and labels in the checkpoint container, one file per task, plus
// manifest.txt. Names are "<client|test>/<id>/image" and ".../label".
void dump_world(const SyntheticWorld& world, const std::string& directory);

}  // namespace pfesta::tasks
