#include "pfesta/tasks/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pfesta/engine/random.hpp"
#include "pfesta/model/params.hpp"

namespace pfesta::tasks {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Severity: return "severity";
    case TaskKind::Segmentation: return "segmentation";
  }
  return "unknown";
}

std::optional<TaskKind> task_from_string(std::string_view s) {
  for (auto k : {TaskKind::Classification, TaskKind::Severity, TaskKind::Segmentation})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::size_t SyntheticWorld::client_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.clients.size();
  return n;
}

std::vector<std::array<double, kClasses>> skewed_weights(std::size_t n_clients, double skew) {
  if (skew < 0 || skew > 1) throw WorldError("skew must be in [0, 1]");
  std::vector<std::array<double, kClasses>> out(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    out[c].fill((1 - skew) / kClasses);
    out[c][c % kClasses] += skew;
  }
  return out;
}

std::array<std::size_t, kClasses> allocate(std::size_t total, const std::array<double, kClasses>& weights) {
  double sum = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw WorldError("class weights must be finite and non-negative");
    sum += w;
  }
  if (sum <= 0) throw WorldError("class weights sum to zero");
  std::array<std::size_t, kClasses> counts{};
  std::array<double, kClasses> frac{};
  std::size_t given = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double exact = total * weights[c] / sum;
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    frac[c] = exact - counts[c];
    given += counts[c];
  }
  std::array<std::size_t, kClasses> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; given < total; ++i, ++given) ++counts[order[i % kClasses]];
  return counts;
}

Shape label_shape(TaskKind kind, std::size_t image_size) {
  switch (kind) {
    case TaskKind::Classification: return {kClasses};
    case TaskKind::Severity: return {kRegions};
    case TaskKind::Segmentation: return {image_size, image_size};
  }
  throw WorldError("unknown task kind");
}

namespace {

constexpr std::uint64_t kSampleStream = 0x73616d70;

struct Region {
  std::size_t y0, y1, x0, x1;
};

Region region(std::size_t r, std::size_t size) {
  const std::size_t row = r / 2, col = r % 2;
  auto edge = [size](std::size_t k, std::size_t parts) { return (size * k + parts / 2) / parts; };
  return {edge(row, 3), edge(row + 1, 3), edge(col, 2), edge(col + 1, 2)};
}

void add_blob(Tensor& image, std::size_t size, double cy, double cx, double sigma, double amplitude) {
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      image[y * size + x] += static_cast<float>(amplitude * std::exp(-d2 / (2 * sigma * sigma)));
    }
}

}  // namespace

Sample generate_sample(std::uint64_t seed, std::size_t task_index, TaskKind kind, std::size_t class_id,
                       std::uint64_t index, std::size_t image_size) {
  if (class_id >= kClasses) throw WorldError("class id out of range");
  if (image_size < 8) throw WorldError("image size must be at least 8");
  Rng rng = make_stream(seed, {kSampleStream, task_index, class_id, index});
  const std::size_t s = image_size;
  const double scale = s / 32.0;
  std::uniform_real_distribution<double> u01(0, 1);
  std::normal_distribution<double> noise(0, 0.15);

  Sample out;
  out.image = Tensor({1, s, s});
  out.latent.class_id = class_id;

  // patterned background
  const double fx = 1 + 3 * u01(rng), fy = 1 + 3 * u01(rng), phase = 6.283185307179586 * u01(rng);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x)
      out.image[y * s + x] = static_cast<float>(0.15 * std::sin(6.283185307179586 * (fx * x + fy * y) / s + phase) +
                                                noise(rng));

  // disease blobs: bilateral strong (class 1), unilateral medium (class 2)
  if (class_id != 0) {
    std::vector<std::size_t> regions;
    if (class_id == 1) {
      const std::size_t left = 2 * std::uniform_int_distribution<std::size_t>(0, 2)(rng);
      const std::size_t right = 2 * std::uniform_int_distribution<std::size_t>(0, 2)(rng) + 1;
      regions = {left, right};
      const std::size_t extra = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      for (std::size_t i = 0; i < extra; ++i) regions.push_back(std::uniform_int_distribution<std::size_t>(0, 5)(rng));
    } else {
      const std::size_t side = std::uniform_int_distribution<std::size_t>(0, 1)(rng);
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      for (std::size_t i = 0; i < n; ++i)
        regions.push_back(2 * std::uniform_int_distribution<std::size_t>(0, 2)(rng) + side);
    }
    const double base = class_id == 1 ? 1.0 : 0.6;
    for (auto r : regions) {
      const auto g = region(r, s);
      const double cy = g.y0 + u01(rng) * (g.y1 - g.y0 - 1);
      const double cx = g.x0 + u01(rng) * (g.x1 - g.x0 - 1);
      add_blob(out.image, s, cy, cx, scale * (2.0 + u01(rng)), base + 0.2 * (u01(rng) - 0.5));
      out.latent.region_occupancy[r] = 1.0f;
    }
  }

  Tensor mask({s, s});
  if (kind == TaskKind::Segmentation && u01(rng) < 0.5) {
    // bright band along the outer edge of one lung
    out.latent.has_band = true;
    const bool right = u01(rng) < 0.5;
    const auto width = static_cast<std::size_t>(std::round(scale * (3 + 3 * u01(rng))));
    const auto y0 = static_cast<std::size_t>(scale * (2 + 8 * u01(rng)));
    const auto len = static_cast<std::size_t>(scale * (10 + 10 * u01(rng)));
    for (std::size_t y = y0; y < std::min(s, y0 + len); ++y)
      for (std::size_t k = 0; k < width; ++k) {
        const std::size_t x = right ? s - 1 - k : k;
        out.image[y * s + x] += 0.8f;
        mask.at(y, x) = 1.0f;
      }
  }

  switch (kind) {
    case TaskKind::Classification:
      out.label = Tensor({kClasses});
      out.label[class_id] = 1.0f;
      break;
    case TaskKind::Severity:
      out.label = Tensor({kRegions}, std::vector<float>(out.latent.region_occupancy.begin(),
                                                        out.latent.region_occupancy.end()));
      break;
    case TaskKind::Segmentation:
      out.label = std::move(mask);
      break;
  }
  return out;
}

SyntheticWorld generate_world(const WorldConfig& config) {
  SyntheticWorld world{config, {}};
  for (std::size_t t = 0; t < config.tasks.size(); ++t) {
    const auto& setup = config.tasks[t];
    if (setup.client_sizes.empty()) throw WorldError("task '" + setup.name + "' has no clients");
    if (!setup.class_weights.empty() && setup.class_weights.size() != setup.client_sizes.size()) {
      throw WorldError("task '" + setup.name + "': one class-weight row per client required");
    }
    TaskData data{setup, {}, {}};
    std::array<std::size_t, kClasses> next{};  // next pool index per class
    std::size_t total = 0;
    for (auto n : setup.client_sizes) {
      if (n == 0) throw WorldError("task '" + setup.name + "': client sizes must be >= 1");
      total += n;
    }
    const std::size_t pool = setup.pool_per_class ? setup.pool_per_class : total;
    for (std::size_t c = 0; c < setup.client_sizes.size(); ++c) {
      const auto weights = setup.class_weights.empty() ? std::array<double, kClasses>{1, 1, 1} : setup.class_weights[c];
      const auto counts = allocate(setup.client_sizes[c], weights);
      std::vector<Sample> part;
      for (std::size_t k = 0; k < kClasses; ++k) {
        if (next[k] + counts[k] > pool) {
          throw WorldError("task '" + setup.name + "': class " + std::to_string(k) + " needs " +
                           std::to_string(next[k] + counts[k]) + " samples but the pool holds " +
                           std::to_string(pool));
        }
        for (std::size_t i = 0; i < counts[k]; ++i) {
          auto smp = generate_sample(config.seed, t, setup.kind, k, next[k], config.image_size);
          smp.id = k * pool + next[k]++;
          part.push_back(std::move(smp));
        }
      }
      // interleave classes deterministically
      Rng order = make_stream(config.seed, {kSampleStream, t, 1000 + c});
      std::shuffle(part.begin(), part.end(), order);
      data.clients.push_back(std::move(part));
    }
    const auto test_counts = allocate(setup.test_size, {1, 1, 1});
    for (std::size_t k = 0; k < kClasses; ++k)
      for (std::size_t i = 0; i < test_counts[k]; ++i) {
        // test samples come from a disjoint index range of the same generator
        auto smp = generate_sample(config.seed, t, setup.kind, k, (std::uint64_t{1} << 40) + i, config.image_size);
        smp.id = kClasses * pool + data.test.size();
        data.test.push_back(std::move(smp));
      }
    world.tasks.push_back(std::move(data));
  }
  return world;
}

std::string manifest(const SyntheticWorld& world) {
  std::ostringstream out;
  out << "# task client samples class0 class1 class2\n";
  for (const auto& t : world.tasks) {
    auto line = [&](const std::string& who, const std::vector<Sample>& samples) {
      std::array<std::size_t, kClasses> counts{};
      for (const auto& s : samples) ++counts[s.latent.class_id];
      out << t.setup.name << ' ' << who << ' ' << samples.size() << ' ' << counts[0] << ' ' << counts[1] << ' '
          << counts[2] << '\n';
    };
    for (std::size_t c = 0; c < t.clients.size(); ++c) line("client" + std::to_string(c), t.clients[c]);
    line("test", t.test);
  }
  return out.str();
}

void dump_world(const SyntheticWorld& world, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  for (const auto& t : world.tasks) {
    model::ParamSet tensors;
    auto put = [&](const std::string& who, const std::vector<Sample>& samples) {
      for (const auto& s : samples) {
        const std::string base = who + "/" + std::to_string(s.id) + "/";
        tensors.emplace(base + "image", s.image);
        tensors.emplace(base + "label", s.label);
      }
    };
    for (std::size_t c = 0; c < t.clients.size(); ++c) put("client" + std::to_string(c), t.clients[c]);
    put("test", t.test);
    model::save_checkpoint((fs::path(directory) / (t.setup.name + ".bin")).string(), tensors);
  }
  std::ofstream(fs::path(directory) / "manifest.txt") << manifest(world);
}

}  // namespace pfesta::tasks
