#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "pfesta/engine/tensor.hpp"

namespace pfesta {

using Rng = std::mt19937_64;

// Independent stream for a (seed, path...) tuple, e.g. {seed, purpose, client, sample}.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline Tensor uniform_tensor(Shape shape, float low, float high, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> dist(low, high);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

inline Tensor normal_tensor(Shape shape, float mean, float stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(mean, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace pfesta
