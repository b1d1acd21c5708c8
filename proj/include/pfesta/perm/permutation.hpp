#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "pfesta/engine/random.hpp"
#include "pfesta/engine/tensor.hpp"

namespace pfesta::perm {

class KeyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Token-order permutation for one sample. permute() produces
// out[i] = tokens[forward[i]]; inverse undoes it.
class PermutationKey {
 public:
  PermutationKey(std::uint64_t sample_id, std::vector<std::size_t> forward);

  static PermutationKey identity(std::uint64_t sample_id, std::size_t n_tokens);

  std::uint64_t sample_id() const { return sample_id_; }
  std::size_t size() const { return forward_.size(); }
  const std::vector<std::size_t>& forward() const { return forward_; }
  const std::vector<std::size_t>& inverse() const { return inverse_; }

 private:
  std::uint64_t sample_id_;
  std::vector<std::size_t> forward_;
  std::vector<std::size_t> inverse_;
};

// Fisher-Yates shuffle drawn from `stream`.
PermutationKey generate_key(std::uint64_t sample_id, std::size_t n_tokens, Rng& stream);

// The key for (client, sample) under a run seed; each pair gets its own stream.
PermutationKey generate_key(std::uint64_t seed, std::uint32_t client_id, std::uint64_t sample_id,
                            std::size_t n_tokens);

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& tokens, const PermutationKey& key);

template <typename T>
BasicTensor<T> inverse_permute(const BasicTensor<T>& tokens, const PermutationKey& key);

// Client-side store. Keys are created once and then only read.
class KeyStore {
 public:
  const PermutationKey& add(PermutationKey key);
  const PermutationKey& at(std::uint64_t sample_id) const;
  bool contains(std::uint64_t sample_id) const { return keys_.contains(sample_id); }
  std::size_t size() const { return keys_.size(); }

 private:
  std::map<std::uint64_t, PermutationKey> keys_;
};

}  // namespace pfesta::perm
