#include "pfesta/perm/permutation.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace pfesta::perm {

namespace {
constexpr std::uint64_t kPermStream = 0x7065726d;

template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& tokens, const std::vector<std::size_t>& index, const char* what) {
  if (tokens.rank() != 2 || tokens.dim(0) != index.size()) {
    throw KeyError(std::string(what) + ": tokens " + shape_string(tokens.shape()) + " vs key of length " +
                   std::to_string(index.size()));
  }
  const std::size_t d = tokens.dim(1);
  BasicTensor<T> out(tokens.shape());
  auto src = tokens.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < index.size(); ++i)
    std::copy_n(src.begin() + index[i] * d, d, dst.begin() + i * d);
  return out;
}
}  // namespace

PermutationKey::PermutationKey(std::uint64_t sample_id, std::vector<std::size_t> forward)
    : sample_id_(sample_id), forward_(std::move(forward)), inverse_(forward_.size(), forward_.size()) {
  for (std::size_t i = 0; i < forward_.size(); ++i) {
    const std::size_t f = forward_[i];
    if (f >= forward_.size() || inverse_[f] != forward_.size()) throw KeyError("key is not a bijection");
    inverse_[f] = i;
  }
}

PermutationKey PermutationKey::identity(std::uint64_t sample_id, std::size_t n_tokens) {
  std::vector<std::size_t> f(n_tokens);
  std::iota(f.begin(), f.end(), 0);
  return {sample_id, std::move(f)};
}

PermutationKey generate_key(std::uint64_t sample_id, std::size_t n_tokens, Rng& stream) {
  if (n_tokens == 0) throw KeyError("key needs at least one token");
  std::vector<std::size_t> f(n_tokens);
  std::iota(f.begin(), f.end(), 0);
  for (std::size_t i = n_tokens - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(f[i], f[pick(stream)]);
  }
  return {sample_id, std::move(f)};
}

PermutationKey generate_key(std::uint64_t seed, std::uint32_t client_id, std::uint64_t sample_id,
                            std::size_t n_tokens) {
  Rng stream = make_stream(seed, {kPermStream, client_id, sample_id});
  return generate_key(sample_id, n_tokens, stream);
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& tokens, const PermutationKey& key) {
  return gather(tokens, key.forward(), "permute");
}

template <typename T>
BasicTensor<T> inverse_permute(const BasicTensor<T>& tokens, const PermutationKey& key) {
  return gather(tokens, key.inverse(), "inverse_permute");
}

template Tensor permute<float>(const Tensor&, const PermutationKey&);
template TensorD permute<double>(const TensorD&, const PermutationKey&);
template Tensor inverse_permute<float>(const Tensor&, const PermutationKey&);
template TensorD inverse_permute<double>(const TensorD&, const PermutationKey&);

const PermutationKey& KeyStore::add(PermutationKey key) {
  const auto id = key.sample_id();
  auto [it, inserted] = keys_.emplace(id, std::move(key));
  if (!inserted) throw KeyError("duplicate key for sample " + std::to_string(id));
  return it->second;
}

const PermutationKey& KeyStore::at(std::uint64_t sample_id) const {
  auto it = keys_.find(sample_id);
  if (it == keys_.end()) throw KeyError("no key for sample " + std::to_string(sample_id));
  return it->second;
}

}  // namespace pfesta::perm
