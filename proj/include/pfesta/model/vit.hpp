#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "pfesta/engine/ops.hpp"
#include "pfesta/engine/random.hpp"
#include "pfesta/model/params.hpp"

// The split vision transformer: a patch-embedder head (client side), a stack
// of pre-norm encoder layers (server side) and task tails (client side).
namespace pfesta::model {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct HeadConfig {
  std::size_t channels = 1;
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t patch = 8;
  std::size_t dim = 32;

  std::size_t grid_h() const { return image_h / patch; }
  std::size_t grid_w() const { return image_w / patch; }
  std::size_t n_tokens() const { return grid_h() * grid_w(); }
  std::size_t patch_dim() const { return channels * patch * patch; }
  void validate() const;
};

// Parameters: "proj.weight" [patch_dim x dim], "proj.bias" [dim],
// "pos_embedding" [n_tokens x dim].
struct HeadParams {
  HeadConfig config;
  ParamSet params;
  bool frozen = true;
};

struct BodyConfig {
  std::size_t dim = 32;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  float eps = 1e-5f;

  void validate() const;
};

// Per layer l, names are prefixed "layers.<l>.": ln1.{gamma,beta},
// attn.{wq,bq,wk,bk,wv,bv,wo,bo}, ln2.{gamma,beta}, ffn.{w1,b1,w2,b2}.
// No position-dependent parameter and no class token.
struct BodyParams {
  BodyConfig config;
  ParamSet params;
};

HeadParams init_head(const HeadConfig& config, Rng& rng);
BodyParams init_body(const BodyConfig& config, Rng& rng);

// Non-overlapping patches of a [C x H x W] image as rows of a
// [n_tokens x patch_dim] matrix, raster order over the patch grid. Within a
// patch the layout is (channel, row, col).
Tensor extract_patches(const Tensor& image, const HeadConfig& config);

// Inverse of extract_patches.
Tensor assemble_patches(const Tensor& patches, const HeadConfig& config);

// tokens = patches * W + b (+ pos_embedding when with_pos).
template <typename T>
BasicVar<T> embed_patches(BasicGraph<T>& graph, const HeadConfig& config, const VarMap<T>& head, const Tensor& image,
                          bool with_pos = true);

// Plain-value convenience wrapper.
Tensor embed_patches(const Tensor& image, const HeadParams& head, bool with_pos = true);

// tokens: [samples*n_tokens x dim]; attention mixes rows only within each
// consecutive block of n_tokens rows.
template <typename T>
BasicVar<T> body_forward(BasicGraph<T>& graph, const BodyConfig& config, const VarMap<T>& body, BasicVar<T> tokens,
                         std::size_t n_tokens);

Tensor body_forward(const Tensor& tokens, const BodyParams& body);

}  // namespace pfesta::model
