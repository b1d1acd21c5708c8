#include "pfesta/model/vit.hpp"

#include <cmath>

namespace pfesta::model {

void HeadConfig::validate() const {
  if (channels == 0 || image_h == 0 || image_w == 0 || patch == 0 || dim == 0) {
    throw ConfigError("head dimensions must be positive");
  }
  if (image_h % patch != 0 || image_w % patch != 0) {
    throw ConfigError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
}

void BodyConfig::validate() const {
  if (dim == 0 || heads == 0 || ffn_dim == 0) throw ConfigError("body dimensions must be positive");
  if (dim % heads != 0) {
    throw ConfigError("body dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (eps < 0.0f) throw ConfigError("layer norm eps must be >= 0");
}

namespace {
Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return uniform_tensor(std::move(shape), -bound, bound, rng);
}
}  // namespace

HeadParams init_head(const HeadConfig& config, Rng& rng) {
  config.validate();
  HeadParams head{config, {}, true};
  const auto fan_in = config.patch_dim();
  head.params.emplace("proj.weight", fan_in_uniform({fan_in, config.dim}, fan_in, rng));
  head.params.emplace("proj.bias", fan_in_uniform({config.dim}, fan_in, rng));
  head.params.emplace("pos_embedding", fan_in_uniform({config.n_tokens(), config.dim}, fan_in, rng));
  return head;
}

BodyParams init_body(const BodyConfig& config, Rng& rng) {
  config.validate();
  BodyParams body{config, {}};
  const std::size_t d = config.dim, f = config.ffn_dim;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    body.params.emplace(p + "ln1.gamma", Tensor({d}, 1.0f));
    body.params.emplace(p + "ln1.beta", Tensor({d}));
    for (const char* w : {"q", "k", "v", "o"}) {
      body.params.emplace(p + "attn.w" + w, fan_in_uniform({d, d}, d, rng));
      body.params.emplace(p + "attn.b" + w, Tensor({d}));
    }
    body.params.emplace(p + "ln2.gamma", Tensor({d}, 1.0f));
    body.params.emplace(p + "ln2.beta", Tensor({d}));
    body.params.emplace(p + "ffn.w1", fan_in_uniform({d, f}, d, rng));
    body.params.emplace(p + "ffn.b1", Tensor({f}));
    body.params.emplace(p + "ffn.w2", fan_in_uniform({f, d}, f, rng));
    body.params.emplace(p + "ffn.b2", Tensor({d}));
  }
  return body;
}

Tensor extract_patches(const Tensor& image, const HeadConfig& config) {
  config.validate();
  const Shape expected{config.channels, config.image_h, config.image_w};
  if (image.shape() != expected) {
    throw DimensionError("image shape " + shape_string(image.shape()) + " does not match head input " +
                         shape_string(expected));
  }
  const std::size_t p = config.patch, gw = config.grid_w();
  Tensor out({config.n_tokens(), config.patch_dim()});
  for (std::size_t t = 0; t < config.n_tokens(); ++t) {
    const std::size_t gy = t / gw, gx = t % gw;
    std::size_t col = 0;
    for (std::size_t c = 0; c < config.channels; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          out.at(t, col++) = image[(c * config.image_h + gy * p + y) * config.image_w + gx * p + x];
  }
  return out;
}

Tensor assemble_patches(const Tensor& patches, const HeadConfig& config) {
  config.validate();
  const Shape expected{config.n_tokens(), config.patch_dim()};
  if (patches.shape() != expected) {
    throw DimensionError("patch matrix " + shape_string(patches.shape()) + " does not match " + shape_string(expected));
  }
  const std::size_t p = config.patch, gw = config.grid_w();
  Tensor image({config.channels, config.image_h, config.image_w});
  for (std::size_t t = 0; t < config.n_tokens(); ++t) {
    const std::size_t gy = t / gw, gx = t % gw;
    std::size_t col = 0;
    for (std::size_t c = 0; c < config.channels; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          image[(c * config.image_h + gy * p + y) * config.image_w + gx * p + x] = patches.at(t, col++);
  }
  return image;
}

template <typename T>
BasicVar<T> embed_patches(BasicGraph<T>& graph, const HeadConfig& config, const VarMap<T>& head, const Tensor& image,
                          bool with_pos) {
  auto patches = graph.constant(extract_patches(image, config).template cast<T>());
  auto tokens = ops::add(ops::matmul(patches, param(head, "proj.weight")), param(head, "proj.bias"));
  if (with_pos) tokens = ops::add(tokens, param(head, "pos_embedding"));
  return tokens;
}

Tensor embed_patches(const Tensor& image, const HeadParams& head, bool with_pos) {
  Graph g;
  auto vars = model::bind(g, head.params, "head.", false);
  return embed_patches<float>(g, head.config, vars, image, with_pos).value();
}

namespace {

template <typename T>
BasicVar<T> linear(BasicVar<T> x, const VarMap<T>& p, const std::string& w, const std::string& b) {
  return ops::add(ops::matmul(x, param(p, w)), param(p, b));
}

template <typename T>
BasicVar<T> self_attention(const BodyConfig& config, const VarMap<T>& p, const std::string& prefix, BasicVar<T> x,
                           std::size_t n_tokens) {
  const auto q = linear(x, p, prefix + "attn.wq", prefix + "attn.bq");
  const auto k = linear(x, p, prefix + "attn.wk", prefix + "attn.bk");
  const auto v = linear(x, p, prefix + "attn.wv", prefix + "attn.bv");
  const std::size_t samples = x.shape()[0] / n_tokens;
  const std::size_t head_dim = config.dim / config.heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(head_dim));
  std::vector<BasicVar<T>> per_sample;
  per_sample.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto qs = ops::slice_rows(q, s * n_tokens, (s + 1) * n_tokens);
    const auto ks = ops::slice_rows(k, s * n_tokens, (s + 1) * n_tokens);
    const auto vs = ops::slice_rows(v, s * n_tokens, (s + 1) * n_tokens);
    std::vector<BasicVar<T>> heads;
    heads.reserve(config.heads);
    for (std::size_t h = 0; h < config.heads; ++h) {
      const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
      const auto qh = ops::slice_cols(qs, c0, c1);
      const auto kh = ops::slice_cols(ks, c0, c1);
      const auto vh = ops::slice_cols(vs, c0, c1);
      const auto scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
      heads.push_back(ops::matmul(ops::softmax(scores, 1), vh));
    }
    per_sample.push_back(heads.size() == 1 ? heads.front() : ops::concat_cols(heads));
  }
  const auto mixed = per_sample.size() == 1 ? per_sample.front() : ops::concat_rows(per_sample);
  return linear(mixed, p, prefix + "attn.wo", prefix + "attn.bo");
}

}  // namespace

template <typename T>
BasicVar<T> body_forward(BasicGraph<T>& graph, const BodyConfig& config, const VarMap<T>& body, BasicVar<T> tokens,
                         std::size_t n_tokens) {
  (void)graph;
  config.validate();
  const auto& s = tokens.shape();
  if (s.size() != 2 || s[1] != config.dim || n_tokens == 0 || s[0] % n_tokens != 0) {
    throw DimensionError("body input " + shape_string(s) + " incompatible with dim " + std::to_string(config.dim) +
                         " and " + std::to_string(n_tokens) + " tokens per sample");
  }
  const T eps = static_cast<T>(config.eps);
  auto x = tokens;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    const auto h1 = ops::layer_norm(x, param(body, p + "ln1.gamma"), param(body, p + "ln1.beta"), eps);
    x = ops::add(x, self_attention(config, body, p, h1, n_tokens));
    const auto h2 = ops::layer_norm(x, param(body, p + "ln2.gamma"), param(body, p + "ln2.beta"), eps);
    const auto f = linear(ops::gelu(linear(h2, body, p + "ffn.w1", p + "ffn.b1")), body, p + "ffn.w2", p + "ffn.b2");
    x = ops::add(x, f);
  }
  return x;
}

Tensor body_forward(const Tensor& tokens, const BodyParams& body) {
  Graph g;
  auto vars = model::bind(g, body.params, "body.", false);
  return body_forward<float>(g, body.config, vars, g.constant(tokens), tokens.shape().at(0)).value();
}

template BasicVar<float> embed_patches<float>(BasicGraph<float>&, const HeadConfig&, const VarMap<float>&,
                                              const Tensor&, bool);
template BasicVar<double> embed_patches<double>(BasicGraph<double>&, const HeadConfig&, const VarMap<double>&,
                                                const Tensor&, bool);
template BasicVar<float> body_forward<float>(BasicGraph<float>&, const BodyConfig&, const VarMap<float>&,
                                             BasicVar<float>, std::size_t);
template BasicVar<double> body_forward<double>(BasicGraph<double>&, const BodyConfig&, const VarMap<double>&,
                                               BasicVar<double>, std::size_t);

}  // namespace pfesta::model
