#include "pfesta/model/tail.hpp"

#include <bit>
#include <cmath>

namespace pfesta::model {

std::string_view to_string(TailKind kind) {
  switch (kind) {
    case TailKind::LinearClassifier: return "linear_classifier";
    case TailKind::SeverityMapper: return "severity_mapper";
    case TailKind::SegDecoder: return "seg_decoder";
  }
  return "unknown";
}

Shape TailConfig::output_shape() const {
  switch (kind) {
    case TailKind::LinearClassifier: return {n_classes};
    case TailKind::SeverityMapper: return {n_severity};
    case TailKind::SegDecoder: return {grid_h * patch, grid_w * patch};
  }
  throw ConfigError("unknown tail kind");
}

void TailConfig::validate() const {
  if (dim == 0) throw ConfigError("tail dim must be positive");
  switch (kind) {
    case TailKind::LinearClassifier:
      if (n_classes == 0) throw ConfigError("classifier needs at least one class");
      break;
    case TailKind::SeverityMapper:
      if (n_severity == 0) throw ConfigError("severity mapper needs at least one output");
      break;
    case TailKind::SegDecoder:
      if (grid_h == 0 || grid_w == 0 || seg_channels == 0) throw ConfigError("decoder dimensions must be positive");
      if (!std::has_single_bit(patch)) throw ConfigError("decoder upsampling factor must be a power of two");
      break;
  }
}

namespace {

Tensor fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return uniform_tensor(std::move(shape), -bound, bound, rng);
}

std::size_t decoder_stages(const TailConfig& c) { return static_cast<std::size_t>(std::countr_zero(c.patch)); }

}  // namespace

TailParams init_tail(const TailConfig& config, Rng& rng) {
  config.validate();
  TailParams tail{config, {}};
  const std::size_t d = config.dim;
  switch (config.kind) {
    case TailKind::LinearClassifier:
      tail.params.emplace("fc.weight", fan_in_uniform({d, config.n_classes}, d, rng));
      tail.params.emplace("fc.bias", Tensor({config.n_classes}));
      break;
    case TailKind::SeverityMapper:
      tail.params.emplace("up1.weight", fan_in_uniform({d, 2 * d}, d, rng));
      tail.params.emplace("up1.bias", Tensor({2 * d}));
      tail.params.emplace("up2.weight", fan_in_uniform({2 * d, config.n_severity}, 2 * d, rng));
      tail.params.emplace("up2.bias", Tensor({config.n_severity}));
      break;
    case TailKind::SegDecoder: {
      const std::size_t c = config.seg_channels;
      tail.params.emplace("token.weight", fan_in_uniform({d, c}, d, rng));
      tail.params.emplace("token.bias", Tensor({c}));
      const std::size_t stages = std::max<std::size_t>(decoder_stages(config), 1);
      for (std::size_t s = 0; s < stages; ++s) {
        const std::size_t out = s + 1 == stages ? 1 : c;
        tail.params.emplace("stage" + std::to_string(s) + ".weight", fan_in_uniform({out, c, 3, 3}, c * 9, rng));
        tail.params.emplace("stage" + std::to_string(s) + ".bias", Tensor({out}));
      }
      break;
    }
  }
  return tail;
}

template <typename T>
BasicVar<T> tail_forward(BasicGraph<T>& graph, const TailConfig& config, const VarMap<T>& tail,
                         BasicVar<T> features) {
  (void)graph;
  const auto& s = features.shape();
  if (s.size() != 2 || s[1] != config.dim) {
    throw DimensionError("tail input " + shape_string(s) + " incompatible with dim " + std::to_string(config.dim));
  }
  switch (config.kind) {
    case TailKind::LinearClassifier: {
      auto pooled = ops::reshape(ops::mean_rows(features), Shape{1, config.dim});
      auto logits = ops::add(ops::matmul(pooled, param(tail, "fc.weight")), param(tail, "fc.bias"));
      return ops::reshape(logits, config.output_shape());
    }
    case TailKind::SeverityMapper: {
      auto pooled = ops::reshape(ops::mean_rows(features), Shape{1, config.dim});
      auto h = ops::gelu(ops::add(ops::matmul(pooled, param(tail, "up1.weight")), param(tail, "up1.bias")));
      auto logits = ops::add(ops::matmul(h, param(tail, "up2.weight")), param(tail, "up2.bias"));
      return ops::reshape(logits, config.output_shape());
    }
    case TailKind::SegDecoder: {
      if (s[0] != config.grid_h * config.grid_w) {
        throw DimensionError("decoder expects " + std::to_string(config.grid_h * config.grid_w) + " tokens, got " +
                             shape_string(s));
      }
      const std::size_t c = config.seg_channels;
      auto t = ops::relu(ops::add(ops::matmul(features, param(tail, "token.weight")), param(tail, "token.bias")));
      auto grid = ops::reshape(ops::transpose(t), Shape{c, config.grid_h, config.grid_w});
      const std::size_t stages = decoder_stages(config);
      const std::size_t convs = std::max<std::size_t>(stages, 1);
      for (std::size_t st = 0; st < convs; ++st) {
        if (st < stages) grid = ops::upsample_nearest(grid, 2);
        const std::string p = "stage" + std::to_string(st);
        grid = ops::conv2d(grid, param(tail, p + ".weight"), param(tail, p + ".bias"), 1, 1);
        if (st + 1 < convs) grid = ops::relu(grid);
      }
      return ops::reshape(grid, config.output_shape());
    }
  }
  throw ConfigError("unknown tail kind");
}

Tensor tail_forward(const Tensor& features, const TailParams& tail) {
  Graph g;
  auto vars = model::bind(g, tail.params, "tail.", false);
  return tail_forward<float>(g, tail.config, vars, g.constant(features)).value();
}

void CnnHeadConfig::validate() const {
  if (channels == 0 || width1 == 0 || width2 == 0 || dim == 0) throw ConfigError("cnn head widths must be positive");
  if (image_h == 0 || image_w == 0 || image_h % 8 != 0 || image_w % 8 != 0) {
    throw ConfigError("cnn head needs image sides divisible by 8");
  }
}

CnnHeadParams init_cnn_head(const CnnHeadConfig& config, Rng& rng) {
  config.validate();
  CnnHeadParams head{config, {}};
  const std::size_t in[3] = {config.channels, config.width1, config.width2};
  const std::size_t out[3] = {config.width1, config.width2, config.dim};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = "conv" + std::to_string(i + 1);
    head.params.emplace(p + ".weight", fan_in_uniform({out[i], in[i], 3, 3}, in[i] * 9, rng));
    head.params.emplace(p + ".bias", Tensor({out[i]}));
  }
  return head;
}

template <typename T>
BasicVar<T> cnn_head_forward(BasicGraph<T>& graph, const CnnHeadConfig& config, const VarMap<T>& head,
                             BasicVar<T> image) {
  (void)graph;
  config.validate();
  const Shape expected{config.channels, config.image_h, config.image_w};
  if (image.shape() != expected) {
    throw DimensionError("cnn head input " + shape_string(image.shape()) + " vs expected " + shape_string(expected));
  }
  auto x = ops::relu(ops::conv2d(image, param(head, "conv1.weight"), param(head, "conv1.bias"), 2, 1));
  x = ops::relu(ops::conv2d(x, param(head, "conv2.weight"), param(head, "conv2.bias"), 2, 1));
  x = ops::conv2d(x, param(head, "conv3.weight"), param(head, "conv3.bias"), 2, 1);
  return ops::transpose(ops::reshape(x, Shape{config.dim, config.n_tokens()}));
}

Tensor cnn_head_forward(const Tensor& image, const CnnHeadParams& head) {
  Graph g;
  auto vars = model::bind(g, head.params, "cnn.", false);
  return cnn_head_forward<float>(g, head.config, vars, g.constant(image)).value();
}

template BasicVar<float> tail_forward<float>(BasicGraph<float>&, const TailConfig&, const VarMap<float>&,
                                             BasicVar<float>);
template BasicVar<double> tail_forward<double>(BasicGraph<double>&, const TailConfig&, const VarMap<double>&,
                                               BasicVar<double>);
template BasicVar<float> cnn_head_forward<float>(BasicGraph<float>&, const CnnHeadConfig&, const VarMap<float>&,
                                                 BasicVar<float>);
template BasicVar<double> cnn_head_forward<double>(BasicGraph<double>&, const CnnHeadConfig&,
                                                   const VarMap<double>&, BasicVar<double>);

}  // namespace pfesta::model
