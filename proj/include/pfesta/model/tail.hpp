#pragma once

#include <cstddef>
#include <string_view>

#include "pfesta/model/vit.hpp"

namespace pfesta::model {

enum class TailKind { LinearClassifier, SeverityMapper, SegDecoder };

std::string_view to_string(TailKind kind);

struct TailConfig {
  TailKind kind = TailKind::LinearClassifier;
  std::size_t dim = 32;
  std::size_t n_classes = 3;     // LinearClassifier
  std::size_t n_severity = 6;    // SeverityMapper
  std::size_t grid_h = 4;        // SegDecoder: token grid
  std::size_t grid_w = 4;
  std::size_t patch = 8;         // SegDecoder: upsampling factor per token (power of two)
  std::size_t seg_channels = 8;  // SegDecoder: width of the upsampling stages

  // Shape of the logits produced for one sample.
  Shape output_shape() const;
  void validate() const;
};

// LinearClassifier: "fc.weight" [dim x n_classes], "fc.bias".
// SeverityMapper:   "up1.weight" [dim x 2dim], "up1.bias", "up2.weight" [2dim x 6], "up2.bias".
// SegDecoder:       "token.weight" [dim x C], "token.bias", then per stage s
//                   "stage<s>.weight" [C' x C x 3 x 3], "stage<s>.bias".
struct TailParams {
  TailConfig config;
  ParamSet params;
};

TailParams init_tail(const TailConfig& config, Rng& rng);

// features: one sample, [n_tokens x dim], in original token order.
template <typename T>
BasicVar<T> tail_forward(BasicGraph<T>& graph, const TailConfig& config, const VarMap<T>& tail,
                         BasicVar<T> features);

Tensor tail_forward(const Tensor& features, const TailParams& tail);

// Three stride-2 3x3 convolutions turning a [C x H x W] image into a
// [(H/8)*(W/8) x dim] token grid (raster order). Stand-in for the CNN head of
// the FeSTA baseline.
struct CnnHeadConfig {
  std::size_t channels = 1;
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t width1 = 8;
  std::size_t width2 = 16;
  std::size_t dim = 32;

  std::size_t n_tokens() const { return (image_h / 8) * (image_w / 8); }
  void validate() const;
};

// "conv1.weight" [w1 x C x 3 x 3] ... "conv3.weight" [dim x w2 x 3 x 3] + biases.
struct CnnHeadParams {
  CnnHeadConfig config;
  ParamSet params;
};

CnnHeadParams init_cnn_head(const CnnHeadConfig& config, Rng& rng);

template <typename T>
BasicVar<T> cnn_head_forward(BasicGraph<T>& graph, const CnnHeadConfig& config, const VarMap<T>& head,
                             BasicVar<T> image);

Tensor cnn_head_forward(const Tensor& image, const CnnHeadParams& head);

}  // namespace pfesta::model
