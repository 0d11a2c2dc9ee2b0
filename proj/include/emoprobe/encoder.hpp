#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emoprobe {

struct MiniEncoderConfig {
  int num_layers = 2;
  int model_dim = 16;
  int num_heads = 2;
  int ffn_dim = 32;
  std::uint64_t seed = 0;
  bool positional = false;  // add sinusoidal positions to the input

  void validate() const;
};

struct EncoderLayerWeights {
  Eigen::VectorXd ln1_gamma, ln1_beta;
  Eigen::MatrixXd wq, wk, wv, wo;  // D x D, rows = outputs
  Eigen::VectorXd bq, bk, bv, bo;
  Eigen::VectorXd ln2_gamma, ln2_beta;
  Eigen::MatrixXd w1;  // F x D
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // D x F
  Eigen::VectorXd b2;
};

// Pre-norm transformer encoder whose weights never change after init.
// Shared read-only between pipelines and threads.
struct FrozenEncoder {
  MiniEncoderConfig config;
  std::vector<EncoderLayerWeights> layers;

  // Linear weights ~ N(0, 0.02^2), biases 0, layer-norm gain 1 and shift 0.
  static FrozenEncoder init(const MiniEncoderConfig& config);

  // FNV-1a over every weight's bit pattern.
  std::uint64_t checksum() const;
};

struct LoraParams {
  Eigen::MatrixXd a;  // r x D
  Eigen::MatrixXd b;  // D x r
};

struct LayerAdapters {
  LoraParams query;
  LoraParams value;
  Eigen::MatrixXd down;  // d_b x D
  Eigen::MatrixXd up;    // D x d_b
};

struct AdapterConfig {
  int lora_rank = 8;
  double lora_alpha = 16.0;
  int bottleneck_dim = 32;
};

struct AdapterParams {
  AdapterConfig config;
  std::vector<LayerAdapters> layers;

  // LoRA A and W_down ~ N(0, 1/D); LoRA B and W_up start at zero, so the
  // adapted encoder reproduces the frozen one exactly at init.
  static AdapterParams init(const MiniEncoderConfig& encoder, const AdapterConfig& config, std::uint64_t seed);

  double lora_scaling() const { return config.lora_alpha / config.lora_rank; }
};

struct EncoderLayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd xhat1, a;
  Eigen::VectorXd inv_std1;
  Eigen::MatrixXd q, k, v, tq, tv;
  std::vector<Eigen::MatrixXd> probs;  // per head, T x T
  Eigen::MatrixXd ctx, h1;
  Eigen::MatrixXd xhat2, c;
  Eigen::VectorXd inv_std2;
  Eigen::MatrixXd u, g, f, z;
};

struct EncoderTrace {
  std::vector<Eigen::MatrixXd> hidden;  // per layer, T x D block outputs
  std::vector<EncoderLayerCache> cache;  // filled when requested
};

// input is T x model_dim. `adapters` may be null for the frozen-only path.
EncoderTrace encoder_forward(const FrozenEncoder& encoder, const AdapterParams* adapters,
                             const Eigen::MatrixXd& input, bool keep_cache = false);

// Gradients of a scalar loss w.r.t. the adapter tensors, given the loss
// gradient w.r.t. every layer's hidden output. Backbone gradients are only
// propagated through, never materialised.
AdapterParams encoder_backward(const FrozenEncoder& encoder, const AdapterParams& adapters,
                               const EncoderTrace& trace, const std::vector<Eigen::MatrixXd>& d_hidden);

Eigen::MatrixXd sinusoidal_positions(Eigen::Index frames, Eigen::Index dim);

}  // namespace emoprobe
