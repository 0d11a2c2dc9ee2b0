#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emoprobe/encoder.hpp"
#include "emoprobe/pooling.hpp"
#include "emoprobe/probe.hpp"

namespace emoprobe {

// Probe over an aggregated stack of time-pooled layers (input L x D).
// layer_mean trains the probe only; weighted_sum adds the WS logits.
class StackModel final : public Model {
 public:
  StackModel(AggregatorParams aggregator, ProbeParams probe);

  std::vector<ParamRef> trainable() override;
  Eigen::VectorXd logits(const Eigen::MatrixXd& input) const override;
  double accumulate(const Eigen::MatrixXd& input, int label, double weight,
                    std::vector<Eigen::MatrixXd>& grads) const override;

  const AggregatorParams& aggregator() const { return aggregator_; }
  const ProbeParams& probe() const { return probe_; }

 private:
  AggregatorParams aggregator_;
  ProbeParams probe_;
};

// Frozen mini encoder + LoRA/bottleneck adapters + WS/WG aggregation + probe,
// trained as one unit over T x D input sequences. Without adapters the
// pipeline is the frozen baseline used for identity-at-init comparisons.
class PeftPipeline final : public Model {
 public:
  std::vector<ParamRef> trainable() override;
  Eigen::VectorXd logits(const Eigen::MatrixXd& input) const override;
  double accumulate(const Eigen::MatrixXd& input, int label, double weight,
                    std::vector<Eigen::MatrixXd>& grads) const override;

  // Gradients of the loss for `dlogits` at `input`, ordered as trainable().
  std::vector<Eigen::MatrixXd> backward(const Eigen::MatrixXd& input, const Eigen::VectorXd& dlogits) const;

  std::vector<std::string> parameter_names() const;
  std::size_t trainable_count() const;

  const FrozenEncoder& encoder() const { return *encoder_; }
  std::uint64_t backbone_checksum() const { return encoder_->checksum(); }
  const std::optional<AdapterParams>& adapters() const { return adapters_; }
  std::optional<AdapterParams>& adapters() { return adapters_; }
  const AggregatorParams& aggregator() const { return aggregator_; }
  AggregatorParams& aggregator() { return aggregator_; }
  const ProbeParams& probe() const { return probe_; }
  ProbeParams& probe() { return probe_; }

  // L x D time-pooled hidden states.
  Eigen::MatrixXd pooled_layers(const Eigen::MatrixXd& input) const;

 private:
  friend PeftPipeline peft_assemble(std::shared_ptr<const FrozenEncoder>, std::optional<AdapterParams>,
                                    AggregatorParams, ProbeParams);
  PeftPipeline() = default;

  template <class Self, class Fn>
  static void visit_params(Self& self, Fn&& fn);

  double forward_backward(const Eigen::MatrixXd& input, const Eigen::VectorXd* dlogits_in, int label, double weight,
                          std::vector<Eigen::MatrixXd>& grads) const;

  std::shared_ptr<const FrozenEncoder> encoder_;
  std::optional<AdapterParams> adapters_;
  AggregatorParams aggregator_;
  ProbeParams probe_;
};

// Validates that encoder depth, adapter depth, aggregator L and probe D agree.
PeftPipeline peft_assemble(std::shared_ptr<const FrozenEncoder> encoder, std::optional<AdapterParams> adapters,
                           AggregatorParams aggregator, ProbeParams probe);

// Closed-form trainable count: 2 projections x L x 2rD (LoRA) + L x 2 d_b D (bottleneck)
// + 2L (WS + WG) + C(D + 1) (probe).
std::size_t peft_parameter_count(int num_layers, int model_dim, int rank, int bottleneck_dim, int classes);

}  // namespace emoprobe
