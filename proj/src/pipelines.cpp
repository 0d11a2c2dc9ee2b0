#include "emoprobe/pipelines.hpp"

#include "emoprobe/error.hpp"

namespace emoprobe {

StackModel::StackModel(AggregatorParams aggregator, ProbeParams probe)
    : aggregator_(std::move(aggregator)), probe_(std::move(probe)) {
  if (aggregator_.mode == AggregationMode::weighting_gate) {
    throw ConfigError("stack models use layer_mean or weighted_sum aggregation");
  }
}

std::vector<ParamRef> StackModel::trainable() {
  std::vector<ParamRef> out;
  if (aggregator_.mode == AggregationMode::weighted_sum) out.push_back({"aggregator.ws_logits", &aggregator_.ws_logits});
  out.push_back({"probe.W", &probe_.W});
  out.push_back({"probe.b", &probe_.b});
  return out;
}

Eigen::VectorXd StackModel::logits(const Eigen::MatrixXd& input) const {
  return probe_.W * aggregate_layers(input, aggregator_) + probe_.b.col(0);
}

double StackModel::accumulate(const Eigen::MatrixXd& input, int label, double weight,
                              std::vector<Eigen::MatrixXd>& grads) const {
  const Eigen::VectorXd x = aggregate_layers(input, aggregator_);
  Eigen::VectorXd d;
  const double loss = cross_entropy(probe_.W * x + probe_.b.col(0), label, &d);
  std::size_t k = 0;
  if (aggregator_.mode == AggregationMode::weighted_sum) {
    const auto ag = aggregate_backward(input, aggregator_, probe_.W.transpose() * d);
    grads[k++] += weight * ag.ws_logits;
  }
  grads[k++].noalias() += weight * d * x.transpose();
  grads[k].col(0) += weight * d;
  return loss;
}

PeftPipeline peft_assemble(std::shared_ptr<const FrozenEncoder> encoder, std::optional<AdapterParams> adapters,
                           AggregatorParams aggregator, ProbeParams probe) {
  if (!encoder) throw ConfigError("PEFT pipeline needs an encoder");
  const auto L = static_cast<Eigen::Index>(encoder->layers.size());
  const Eigen::Index D = encoder->config.model_dim;
  if (adapters && static_cast<Eigen::Index>(adapters->layers.size()) != L) {
    throw DimensionMismatch("adapters cover " + std::to_string(adapters->layers.size()) + " layers, encoder has " +
                            std::to_string(L));
  }
  if (adapters) {
    for (const auto& la : adapters->layers) {
      if (la.query.a.cols() != D || la.value.a.cols() != D || la.down.cols() != D || la.up.rows() != D) {
        throw DimensionMismatch("adapter tensors do not match model_dim " + std::to_string(D));
      }
    }
  }
  if (aggregator.num_layers() != L) {
    throw DimensionMismatch("aggregator has " + std::to_string(aggregator.num_layers()) + " layers, encoder has " +
                            std::to_string(L));
  }
  if (probe.dim() != D) {
    throw DimensionMismatch("probe expects D=" + std::to_string(probe.dim()) + ", encoder produces " +
                            std::to_string(D));
  }
  PeftPipeline p;
  p.encoder_ = std::move(encoder);
  p.adapters_ = std::move(adapters);
  p.aggregator_ = std::move(aggregator);
  p.probe_ = std::move(probe);
  return p;
}

template <class Self, class Fn>
void PeftPipeline::visit_params(Self& self, Fn&& fn) {
  if (self.adapters_) {
    for (std::size_t l = 0; l < self.adapters_->layers.size(); ++l) {
      auto& la = self.adapters_->layers[l];
      const std::string pre = "adapters." + std::to_string(l + 1) + ".";
      fn(pre + "lora_query.A", la.query.a);
      fn(pre + "lora_query.B", la.query.b);
      fn(pre + "lora_value.A", la.value.a);
      fn(pre + "lora_value.B", la.value.b);
      fn(pre + "bottleneck.down", la.down);
      fn(pre + "bottleneck.up", la.up);
    }
  }
  if (self.aggregator_.mode != AggregationMode::layer_mean) fn("aggregator.ws_logits", self.aggregator_.ws_logits);
  if (self.aggregator_.mode == AggregationMode::weighting_gate) {
    fn("aggregator.gate_logits", self.aggregator_.gate_logits);
  }
  fn("probe.W", self.probe_.W);
  fn("probe.b", self.probe_.b);
}

std::vector<ParamRef> PeftPipeline::trainable() {
  std::vector<ParamRef> out;
  visit_params(*this, [&](const std::string& name, Eigen::MatrixXd& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<std::string> PeftPipeline::parameter_names() const {
  std::vector<std::string> names;
  visit_params(*this, [&](const std::string& name, const Eigen::MatrixXd&) { names.push_back(name); });
  return names;
}

std::size_t PeftPipeline::trainable_count() const {
  std::size_t n = 0;
  visit_params(*this, [&](const std::string&, const Eigen::MatrixXd& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

Eigen::MatrixXd PeftPipeline::pooled_layers(const Eigen::MatrixXd& input) const {
  const auto trace = encoder_forward(*encoder_, adapters_ ? &*adapters_ : nullptr, input, false);
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(trace.hidden.size()), encoder_->config.model_dim);
  for (std::size_t l = 0; l < trace.hidden.size(); ++l) {
    pooled.row(static_cast<Eigen::Index>(l)) = trace.hidden[l].colwise().mean();
  }
  return pooled;
}

Eigen::VectorXd PeftPipeline::logits(const Eigen::MatrixXd& input) const {
  return probe_.W * aggregate_layers(pooled_layers(input), aggregator_) + probe_.b.col(0);
}

double PeftPipeline::forward_backward(const Eigen::MatrixXd& input, const Eigen::VectorXd* dlogits_in, int label,
                                      double weight, std::vector<Eigen::MatrixXd>& grads) const {
  const AdapterParams* ad = adapters_ ? &*adapters_ : nullptr;
  const auto trace = encoder_forward(*encoder_, ad, input, ad != nullptr);
  const auto L = static_cast<Eigen::Index>(trace.hidden.size());
  const Eigen::Index T = input.rows();
  Eigen::MatrixXd pooled(L, encoder_->config.model_dim);
  for (Eigen::Index l = 0; l < L; ++l) pooled.row(l) = trace.hidden[static_cast<std::size_t>(l)].colwise().mean();
  const Eigen::VectorXd features = aggregate_layers(pooled, aggregator_);
  const Eigen::VectorXd z = probe_.W * features + probe_.b.col(0);

  Eigen::VectorXd d;
  double loss = 0.0;
  if (dlogits_in != nullptr) {
    d = *dlogits_in;
  } else {
    loss = cross_entropy(z, label, &d);
  }

  const auto ag = aggregate_backward(pooled, aggregator_, probe_.W.transpose() * d);
  std::size_t k = 0;
  if (ad != nullptr) {
    std::vector<Eigen::MatrixXd> d_hidden;
    d_hidden.reserve(static_cast<std::size_t>(L));
    for (Eigen::Index l = 0; l < L; ++l) {
      // Mean pooling spreads each layer's gradient evenly over its frames.
      d_hidden.push_back(Eigen::MatrixXd::Ones(T, 1) * (ag.pooled.row(l) / static_cast<double>(T)));
    }
    const auto ga = encoder_backward(*encoder_, *ad, trace, d_hidden);
    for (const auto& la : ga.layers) {
      grads[k++] += weight * la.query.a;
      grads[k++] += weight * la.query.b;
      grads[k++] += weight * la.value.a;
      grads[k++] += weight * la.value.b;
      grads[k++] += weight * la.down;
      grads[k++] += weight * la.up;
    }
  }
  if (aggregator_.mode != AggregationMode::layer_mean) grads[k++] += weight * ag.ws_logits;
  if (aggregator_.mode == AggregationMode::weighting_gate) grads[k++] += weight * ag.gate_logits;
  grads[k++].noalias() += weight * d * features.transpose();
  grads[k].col(0) += weight * d;
  return loss;
}

double PeftPipeline::accumulate(const Eigen::MatrixXd& input, int label, double weight,
                                std::vector<Eigen::MatrixXd>& grads) const {
  return forward_backward(input, nullptr, label, weight, grads);
}

std::vector<Eigen::MatrixXd> PeftPipeline::backward(const Eigen::MatrixXd& input, const Eigen::VectorXd& dlogits) const {
  std::vector<Eigen::MatrixXd> grads;
  visit_params(*this, [&](const std::string&, const Eigen::MatrixXd& t) {
    grads.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  });
  forward_backward(input, &dlogits, 0, 1.0, grads);
  return grads;
}

std::size_t peft_parameter_count(int num_layers, int model_dim, int rank, int bottleneck_dim, int classes) {
  const auto L = static_cast<std::size_t>(num_layers);
  const auto D = static_cast<std::size_t>(model_dim);
  const auto r = static_cast<std::size_t>(rank);
  const auto db = static_cast<std::size_t>(bottleneck_dim);
  const auto C = static_cast<std::size_t>(classes);
  return 2 * L * (r * D + D * r) + L * (db * D + D * db) + 2 * L + C * (D + 1);
}

}  // namespace emoprobe
