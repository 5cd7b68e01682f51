#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "segn/features.hpp"
#include "segn/nn/layers.hpp"

namespace segn {

enum class Pooling : std::uint8_t { Mean, Last };

struct SegnConfig {
  Variant variant = Variant::Geo;
  std::size_t gradient_dim = 28;
  std::size_t seasonal_dim = 96;
  std::size_t processor_hidden = 128;
  std::size_t processor_out = 64;
  std::size_t lstm_hidden = 128;
  std::size_t lstm_layers = 2;
  std::size_t attention_heads = 8;
  std::vector<std::size_t> head_hidden = {128, 64};
  double dropout = 0.2;
  bool attention_residual = true;
  Pooling pooling = Pooling::Mean;
  std::uint64_t seed = 0;

  /// 9 for Geo (environment + coordinates), 7 for Base.
  std::size_t env_input_dim() const { return variant == Variant::Geo ? 9 : 7; }
  std::size_t temporal_dim() const { return 3 * processor_out; }
  std::size_t attention_dim() const { return 2 * lstm_hidden; }

  /// Throws BadConfig.
  void validate() const;
};

void to_json(nlohmann::json& j, const SegnConfig& c);
void from_json(const nlohmann::json& j, SegnConfig& c);

/// Two-stage processor: linear, LayerNorm, ReLU, dropout, linear, LayerNorm, ReLU.
template <typename T>
struct Processor {
  nn::Linear<T> fc1, fc2;
  nn::LayerNorm<T> ln1, ln2;

  Processor() = default;
  Processor(const std::string& name, std::size_t din, std::size_t hidden, std::size_t dout);
  nn::Var<T> operator()(nn::Tape<T>& tape, nn::Var<T> x, double dropout, bool training, Rng& rng);
  void collect(nn::ParameterList<T>& out);
};

template <typename T>
class SegnModel {
 public:
  /// Builds and initializes from config.seed. Throws BadConfig.
  explicit SegnModel(SegnConfig config);
  SegnModel(const SegnModel&) = delete;
  SegnModel& operator=(const SegnModel&) = delete;

  const SegnConfig& config() const { return config_; }
  /// The layout this variant consumes natively.
  const FeatureLayout& layout() const { return layout_; }

  nn::ParameterList<T> parameters();
  std::size_t parameter_count();
  /// Counts keyed environmental, gradient, seasonal, bilstm, attention, head.
  std::map<std::string, std::size_t> block_parameter_counts();

  void initialize(std::uint64_t seed);

  /// x is [B*T, D] (row b*T + t) laid out per input_layout; the processors'
  /// blocks are sliced from it by name. Throws LayoutMismatch when a needed
  /// block is absent or D disagrees with the layout. Returns logits [B, 2].
  nn::Var<T> forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, const FeatureLayout& input_layout, bool training,
                     Rng& rng);

  /// Copies parameter values from another model with identical structure.
  template <typename U>
  void copy_parameters_from(SegnModel<U>& other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (dst.size() != src.size()) throw Error(ErrorKind::LayoutMismatch, "parameter lists differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!(dst[i]->value.shape() == src[i]->value.shape())) {
        throw Error(ErrorKind::LayoutMismatch, "parameter " + dst[i]->name + " differs in shape");
      }
      dst[i]->value = src[i]->value.template cast<T>();
    }
  }

 private:
  SegnConfig config_;
  FeatureLayout layout_;
  Processor<T> env_;
  Processor<T> grad_;
  nn::Linear<T> seasonal_fc_;
  nn::LayerNorm<T> seasonal_ln_;
  nn::BiLstm<T> lstm_;
  nn::MultiHeadAttention<T> attention_;
  std::vector<nn::Linear<T>> head_fc_;
  nn::LayerNorm<T> head_ln_;
  nn::Linear<T> head_out_;
};

/// Class-1 probability per row of a [B, 2] logit tensor.
template <typename T>
std::vector<double> positive_probabilities(const nn::Tensor<T>& logits);

}  // namespace segn
