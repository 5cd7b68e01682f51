#include "segn/model.hpp"

#include <cmath>

namespace segn {

using nlohmann::json;

void SegnConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::BadConfig, m); };
  if (gradient_dim != 28) bad("gradient_dim must be 28 (gx, gy, gmag, gt for 7 variables)");
  if (seasonal_dim != 96) bad("seasonal_dim must be 96 (80 statistics + 12 transitions + 4 season flags)");
  if (processor_hidden == 0 || processor_out == 0 || lstm_hidden == 0 || lstm_layers == 0) bad("zero-sized layer");
  if (attention_heads == 0 || attention_dim() % attention_heads != 0) {
    bad("attention dim " + std::to_string(attention_dim()) + " not divisible by " + std::to_string(attention_heads) +
        " heads");
  }
  if (head_hidden.empty()) bad("head_hidden needs at least one layer");
  for (auto h : head_hidden) {
    if (h == 0) bad("zero-sized head layer");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0,1)");
}

void to_json(json& j, const SegnConfig& c) {
  j = json{{"variant", variant_name(c.variant)},
           {"env_input_dim", c.env_input_dim()},
           {"gradient_dim", c.gradient_dim},
           {"seasonal_dim", c.seasonal_dim},
           {"processor_hidden", c.processor_hidden},
           {"processor_out", c.processor_out},
           {"lstm_hidden", c.lstm_hidden},
           {"lstm_layers", c.lstm_layers},
           {"attention_heads", c.attention_heads},
           {"head_hidden", c.head_hidden},
           {"dropout", c.dropout},
           {"attention_residual", c.attention_residual},
           {"pooling", c.pooling == Pooling::Mean ? "mean" : "last"},
           {"seed", c.seed}};
}

void from_json(const json& j, SegnConfig& c) {
  const SegnConfig d;
  try {
    c.variant = parse_variant(j.value("variant", std::string(variant_name(d.variant))));
    c.gradient_dim = j.value("gradient_dim", d.gradient_dim);
    c.seasonal_dim = j.value("seasonal_dim", d.seasonal_dim);
    c.processor_hidden = j.value("processor_hidden", d.processor_hidden);
    c.processor_out = j.value("processor_out", d.processor_out);
    c.lstm_hidden = j.value("lstm_hidden", d.lstm_hidden);
    c.lstm_layers = j.value("lstm_layers", d.lstm_layers);
    c.attention_heads = j.value("attention_heads", d.attention_heads);
    c.head_hidden = j.value("head_hidden", d.head_hidden);
    c.dropout = j.value("dropout", d.dropout);
    c.attention_residual = j.value("attention_residual", d.attention_residual);
    const std::string pooling = j.value("pooling", std::string("mean"));
    if (pooling == "mean") {
      c.pooling = Pooling::Mean;
    } else if (pooling == "last") {
      c.pooling = Pooling::Last;
    } else {
      throw Error(ErrorKind::BadConfig, "unknown pooling '" + pooling + "' (expected mean|last)");
    }
    c.seed = j.value("seed", d.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("bad model config: ") + e.what());
  }
  if (j.contains("env_input_dim") && j.at("env_input_dim").get<std::size_t>() != c.env_input_dim()) {
    throw Error(ErrorKind::BadConfig, "env_input_dim disagrees with variant");
  }
  c.validate();
}

template <typename T>
Processor<T>::Processor(const std::string& name, std::size_t din, std::size_t hidden, std::size_t dout)
    : fc1(name + ".fc1", din, hidden),
      fc2(name + ".fc2", hidden, dout),
      ln1(name + ".ln1", hidden),
      ln2(name + ".ln2", dout) {}

template <typename T>
nn::Var<T> Processor<T>::operator()(nn::Tape<T>& tape, nn::Var<T> x, double dropout, bool training, Rng& rng) {
  auto h = nn::dropout(nn::relu(ln1(tape, fc1(tape, x))), dropout, training, rng);
  return nn::relu(ln2(tape, fc2(tape, h)));
}

template <typename T>
void Processor<T>::collect(nn::ParameterList<T>& out) {
  fc1.collect(out);
  ln1.collect(out);
  fc2.collect(out);
  ln2.collect(out);
}

namespace {

SegnConfig checked(SegnConfig c) {
  c.validate();
  return c;
}

}  // namespace

template <typename T>
SegnModel<T>::SegnModel(SegnConfig config)
    : config_(checked(std::move(config))),
      layout_(config_.variant),
      env_("env", config_.env_input_dim(), config_.processor_hidden, config_.processor_out),
      grad_("gradient", config_.gradient_dim, config_.processor_hidden, config_.processor_out),
      seasonal_fc_("seasonal.fc", config_.seasonal_dim, config_.processor_out),
      seasonal_ln_("seasonal.ln", config_.processor_out),
      lstm_("lstm", config_.temporal_dim(), config_.lstm_hidden, config_.lstm_layers, config_.dropout),
      attention_("attention", config_.attention_dim(), config_.attention_heads, config_.attention_residual),
      head_ln_("head.ln", config_.head_hidden.back()),
      head_out_("head.out", config_.head_hidden.back(), 2) {
  std::size_t in = config_.attention_dim();
  for (std::size_t k = 0; k < config_.head_hidden.size(); ++k) {
    head_fc_.emplace_back("head.fc" + std::to_string(k + 1), in, config_.head_hidden[k]);
    in = config_.head_hidden[k];
  }
  initialize(config_.seed);
}

template <typename T>
nn::ParameterList<T> SegnModel<T>::parameters() {
  nn::ParameterList<T> out;
  env_.collect(out);
  grad_.collect(out);
  seasonal_fc_.collect(out);
  seasonal_ln_.collect(out);
  lstm_.collect(out);
  attention_.collect(out);
  for (auto& fc : head_fc_) fc.collect(out);
  head_ln_.collect(out);
  head_out_.collect(out);
  return out;
}

template <typename T>
std::size_t SegnModel<T>::parameter_count() {
  return nn::count_parameters(parameters());
}

template <typename T>
std::map<std::string, std::size_t> SegnModel<T>::block_parameter_counts() {
  std::map<std::string, std::size_t> counts;
  auto count = [](auto&& collect) {
    nn::ParameterList<T> ps;
    collect(ps);
    return nn::count_parameters(ps);
  };
  counts["environmental"] = count([&](auto& ps) { env_.collect(ps); });
  counts["gradient"] = count([&](auto& ps) { grad_.collect(ps); });
  counts["seasonal"] = count([&](auto& ps) {
    seasonal_fc_.collect(ps);
    seasonal_ln_.collect(ps);
  });
  counts["bilstm"] = count([&](auto& ps) { lstm_.collect(ps); });
  counts["attention"] = count([&](auto& ps) { attention_.collect(ps); });
  counts["head"] = count([&](auto& ps) {
    for (auto& fc : head_fc_) fc.collect(ps);
    head_ln_.collect(ps);
    head_out_.collect(ps);
  });
  return counts;
}

template <typename T>
void SegnModel<T>::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x696e6974));
  nn::init_parameters(parameters(), rng);
}

template <typename T>
nn::Var<T> SegnModel<T>::forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, const FeatureLayout& input_layout,
                                 bool training, Rng& rng) {
  if (x.cols() != input_layout.total()) {
    throw Error(ErrorKind::LayoutMismatch, "input has " + std::to_string(x.cols()) + " features, layout expects " +
                                               std::to_string(input_layout.total()));
  }
  const std::size_t steps = kSequenceLength;
  if (x.rows() == 0 || x.rows() % steps != 0) {
    throw Error(ErrorKind::ShapeMismatch, "input rows " + std::to_string(x.rows()) + " not a multiple of 8");
  }
  if (config_.variant == Variant::Geo && !input_layout.has_block("geographic")) {
    throw Error(ErrorKind::LayoutMismatch, "geo model needs the geographic block, input layout is " +
                                               std::string(variant_name(input_layout.variant())));
  }
  nn::Var<T> in = tape.constant(x);
  auto block = [&](std::string_view name) {
    const auto& b = input_layout.block(name);
    return nn::slice_cols(in, b.offset, b.size);
  };
  const auto& envb = input_layout.block("environmental");
  const std::size_t env_width = envb.size + (config_.variant == Variant::Geo ? input_layout.block("geographic").size : 0);
  if (env_width != config_.env_input_dim() || input_layout.block("gradients").size != config_.gradient_dim) {
    throw Error(ErrorKind::LayoutMismatch, "input layout block sizes do not match the model");
  }
  nn::Var<T> env_in = config_.variant == Variant::Geo ? nn::concat_cols<T>({block("environmental"), block("geographic")})
                                                      : block("environmental");
  nn::Var<T> seas_in = nn::concat_cols<T>({block("seasonal_stats"), block("seasonal_transitions"), block("season_onehot")});
  if (seas_in.value().cols() != config_.seasonal_dim) {
    throw Error(ErrorKind::LayoutMismatch, "seasonal blocks total " + std::to_string(seas_in.value().cols()) +
                                               ", model expects " + std::to_string(config_.seasonal_dim));
  }

  const double p = config_.dropout;
  nn::Var<T> e = env_(tape, env_in, p, training, rng);
  nn::Var<T> g = grad_(tape, block("gradients"), p, training, rng);
  nn::Var<T> s = nn::relu(seasonal_ln_(tape, seasonal_fc_(tape, seas_in)));
  nn::Var<T> seq = nn::concat_cols<T>({e, g, s});

  nn::Var<T> h = lstm_(tape, seq, steps, training, rng);
  h = attention_(tape, h, steps);
  nn::Var<T> pooled = config_.pooling == Pooling::Mean ? nn::mean_time(h, steps) : nn::time_step(h, steps - 1, steps);

  nn::Var<T> z = pooled;
  for (std::size_t k = 0; k < head_fc_.size(); ++k) {
    z = head_fc_[k](tape, z);
    if (k + 1 == head_fc_.size()) z = head_ln_(tape, z);
    z = nn::relu(z);
  }
  return head_out_(tape, z);
}

template <typename T>
std::vector<double> positive_probabilities(const nn::Tensor<T>& logits) {
  std::vector<double> p(logits.rows());
  for (std::size_t r = 0; r < p.size(); ++r) {
    const double d = static_cast<double>(logits.at(r, 0)) - static_cast<double>(logits.at(r, 1));
    p[r] = 1.0 / (1.0 + std::exp(d));
  }
  return p;
}

template struct Processor<float>;
template struct Processor<double>;
template class SegnModel<float>;
template class SegnModel<double>;
template std::vector<double> positive_probabilities(const nn::Tensor<float>&);
template std::vector<double> positive_probabilities(const nn::Tensor<double>&);

}  // namespace segn
