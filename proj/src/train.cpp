#include "segn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segn/runtime.hpp"

namespace segn {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStreamTag = 0x747261696e;

}  // namespace

void TrainConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::BadConfig, m); };
  if (!(lr > 0) || !std::isfinite(lr)) bad("lr must be positive");
  if (!(weight_decay >= 0)) bad("weight_decay must be non-negative");
  if (batch_size == 0) bad("batch_size must be positive");
  if (max_epochs == 0) bad("max_epochs must be positive");
  if (patience == 0 || patience >= max_epochs) bad("patience must be in [1, max_epochs)");
  if (!(min_delta >= 0)) bad("min_delta must be non-negative");
  if (!(plateau.factor > 0 && plateau.factor < 1) || plateau.patience == 0 || !(plateau.min_lr >= 0)) {
    bad("invalid scheduler settings");
  }
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr", c.lr},
           {"weight_decay", c.weight_decay},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"min_delta", c.min_delta},
           {"scheduler",
            {{"factor", c.plateau.factor},
             {"patience", c.plateau.patience},
             {"min_lr", c.plateau.min_lr},
             {"threshold", c.plateau.threshold}}},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig d;
  try {
    c.lr = j.value("lr", d.lr);
    c.weight_decay = j.value("weight_decay", d.weight_decay);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.min_delta = j.value("min_delta", d.min_delta);
    const json s = j.value("scheduler", json::object());
    c.plateau.factor = s.value("factor", d.plateau.factor);
    c.plateau.patience = s.value("patience", d.plateau.patience);
    c.plateau.min_lr = s.value("min_lr", d.plateau.min_lr);
    c.plateau.threshold = s.value("threshold", d.plateau.threshold);
    c.seed = j.value("seed", d.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("bad train config: ") + e.what());
  }
  c.validate();
}

json TrainResult::history_json() const {
  json epochs = json::array();
  for (const auto& e : history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_weighted_f1", e.val_weighted_f1},
                      {"val_auc", e.val_auc},
                      {"lr", e.lr},
                      {"improved", e.improved}});
  }
  return {{"epochs", epochs},
          {"best_epoch", best_epoch},
          {"best_val_weighted_f1", best_val_weighted_f1},
          {"stopped_early", stopped_early},
          {"first_batch_loss", first_batch_loss},
          {"class_counts", class_counts},
          {"class_weights", class_weights}};
}

SplitSummary summarize_split(const StoreReader& store, const SplitAssignment& split, Split which) {
  SplitSummary out;
  StandardizationFitter fitter(store.header().layout);
  const auto mask = store.split_mask(split, which);
  store.for_each_chunk(
      [&](std::vector<SequenceSample>& chunk) {
        for (const auto& s : chunk) {
          if (s.label > 1) throw Error(ErrorKind::BadLabel, "label " + std::to_string(s.label) + " is not 0/1");
          ++out.class_counts[s.label];
          fitter.add(s);
        }
      },
      &mask);
  out.standardization = fitter.finish();
  return out;
}

namespace {

Date store_epoch(const StoreHeader& header) {
  if (!header.metadata.is_object() || !header.metadata.contains("epoch_date")) {
    throw Error(ErrorKind::FormatError, "store metadata lacks epoch_date");
  }
  return parse_date(header.metadata.at("epoch_date").get<std::string>());
}

}  // namespace

Season week_season(const StoreHeader& header, std::int32_t week_start) {
  return assign_season(week_start, store_epoch(header));
}

nn::Tensor<float> batch_tensor(std::span<const SequenceSample* const> samples, std::size_t width) {
  nn::Tensor<float> x({samples.size() * kSequenceLength, width});
  float* dst = x.data();
  for (const auto* s : samples) {
    if (s->features.size() != kSequenceLength * width) {
      throw Error(ErrorKind::LayoutMismatch, "sample width " + std::to_string(s->features.size() / kSequenceLength) +
                                                 ", expected " + std::to_string(width));
    }
    dst = std::copy(s->features.begin(), s->features.end(), dst);
  }
  return x;
}

namespace {

void check_layout(const SegnModel<float>& model, const FeatureLayout& store_layout) {
  if (model.config().variant == Variant::Geo && store_layout.variant() != Variant::Geo) {
    throw Error(ErrorKind::LayoutMismatch, "geo model cannot read a base-layout store");
  }
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  return order;
}

}  // namespace

ScoredSamples score_store(SegnModel<float>& model, const StoreReader& store, const StandardizationStats& stats,
                          const SplitAssignment* split, Split which, std::size_t batch_size) {
  const auto& layout = store.header().layout;
  check_layout(model, layout);
  if (stats.mean.size() != layout.total()) {
    throw Error(ErrorKind::LayoutMismatch, "standardization covers " + std::to_string(stats.mean.size()) +
                                               " features, store has " + std::to_string(layout.total()));
  }
  std::optional<std::vector<bool>> mask;
  if (split) mask = store.split_mask(*split, which);
  ScoredSamples out;
  const Date epoch = store_epoch(store.header());
  Rng unused(0);
  store.for_each_chunk(
      [&](std::vector<SequenceSample>& chunk) {
        for (auto& s : chunk) apply_standardization(s.features, stats);
        for (std::size_t begin = 0; begin < chunk.size(); begin += batch_size) {
          const std::size_t end = std::min(chunk.size(), begin + batch_size);
          std::vector<const SequenceSample*> batch;
          for (std::size_t i = begin; i < end; ++i) batch.push_back(&chunk[i]);
          nn::Tape<float> tape(false);
          auto logits = model.forward(tape, batch_tensor(batch, layout.total()), layout, false, unused);
          const auto p = positive_probabilities(logits.value());
          for (std::size_t i = 0; i < batch.size(); ++i) {
            out.probabilities.push_back(p[i]);
            out.labels.push_back(batch[i]->label);
            out.seasons.push_back(assign_season(batch[i]->week_start_day, epoch));
          }
        }
      },
      mask ? &*mask : nullptr);
  return out;
}

Metrics evaluate(SegnModel<float>& model, const StoreReader& store, const StandardizationStats& stats,
                 const SplitAssignment* split, Split which, std::size_t batch_size) {
  const auto scored = score_store(model, store, stats, split, which, batch_size);
  if (scored.labels.empty()) throw Error(ErrorKind::EmptyStore, "no samples in the selected split");
  return compute_metrics(scored.probabilities, scored.labels, scored.seasons);
}

TrainResult train(SegnModel<float>& model, const StoreReader& store, const SplitAssignment& split,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  configure_runtime();
  const auto& layout = store.header().layout;
  check_layout(model, layout);

  TrainResult result;
  {
    auto summary = summarize_split(store, split, Split::Train);
    result.class_counts = summary.class_counts;
    result.standardization = std::move(summary.standardization);
  }
  if (result.class_counts[0] == 0 || result.class_counts[1] == 0) {
    throw Error(ErrorKind::SingleClassTrainingSet, "training split holds only class " +
                                                       std::to_string(result.class_counts[0] == 0 ? 1 : 0));
  }
  result.class_weights = nn::class_weights(result.class_counts);

  auto params = model.parameters();
  nn::AdamW<float> opt(params, {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  nn::PlateauScheduler scheduler(config.lr, config.plateau);
  const auto train_mask = store.split_mask(split, Split::Train);
  Rng rng(derive_seed(config.seed, kTrainStreamTag));

  std::vector<nn::Tensor<float>> best_values;
  for (const auto* p : params) best_values.push_back(p->value);
  double best = -1.0;
  std::size_t bad_epochs = 0;
  bool first_batch = true;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double loss_sum = 0;
    std::size_t loss_samples = 0;
    const auto order = shuffled_order(store.num_chunks(), rng);
    store.for_each_chunk(
        [&](std::vector<SequenceSample>& chunk) {
          for (auto& s : chunk) apply_standardization(s.features, result.standardization);
          const auto idx = shuffled_order(chunk.size(), rng);
          for (std::size_t begin = 0; begin < idx.size(); begin += config.batch_size) {
            const std::size_t end = std::min(idx.size(), begin + config.batch_size);
            std::vector<const SequenceSample*> batch;
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) {
              batch.push_back(&chunk[idx[i]]);
              labels.push_back(chunk[idx[i]].label);
            }
            nn::Tape<float> tape(true);
            auto logits = model.forward(tape, batch_tensor(batch, layout.total()), layout, true, rng);
            auto loss = nn::weighted_cross_entropy(logits, std::span<const int>(labels),
                                                   std::span<const double>(result.class_weights));
            const double l = loss.value()[0];
            if (!std::isfinite(l)) throw std::runtime_error("training loss diverged at epoch " + std::to_string(epoch));
            if (first_batch) {
              result.first_batch_loss = l;
              first_batch = false;
            }
            loss_sum += l * static_cast<double>(batch.size());
            loss_samples += batch.size();
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
          }
        },
        &train_mask, order);

    const Metrics val = evaluate(model, store, result.standardization, &split, Split::Val, config.batch_size);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_samples ? loss_sum / static_cast<double>(loss_samples) : 0.0;
    rec.val_weighted_f1 = val.weighted_f1;
    rec.val_auc = val.auc;
    rec.lr = opt.lr();
    rec.improved = val.weighted_f1 > best + config.min_delta;
    if (rec.improved) {
      best = val.weighted_f1;
      result.best_epoch = epoch;
      result.best_val_weighted_f1 = best;
      for (std::size_t k = 0; k < params.size(); ++k) best_values[k] = params[k]->value;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    opt.set_lr(scheduler.step(val.weighted_f1));
    if (bad_epochs >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best_values[k];
  return result;
}

}  // namespace segn
