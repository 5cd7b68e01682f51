#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "segn/metrics.hpp"
#include "segn/model.hpp"
#include "segn/nn/optim.hpp"
#include "segn/store.hpp"

namespace segn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double min_delta = 1e-4;
  nn::PlateauConfig plateau;
  std::uint64_t seed = 0;

  /// Throws BadConfig.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_weighted_f1 = 0;
  double val_auc = 0;
  double lr = 0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_weighted_f1 = 0;
  bool stopped_early = false;
  double first_batch_loss = 0;
  std::array<std::size_t, 2> class_counts{};
  std::vector<double> class_weights;
  StandardizationStats standardization;

  nlohmann::json history_json() const;
};

/// Sample labels counted and standardization fit over one split, streaming.
struct SplitSummary {
  std::array<std::size_t, 2> class_counts{};
  StandardizationStats standardization;
};
SplitSummary summarize_split(const StoreReader& store, const SplitAssignment& split, Split which);

/// Trains on the train split, early-stopping on validation weighted F1, and
/// leaves the model holding the parameters of the best validation epoch.
/// Throws EmptyTrainingSet, SingleClassTrainingSet or LayoutMismatch.
/// on_epoch, when set, is called after each epoch's validation.
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train(SegnModel<float>& model, const StoreReader& store, const SplitAssignment& split,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Class-1 probabilities for every sample of one split (or the whole store),
/// in store order, with labels and week-start seasons.
struct ScoredSamples {
  std::vector<double> probabilities;
  std::vector<int> labels;
  std::vector<Season> seasons;
};
ScoredSamples score_store(SegnModel<float>& model, const StoreReader& store, const StandardizationStats& stats,
                          const SplitAssignment* split, Split which, std::size_t batch_size = 256);

/// Throws EmptyStore when the selection is empty.
Metrics evaluate(SegnModel<float>& model, const StoreReader& store, const StandardizationStats& stats,
                 const SplitAssignment* split, Split which, std::size_t batch_size = 256);

/// Season of a week starting at day index `week_start` under the store's epoch.
Season week_season(const StoreHeader& header, std::int32_t week_start);

/// Batch features as a [B*8, D] tensor, row b*8 + t.
nn::Tensor<float> batch_tensor(std::span<const SequenceSample* const> samples, std::size_t width);

}  // namespace segn
