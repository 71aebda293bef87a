#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lungcadex/cade/model.hpp"
#include "lungcadex/ingest/manifest.hpp"
#include "lungcadex/nn/adamw.hpp"

namespace lungcadex::cade {

struct CadeHyperParams {
  double learning_rate = 5e-5;
  int batch_size = 16;
  int epochs = 500;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  /// Negative slices join training when set, at negative_ratio per positive slice.
  bool include_negatives = false;
  double negative_ratio = 0.25;

  static CadeHyperParams paper() { return {}; }
  /// Desk-scale settings for the toy model on phantom data.
  static CadeHyperParams toy();
  void validate() const;
};

void to_json(nlohmann::json& j, const CadeHyperParams& h);
void from_json(const nlohmann::json& j, CadeHyperParams& h);

struct TrainingSlice {
  std::string scan_id;
  int slice_index = 0;
  ingest::SliceImage image;    // resized to the model resolution
  std::vector<double> target;  // binary mask, row-major, same resolution
};

struct EpochLoss {
  int epoch = 0;
  double bce = 0.0;
  double dice = 0.0;
  double total = 0.0;
};

struct TrainState {
  SegModel model;
  PromptSuite suite;
  nn::AdamW optimizer;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<EpochLoss> history;

  TrainState(SegModelConfig config, PromptSuite prompts, std::uint64_t model_seed);
  bool trained() const { return epoch > 0; }
};

/// Bilinear resize of the pixels; identity when already size x size.
ingest::SliceImage resize_slice(const ingest::SliceImage& slice, int size);

/// Windowed slice of a dataset scan.
ingest::SliceImage load_slice(const ingest::Dataset& dataset, const std::string& scan_id, int slice_index);

/// Contoured slices of the given scans, plus sampled negatives when requested.
std::vector<TrainingSlice> collect_training_slices(const ingest::Dataset& dataset,
                                                   const std::set<std::string>& scan_ids, int image_size,
                                                   const CadeHyperParams& hyper);

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Prefix tuning: only prompt-encoder parameters are updated. Each sample pairs a
/// slice with a prompt drawn uniformly from the suite.
void train_cade(TrainState& state, const std::vector<TrainingSlice>& slices, const CadeHyperParams& hyper,
                const EpochCallback& on_epoch = {});

/// Convenience overload: trains on the training side of the split.
TrainState train_cade(const ingest::Dataset& dataset, const ingest::DatasetSplit& split, SegModelConfig config,
                      PromptSuite suite, const CadeHyperParams& hyper, const EpochCallback& on_epoch = {});

/// CSV with header epoch,bce,dice,total.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLoss>& history);

void save_cade(const std::filesystem::path& path, const TrainState& state);
/// Rejects archives whose config differs from expected_config when one is given.
TrainState load_cade(const std::filesystem::path& path, const std::optional<SegModelConfig>& expected_config = {});

}  // namespace lungcadex::cade
