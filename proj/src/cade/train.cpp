#include "lungcadex/cade/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <spdlog/spdlog.h>

#include "lungcadex/cade/losses.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/nn/checkpoint.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::cade {

CadeHyperParams CadeHyperParams::toy() {
  CadeHyperParams h;
  h.learning_rate = 1e-3;
  h.batch_size = 8;
  h.epochs = 40;
  return h;
}

void CadeHyperParams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (negative_ratio < 0.0) throw ConfigError("negative ratio must be non-negative");
}

void to_json(nlohmann::json& j, const CadeHyperParams& h) {
  j = {{"learning_rate", h.learning_rate},   {"batch_size", h.batch_size},
       {"epochs", h.epochs},                 {"weight_decay", h.weight_decay},
       {"seed", h.seed},                     {"include_negatives", h.include_negatives},
       {"negative_ratio", h.negative_ratio}};
}

void from_json(const nlohmann::json& j, CadeHyperParams& h) {
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("learning_rate", h.learning_rate);
  read("batch_size", h.batch_size);
  read("epochs", h.epochs);
  read("weight_decay", h.weight_decay);
  read("seed", h.seed);
  read("include_negatives", h.include_negatives);
  read("negative_ratio", h.negative_ratio);
}

TrainState::TrainState(SegModelConfig config, PromptSuite prompts, std::uint64_t model_seed)
    : model(std::move(config), model_seed), suite(std::move(prompts)), seed(model_seed) {
  suite.validate();
}

ingest::SliceImage resize_slice(const ingest::SliceImage& slice, int size) {
  ingest::SliceImage out{slice.scan_id, slice.slice_index, resize_bilinear(slice.pixels, size, size)};
  return out;
}

ingest::SliceImage load_slice(const ingest::Dataset& dataset, const std::string& scan_id, int slice_index) {
  const ingest::CTVolume volume = ingest::window_normalize(dataset.load_volume(scan_id));
  return ingest::extract_slice(volume, slice_index);
}

namespace {

std::vector<double> mask_target(const Mask& mask, int size) {
  std::vector<double> target(std::size_t(size) * size, 0.0);
  if (mask.height == size && mask.width == size) {
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = mask.bits[i] ? 1.0 : 0.0;
    return target;
  }
  Image as_image(mask.height, mask.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) as_image.pixels[i] = mask.bits[i];
  const Image resized = resize_bilinear(as_image, size, size);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = resized.pixels[i] >= 0.5f ? 1.0 : 0.0;
  return target;
}

}  // namespace

std::vector<TrainingSlice> collect_training_slices(const ingest::Dataset& dataset,
                                                   const std::set<std::string>& scan_ids, int image_size,
                                                   const CadeHyperParams& hyper) {
  Rng rng(mix_seed(hyper.seed, 21));
  std::vector<TrainingSlice> out;
  for (const std::string& scan_id : scan_ids) {
    const ingest::ScanRecord& record = dataset.scan(scan_id);
    std::set<int> positive;
    for (const auto& nodule : record.nodules) {
      for (const auto& contour : nodule.contours) positive.insert(contour.slice_index);
    }
    std::vector<int> chosen(positive.begin(), positive.end());
    if (hyper.include_negatives) {
      std::vector<int> negatives;
      for (int z = 0; z < record.dims[0]; ++z) {
        if (!positive.contains(z)) negatives.push_back(z);
      }
      rng.shuffle(negatives);
      const auto wanted = static_cast<std::size_t>(std::lround(hyper.negative_ratio * double(positive.size())));
      negatives.resize(std::min(wanted, negatives.size()));
      std::sort(negatives.begin(), negatives.end());
      chosen.insert(chosen.end(), negatives.begin(), negatives.end());
    }
    if (chosen.empty()) continue;
    const ingest::CTVolume volume = ingest::window_normalize(dataset.load_volume(scan_id));
    for (int z : chosen) {
      TrainingSlice sample;
      sample.scan_id = scan_id;
      sample.slice_index = z;
      sample.image = resize_slice(ingest::extract_slice(volume, z), image_size);
      sample.target = mask_target(dataset.slice_mask(scan_id, z), image_size);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

void train_cade(TrainState& state, const std::vector<TrainingSlice>& slices, const CadeHyperParams& hyper,
                const EpochCallback& on_epoch) {
  hyper.validate();
  if (hyper.epochs == 0) return;
  if (slices.empty()) throw InputError("no training slices");

  SegModel& model = state.model;
  nn::ParameterStore& store = model.parameters();
  if (state.optimizer.steps() == 0) {
    state.optimizer = nn::AdamW(store, {hyper.learning_rate, 0.9, 0.999, 1e-8, hyper.weight_decay});
  }
  const std::uint64_t frozen_before = model.frozen_checksum();

  std::vector<ImageEmbedding> embeddings;
  embeddings.reserve(slices.size());
  for (const TrainingSlice& s : slices) embeddings.push_back(model.encode_image(s.image));

  Rng rng(mix_seed(hyper.seed, 22 + std::uint64_t(state.epoch)));
  std::vector<std::size_t> order(slices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::size_t(hyper.batch_size);

  for (int e = 0; e < hyper.epochs; ++e) {
    const int epoch = state.epoch + 1;
    rng.shuffle(order);
    EpochLoss sums{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(order.size(), start + batch);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        const std::string& prompt = state.suite.prompts[rng.index(state.suite.prompts.size())];
        const nn::Var probs = model.decode(embeddings[idx], model.encode_prompt(prompt));
        SegmentationLossTerms terms;
        const nn::Var loss = segmentation_loss(probs, slices[idx].target, &terms);
        if (!std::isfinite(terms.total)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                              " (bce " + std::to_string(terms.bce) + ", dice " + std::to_string(terms.dice) + ")");
        }
        loss.backward();
        sums.bce += terms.bce;
        sums.dice += terms.dice;
        sums.total += terms.total;
      }
      state.optimizer.step(store, 1.0 / double(end - start));
    }
    const double n = double(slices.size());
    sums.bce /= n;
    sums.dice /= n;
    sums.total /= n;
    state.history.push_back(sums);
    state.epoch = epoch;
    spdlog::debug("cade epoch {} loss {:.6f} (bce {:.6f}, dice {:.6f})", epoch, sums.total, sums.bce, sums.dice);
    if (on_epoch) on_epoch(sums);
  }
  if (model.frozen_checksum() != frozen_before) throw ContractError("frozen segmentation parameters changed");
}

TrainState train_cade(const ingest::Dataset& dataset, const ingest::DatasetSplit& split, SegModelConfig config,
                      PromptSuite suite, const CadeHyperParams& hyper, const EpochCallback& on_epoch) {
  if (split.train_scan_ids.empty()) throw InputError("training side of the split is empty");
  TrainState state(std::move(config), std::move(suite), hyper.seed);
  const auto slices = collect_training_slices(dataset, split.train_scan_ids, state.model.config().image_size, hyper);
  train_cade(state, slices, hyper, on_epoch);
  return state;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLoss>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,bce,dice,total\n";
  out.precision(9);
  for (const EpochLoss& row : history) out << row.epoch << ',' << row.bce << ',' << row.dice << ',' << row.total << '\n';
}

void save_cade(const std::filesystem::path& path, const TrainState& state) {
  nlohmann::json header = {{"kind", "cade"},
                           {"config", state.model.config()},
                           {"prompt_suite", state.suite.prompts},
                           {"seed", state.seed},
                           {"epoch", state.epoch}};
  nlohmann::json history = nlohmann::json::array();
  for (const EpochLoss& row : state.history) history.push_back({row.epoch, row.bce, row.dice, row.total});
  header["history"] = std::move(history);
  nn::write_checkpoint(path, header, state.model.parameters());
}

TrainState load_cade(const std::filesystem::path& path, const std::optional<SegModelConfig>& expected_config) {
  const nn::Checkpoint ckpt = nn::read_checkpoint(path);
  const nlohmann::json& h = ckpt.header;
  if (h.value("kind", std::string()) != "cade") throw ConfigError(path.string() + " is not a segmentation checkpoint");
  SegModelConfig config;
  PromptSuite suite;
  std::uint64_t seed = 0;
  try {
    config = h.at("config").get<SegModelConfig>();
    suite.prompts = h.at("prompt_suite").get<std::vector<std::string>>();
    seed = h.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (expected_config && !(*expected_config == config)) {
    throw ConfigError(path.string() + ": checkpoint config does not match the requested model config");
  }
  TrainState state(config, suite, seed);
  nn::load_parameters(ckpt, state.model.parameters());
  state.epoch = h.value("epoch", 0);
  for (const auto& row : h.value("history", nlohmann::json::array())) {
    state.history.push_back({row.at(0).get<int>(), row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()});
  }
  return state;
}

}  // namespace lungcadex::cade
