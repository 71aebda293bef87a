#include "lungcadex/cadx/align.hpp"

#include <cmath>
#include <numeric>
#include <spdlog/spdlog.h>

#include "lungcadex/errors.hpp"
#include "lungcadex/nn/checkpoint.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::cadx {

using nn::Var;

AlignConfig AlignConfig::toy() {
  AlignConfig c;
  c.epochs = 150;
  return c;
}

AlignConfig AlignConfig::paper() {
  AlignConfig c;
  c.profile = "paper";
  c.stem_width = 64;
  c.stem_kernel = 7;
  c.bottleneck = true;
  c.stage_blocks = {3, 4, 6, 3};
  c.stage_widths = {64, 128, 256, 512};
  c.learning_rate = 1e-4;
  return c;
}

AlignConfig AlignConfig::for_profile(const std::string& profile) {
  if (profile == "toy") return toy();
  if (profile == "paper") return paper();
  throw ConfigError("unknown alignment profile: " + profile);
}

void AlignConfig::validate() const {
  if (patch_size < 8 || stem_width < 1 || stem_kernel < 1 || stem_kernel % 2 == 0) {
    throw ConfigError("invalid patch size or stem shape");
  }
  if (stage_blocks.empty() || stage_blocks.size() != stage_widths.size()) {
    throw ConfigError("stage_blocks and stage_widths must be non-empty and of equal length");
  }
  for (std::size_t i = 0; i < stage_blocks.size(); ++i) {
    if (stage_blocks[i] < 1 || stage_widths[i] < 1) throw ConfigError("stage sizes must be positive");
  }
  if (feature_input_dim != gallery::kFeatureCount) {
    throw ConfigError("feature_input_dim must be " + std::to_string(gallery::kFeatureCount));
  }
  if (feature_hidden_dim < 1 || joint_dim < 1) throw ConfigError("projection widths must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (alpha < 0.0 || beta < 0.0 || !(alpha + beta > 0.0)) {
    throw ConfigError("alpha and beta must be non-negative with a positive sum");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (!(rating_max > rating_min)) throw ConfigError("rating_max must exceed rating_min");
}

int AlignConfig::image_embed_dim() const { return stage_widths.back() * (bottleneck ? 4 : 1); }

void to_json(nlohmann::json& j, const AlignConfig& c) {
  j = {{"profile", c.profile},
       {"patch_size", c.patch_size},
       {"stem_width", c.stem_width},
       {"stem_kernel", c.stem_kernel},
       {"stem_pool", c.stem_pool},
       {"bottleneck", c.bottleneck},
       {"stage_blocks", c.stage_blocks},
       {"stage_widths", c.stage_widths},
       {"feature_input_dim", c.feature_input_dim},
       {"feature_hidden_dim", c.feature_hidden_dim},
       {"joint_dim", c.joint_dim},
       {"temperature", c.temperature},
       {"alpha", c.alpha},
       {"beta", c.beta},
       {"log_zero_clamp", c.log_zero_clamp},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"seed", c.seed},
       {"rating_min", c.rating_min},
       {"rating_max", c.rating_max}};
}

void from_json(const nlohmann::json& j, AlignConfig& c) {
  c = AlignConfig::for_profile(j.value("profile", std::string("toy")));
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("patch_size", c.patch_size);
  read("stem_width", c.stem_width);
  read("stem_kernel", c.stem_kernel);
  read("stem_pool", c.stem_pool);
  read("bottleneck", c.bottleneck);
  read("stage_blocks", c.stage_blocks);
  read("stage_widths", c.stage_widths);
  read("feature_input_dim", c.feature_input_dim);
  read("feature_hidden_dim", c.feature_hidden_dim);
  read("joint_dim", c.joint_dim);
  read("temperature", c.temperature);
  read("alpha", c.alpha);
  read("beta", c.beta);
  read("log_zero_clamp", c.log_zero_clamp);
  read("batch_size", c.batch_size);
  read("epochs", c.epochs);
  read("learning_rate", c.learning_rate);
  read("weight_decay", c.weight_decay);
  read("seed", c.seed);
  read("rating_min", c.rating_min);
  read("rating_max", c.rating_max);
}

namespace {

void zero_fill(nn::ParameterStore& store, int id) { store.entries()[std::size_t(id)].var.mutable_value().fill(0.0f); }

}  // namespace

AlignedEncoders::AlignedEncoders(AlignConfig config, std::uint64_t model_seed)
    : seed(model_seed), config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(model_seed, 31));
  const std::string pe = kPatchEncoderPrefix;
  stem_ = nn::Conv2d::create(store_, pe + "stem", 1, config_.stem_width, config_.stem_kernel, 2,
                             config_.stem_kernel / 2, rng);
  int channels = config_.stem_width;
  for (std::size_t s = 0; s < config_.stage_blocks.size(); ++s) {
    const int width = config_.stage_widths[s];
    const int out_channels = config_.bottleneck ? 4 * width : width;
    for (int b = 0; b < config_.stage_blocks[s]; ++b) {
      const std::string name = pe + "stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      Block block;
      if (config_.bottleneck) {
        block.convs.push_back(nn::Conv2d::create(store_, name + ".conv1", channels, width, 1, 1, 0, rng));
        block.convs.push_back(nn::Conv2d::create(store_, name + ".conv2", width, width, 3, stride, 1, rng));
        block.convs.push_back(nn::Conv2d::create(store_, name + ".conv3", width, out_channels, 1, 1, 0, rng));
      } else {
        block.convs.push_back(nn::Conv2d::create(store_, name + ".conv1", channels, width, 3, stride, 1, rng));
        block.convs.push_back(nn::Conv2d::create(store_, name + ".conv2", width, out_channels, 3, 1, 1, rng));
      }
      // Residual branches start at zero so every block is the identity at initialization.
      zero_fill(store_, block.convs.back().weight);
      if (stride != 1 || channels != out_channels) {
        block.shortcut = nn::Conv2d::create(store_, name + ".shortcut", channels, out_channels, 1, stride, 0, rng);
        block.has_shortcut = true;
      }
      blocks_.push_back(std::move(block));
      channels = out_channels;
    }
  }
  image_projection_ =
      nn::Linear::create(store_, std::string(kImageProjectionPrefix) + "linear", channels, config_.joint_dim, rng);
  const std::string fp = kFeatureProjectionPrefix;
  feature_hidden_ = nn::Linear::create(store_, fp + "hidden", config_.feature_input_dim, config_.feature_hidden_dim,
                                       rng, 1.4142135f);
  feature_out_ = nn::Linear::create(store_, fp + "out", config_.feature_hidden_dim, config_.joint_dim, rng);
}

void AlignedEncoders::check_patch(const ingest::NodulePatch& patch) const {
  if (patch.pixels.height != config_.patch_size || patch.pixels.width != config_.patch_size) {
    throw ContractError("patch is " + std::to_string(patch.pixels.height) + "x" + std::to_string(patch.pixels.width) +
                        ", expected " + std::to_string(config_.patch_size) + "x" + std::to_string(config_.patch_size));
  }
}

Var AlignedEncoders::image_features(const ingest::NodulePatch& patch) const {
  check_patch(patch);
  const int size = config_.patch_size;
  Var x = Var::constant(nn::Tensor({1, size, size}, patch.pixels.pixels));
  x = nn::relu(stem_(store_, x));
  if (config_.stem_pool) x = nn::max_pool2d(x, 3, 2, 1);
  for (const Block& block : blocks_) {
    Var h = x;
    for (std::size_t i = 0; i < block.convs.size(); ++i) {
      h = block.convs[i](store_, h);
      if (i + 1 < block.convs.size()) h = nn::relu(h);
    }
    const Var skip = block.has_shortcut ? block.shortcut(store_, x) : x;
    x = nn::relu(nn::add(h, skip));
  }
  return nn::global_avg_pool(x);
}

Var AlignedEncoders::encode_patches(std::span<const ingest::NodulePatch* const> patches) const {
  if (patches.empty()) throw InputError("no patches to encode");
  std::vector<Var> rows;
  rows.reserve(patches.size());
  for (const ingest::NodulePatch* p : patches) rows.push_back(image_features(*p));
  const Var pooled = rows.size() == 1 ? rows.front() : nn::concat_rows(rows);
  return nn::l2_normalize_rows(image_projection_(store_, pooled));
}

Var AlignedEncoders::project_batch(std::span<const gallery::RadiomicFeatureVector* const> features) const {
  if (features.empty()) throw InputError("no feature vectors to project");
  const int n = static_cast<int>(features.size());
  const int d = config_.feature_input_dim;
  nn::Tensor input({n, d});
  const double span = config_.rating_max - config_.rating_min;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) input.at(i, k) = static_cast<float>(((*features[i])[k] - config_.rating_min) / span);
  }
  const Var hidden = nn::gelu(feature_hidden_(store_, Var::constant(std::move(input))));
  return nn::l2_normalize_rows(feature_out_(store_, hidden));
}

std::vector<float> AlignedEncoders::encode_patch(const ingest::NodulePatch& patch) const {
  const ingest::NodulePatch* one[] = {&patch};
  return encode_patches(one).value().data;
}

std::vector<float> AlignedEncoders::project_features(std::span<const double> features) const {
  if (static_cast<int>(features.size()) != config_.feature_input_dim) {
    throw ContractError("feature vector has length " + std::to_string(features.size()) + ", expected " +
                        std::to_string(config_.feature_input_dim));
  }
  gallery::RadiomicFeatureVector v;
  std::copy(features.begin(), features.end(), v.values.begin());
  return project_features(v);
}

std::vector<float> AlignedEncoders::project_features(const gallery::RadiomicFeatureVector& features) const {
  const gallery::RadiomicFeatureVector* one[] = {&features};
  return project_batch(one).value().data;
}

AlignedEncoders train_cadx(const gallery::FeatureGallery& gallery, const AlignConfig& config,
                           const AlignEpochCallback& on_epoch) {
  config.validate();
  AlignedEncoders enc(config, config.seed);
  train_cadx(enc, gallery, on_epoch);
  return enc;
}

void train_cadx(AlignedEncoders& enc, const gallery::FeatureGallery& gallery, const AlignEpochCallback& on_epoch) {
  const AlignConfig& config = enc.config();
  if (gallery.empty()) throw InputError("gallery is empty");
  if (std::size_t(config.batch_size) > gallery.size()) {
    throw ConfigError("batch size " + std::to_string(config.batch_size) + " exceeds gallery size " +
                      std::to_string(gallery.size()));
  }
  if (config.epochs == 0) return;
  nn::AdamW optimizer(enc.parameters(), {config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  const SceOptions sce = config.sce_options();

  Rng rng(mix_seed(config.seed, 32));
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::size_t(config.batch_size);
  for (int e = 1; e <= config.epochs; ++e) {
    rng.shuffle(order);
    AlignEpoch sums{e, 0.0, 0.0, 0.0};
    int batches = 0;
    // A trailing batch smaller than two pairs carries no contrastive signal and is skipped.
    for (std::size_t start = 0, b = 0; start + 1 < order.size(); start += batch, ++b) {
      const std::size_t end = std::min(order.size(), start + batch);
      if (end - start < 2) break;
      std::vector<const ingest::NodulePatch*> patches;
      std::vector<const gallery::RadiomicFeatureVector*> features;
      for (std::size_t i = start; i < end; ++i) {
        patches.push_back(&gallery[order[i]].patch);
        features.push_back(&gallery[order[i]].features);
      }
      const Var sim = nn::matmul_nt(enc.encode_patches(patches), enc.project_batch(features));
      SceTerms terms;
      const Var loss = sce_loss(sim, sce, &terms);
      if (!std::isfinite(terms.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(e) + ", batch " + std::to_string(b) +
                            " (ce " + std::to_string(terms.ce) + ", rce " + std::to_string(terms.rce) + ")");
      }
      loss.backward();
      optimizer.step(enc.parameters());
      sums.ce += terms.ce;
      sums.rce += terms.rce;
      sums.total += terms.total;
      ++batches;
    }
    if (batches > 0) {
      sums.ce /= batches;
      sums.rce /= batches;
      sums.total /= batches;
    }
    enc.history.push_back(sums);
    enc.epoch = e;
    spdlog::debug("cadx epoch {} loss {:.6f}", e, sums.total);
    if (on_epoch) on_epoch(sums);
  }
}

double alignment_gap(const AlignedEncoders& encoders, const gallery::FeatureGallery& gallery) {
  if (gallery.size() < 2) throw InputError("alignment gap needs at least two entries");
  std::vector<std::vector<float>> images, features;
  for (const auto& entry : gallery.entries()) {
    images.push_back(encoders.encode_patch(entry.patch));
    features.push_back(encoders.project_features(entry.features));
  }
  const SimilarityMatrix sim = similarity_matrix(images, features);
  double diag = 0.0, off = 0.0;
  for (int i = 0; i < sim.rows; ++i) {
    for (int j = 0; j < sim.cols; ++j) (i == j ? diag : off) += sim.at(i, j);
  }
  const double n = sim.rows;
  return diag / n - off / (n * (n - 1.0));
}

void save_cadx(const std::filesystem::path& path, const AlignedEncoders& encoders) {
  nlohmann::json history = nlohmann::json::array();
  for (const AlignEpoch& row : encoders.history) history.push_back({row.epoch, row.ce, row.rce, row.total});
  const nlohmann::json header = {{"kind", "cadx"},
                                 {"config", encoders.config()},
                                 {"seed", encoders.seed},
                                 {"epoch", encoders.epoch},
                                 {"rescale", {{"min", encoders.config().rating_min},
                                              {"max", encoders.config().rating_max}}},
                                 {"history", history}};
  nn::write_checkpoint(path, header, encoders.parameters());
}

AlignedEncoders load_cadx(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::read_checkpoint(path);
  const nlohmann::json& h = ckpt.header;
  if (h.value("kind", std::string()) != "cadx") throw ConfigError(path.string() + " is not an alignment checkpoint");
  AlignConfig config;
  std::uint64_t seed = 0;
  try {
    config = h.at("config").get<AlignConfig>();
    seed = h.at("seed").get<std::uint64_t>();
    config.rating_min = h.at("rescale").at("min").get<double>();
    config.rating_max = h.at("rescale").at("max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": bad checkpoint header: " + e.what());
  }
  AlignedEncoders enc(config, seed);
  nn::load_parameters(ckpt, enc.parameters());
  enc.epoch = h.value("epoch", 0);
  for (const auto& row : h.value("history", nlohmann::json::array())) {
    enc.history.push_back({row.at(0).get<int>(), row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()});
  }
  return enc;
}

}  // namespace lungcadex::cadx
