#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "lungcadex/cadx/similarity.hpp"
#include "lungcadex/gallery/gallery.hpp"
#include "lungcadex/nn/adamw.hpp"
#include "lungcadex/nn/layers.hpp"

namespace lungcadex::cadx {

/// Residual image encoder and projection heads. "paper" is the 50-layer bottleneck
/// layout with a 2048-wide embedding; "toy" is a three-stage basic-block network.
struct AlignConfig {
  std::string profile = "toy";
  int patch_size = 96;
  int stem_width = 8;
  int stem_kernel = 3;
  bool stem_pool = true;
  bool bottleneck = false;
  std::vector<int> stage_blocks{1, 1, 1};
  std::vector<int> stage_widths{8, 16, 32};
  int feature_input_dim = 8;
  int feature_hidden_dim = 64;
  int joint_dim = 128;
  double temperature = 0.07;
  double alpha = 1.0;
  double beta = 1.0;
  double log_zero_clamp = -4.0;
  int batch_size = 8;
  int epochs = 500;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double rating_min = 1.0;  ///< features are rescaled by (v - rating_min) / (rating_max - rating_min)
  double rating_max = 5.0;

  static AlignConfig toy();
  static AlignConfig paper();
  static AlignConfig for_profile(const std::string& profile);
  void validate() const;
  /// Width of the pooled image features fed to the image projection.
  int image_embed_dim() const;
  SceOptions sce_options() const { return {temperature, alpha, beta, log_zero_clamp}; }

  friend bool operator==(const AlignConfig&, const AlignConfig&) = default;
};

void to_json(nlohmann::json& j, const AlignConfig& c);
void from_json(const nlohmann::json& j, AlignConfig& c);

struct AlignEpoch {
  int epoch = 0;
  double ce = 0.0;
  double rce = 0.0;
  double total = 0.0;
};

inline constexpr const char* kPatchEncoderPrefix = "patch_encoder.";
inline constexpr const char* kImageProjectionPrefix = "image_projection.";
inline constexpr const char* kFeatureProjectionPrefix = "feature_projection.";

class AlignedEncoders {
 public:
  AlignedEncoders(AlignConfig config, std::uint64_t seed);

  const AlignConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  /// Unit-norm joint embedding of a patch_size x patch_size patch.
  std::vector<float> encode_patch(const ingest::NodulePatch& patch) const;
  /// Unit-norm joint embedding of a radiomic vector (values in [1, 5]).
  std::vector<float> project_features(std::span<const double> features) const;
  std::vector<float> project_features(const gallery::RadiomicFeatureVector& features) const;

  /// Graph versions over a batch; rows are unit-norm.
  nn::Var encode_patches(std::span<const ingest::NodulePatch* const> patches) const;
  nn::Var project_batch(std::span<const gallery::RadiomicFeatureVector* const> features) const;

  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<AlignEpoch> history;
  bool trained() const { return epoch > 0; }

 private:
  struct Block {
    std::vector<nn::Conv2d> convs;
    nn::Conv2d shortcut;
    bool has_shortcut = false;
  };

  nn::Var image_features(const ingest::NodulePatch& patch) const;  // {1, image_embed_dim}
  void check_patch(const ingest::NodulePatch& patch) const;

  AlignConfig config_;
  nn::ParameterStore store_;
  nn::Conv2d stem_;
  std::vector<Block> blocks_;
  nn::Linear image_projection_;
  nn::Linear feature_hidden_, feature_out_;
};

using AlignEpochCallback = std::function<void(const AlignEpoch&)>;

/// Trains encoder and both projections on matched (patch, features) pairs of the gallery.
AlignedEncoders train_cadx(const gallery::FeatureGallery& gallery, const AlignConfig& config,
                           const AlignEpochCallback& on_epoch = {});
/// Continues training encoders built elsewhere, e.g. after importing external weights.
void train_cadx(AlignedEncoders& encoders, const gallery::FeatureGallery& gallery,
                const AlignEpochCallback& on_epoch = {});

/// Mean diagonal minus mean off-diagonal similarity between patch and feature embeddings.
double alignment_gap(const AlignedEncoders& encoders, const gallery::FeatureGallery& gallery);

void save_cadx(const std::filesystem::path& path, const AlignedEncoders& encoders);
AlignedEncoders load_cadx(const std::filesystem::path& path);

}  // namespace lungcadex::cadx
