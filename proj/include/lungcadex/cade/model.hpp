#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "lungcadex/cade/tokenizer.hpp"
#include "lungcadex/image.hpp"
#include "lungcadex/ingest/volume.hpp"
#include "lungcadex/nn/layers.hpp"

namespace lungcadex::cade {

struct PromptSuite {
  std::vector<std::string> prompts;

  /// "nodules", "nodule", "lung nodule", "LUNG NODULE", "Nodule", "segment nodule"
  static PromptSuite standard();
  /// Non-empty with unique entries.
  void validate() const;
};

/// Shapes of the three segmentation components. "paper" mirrors the foundation
/// model sizes (12-layer ViT-Base encoder, 2-layer decoder); "toy" is a small
/// randomly initialised model for desk-scale runs.
struct SegModelConfig {
  std::string profile = "toy";
  int image_size = 64;
  int patch_size = 8;
  int image_embed_dim = 64;
  int encoder_layers = 4;
  int encoder_heads = 4;
  int decoder_dim = 32;
  int decoder_layers = 2;
  int decoder_heads = 2;
  int decoder_mlp_dim = 64;
  int pixel_feature_dim = 32;
  int text_embed_dim = 32;
  int text_layers = 1;
  int text_heads = 2;
  int hash_buckets = 32;
  int max_prompt_tokens = 16;
  int prefix_length = 8;
  bool freeze_image_encoder = true;
  bool freeze_mask_decoder = true;

  static SegModelConfig toy();
  static SegModelConfig paper();
  static SegModelConfig for_profile(const std::string& profile);
  void validate() const;
  int grid_size() const { return image_size / patch_size; }

  friend bool operator==(const SegModelConfig&, const SegModelConfig&) = default;
};

void to_json(nlohmann::json& j, const SegModelConfig& c);
void from_json(const nlohmann::json& j, SegModelConfig& c);

/// Output of the image encoder: a token grid for attention plus full-resolution
/// pixel features used when the mask is assembled.
struct ImageEmbedding {
  int grid = 0;          // tokens per side
  int height = 0;        // slice resolution
  int width = 0;
  nn::Tensor tokens;          // {grid * grid, decoder_dim}
  nn::Tensor pixel_features;  // {pixel_feature_dim, height * width}

  friend bool operator==(const ImageEmbedding&, const ImageEmbedding&) = default;
};

struct MaskPrediction {
  Image probabilities;  // same shape as the input slice, values in [0, 1]
};

inline constexpr const char* kImageEncoderPrefix = "image_encoder.";
inline constexpr const char* kPromptEncoderPrefix = "prompt_encoder.";
inline constexpr const char* kMaskDecoderPrefix = "mask_decoder.";

class SegModel {
 public:
  SegModel(SegModelConfig config, std::uint64_t seed);

  const SegModelConfig& config() const { return config_; }
  const nn::ParameterStore& parameters() const { return store_; }
  nn::ParameterStore& parameters() { return store_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  /// Slice must be image_size square. Frozen and gradient-isolated; identical slices give bitwise-identical embeddings.
  ImageEmbedding encode_image(const ingest::SliceImage& slice) const;

  /// prefix tokens followed by the prompt's token embeddings, through the text encoder.
  /// Result is {prefix_length + tokens, decoder_dim}.
  nn::Var encode_prompt(const std::string& prompt) const;

  /// Cross-attention decoder; returns {1, height * width} probabilities.
  nn::Var decode(const ImageEmbedding& embedding, const nn::Var& prompt_features) const;

  MaskPrediction decode_mask(const ImageEmbedding& embedding, const nn::Tensor& prompt_features) const;

  std::uint64_t frozen_checksum() const;

 private:
  struct DecoderLayer {
    nn::Attention self_attention, token_to_image, image_to_token;
    nn::LayerNorm norm1, norm2, norm3, norm4;
    nn::Mlp mlp;
  };

  SegModelConfig config_;
  Tokenizer tokenizer_;
  nn::ParameterStore store_;

  // image encoder
  nn::Linear patch_embed_;
  int encoder_positions_ = -1;
  std::vector<nn::TransformerBlock> encoder_blocks_;
  nn::LayerNorm neck_norm1_, neck_norm2_;
  nn::Linear neck_;
  nn::Conv2d stem1_, stem2_;

  // prompt encoder
  int token_table_ = -1;
  int prefix_ = -1;
  std::vector<nn::TransformerBlock> text_blocks_;
  nn::LayerNorm text_norm_;
  nn::Linear text_projection_;

  // mask decoder
  int output_token_ = -1;
  std::vector<DecoderLayer> decoder_layers_;
  nn::Attention final_attention_;
  nn::LayerNorm final_norm_;
  nn::Mlp hypernetwork_;
  nn::Linear upscale_;
  nn::Tensor image_positions_;
};

std::string to_hex(std::uint64_t value);

}  // namespace lungcadex::cade
