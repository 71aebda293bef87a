#include "lungcadex/cade/model.hpp"

#include <cstdio>
#include <set>

#include "lungcadex/errors.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::cade {

using nn::Var;

PromptSuite PromptSuite::standard() {
  return PromptSuite{{"nodules", "nodule", "lung nodule", "LUNG NODULE", "Nodule", "segment nodule"}};
}

void PromptSuite::validate() const {
  if (prompts.empty()) throw ConfigError("prompt suite is empty");
  const std::set<std::string> unique(prompts.begin(), prompts.end());
  if (unique.size() != prompts.size()) throw ConfigError("prompt suite has duplicate entries");
}

SegModelConfig SegModelConfig::toy() { return SegModelConfig{}; }

SegModelConfig SegModelConfig::paper() {
  SegModelConfig c;
  c.profile = "paper";
  c.image_size = 1024;
  c.patch_size = 16;
  c.image_embed_dim = 768;
  c.encoder_layers = 12;
  c.encoder_heads = 12;
  c.decoder_dim = 256;
  c.decoder_layers = 2;
  c.decoder_heads = 8;
  c.decoder_mlp_dim = 2048;
  c.pixel_feature_dim = 32;
  c.text_embed_dim = 512;
  c.text_layers = 12;
  c.text_heads = 8;
  c.hash_buckets = 4096;
  c.max_prompt_tokens = 77;
  return c;
}

SegModelConfig SegModelConfig::for_profile(const std::string& profile) {
  if (profile == "toy") return toy();
  if (profile == "paper") return paper();
  throw ConfigError("unknown model profile: " + profile);
}

void SegModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(image_embed_dim, "image_embed_dim");
  positive(decoder_dim, "decoder_dim");
  positive(decoder_mlp_dim, "decoder_mlp_dim");
  positive(pixel_feature_dim, "pixel_feature_dim");
  positive(text_embed_dim, "text_embed_dim");
  positive(max_prompt_tokens, "max_prompt_tokens");
  if (image_size % patch_size != 0) throw ConfigError("image_size must be a multiple of patch_size");
  if (encoder_layers < 0 || decoder_layers < 0 || text_layers < 0 || prefix_length < 0) {
    throw ConfigError("layer counts and prefix length must be non-negative");
  }
  if (image_embed_dim % encoder_heads || decoder_dim % decoder_heads || text_embed_dim % text_heads) {
    throw ConfigError("embedding widths must be divisible by their head counts");
  }
}

void to_json(nlohmann::json& j, const SegModelConfig& c) {
  j = {{"profile", c.profile},
       {"image_size", c.image_size},
       {"patch_size", c.patch_size},
       {"image_embed_dim", c.image_embed_dim},
       {"encoder_layers", c.encoder_layers},
       {"encoder_heads", c.encoder_heads},
       {"decoder_dim", c.decoder_dim},
       {"decoder_layers", c.decoder_layers},
       {"decoder_heads", c.decoder_heads},
       {"decoder_mlp_dim", c.decoder_mlp_dim},
       {"pixel_feature_dim", c.pixel_feature_dim},
       {"text_embed_dim", c.text_embed_dim},
       {"text_layers", c.text_layers},
       {"text_heads", c.text_heads},
       {"hash_buckets", c.hash_buckets},
       {"max_prompt_tokens", c.max_prompt_tokens},
       {"prefix_length", c.prefix_length},
       {"freeze_image_encoder", c.freeze_image_encoder},
       {"freeze_mask_decoder", c.freeze_mask_decoder}};
}

void from_json(const nlohmann::json& j, SegModelConfig& c) {
  c = SegModelConfig::for_profile(j.value("profile", std::string("toy")));
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("image_size", c.image_size);
  read("patch_size", c.patch_size);
  read("image_embed_dim", c.image_embed_dim);
  read("encoder_layers", c.encoder_layers);
  read("encoder_heads", c.encoder_heads);
  read("decoder_dim", c.decoder_dim);
  read("decoder_layers", c.decoder_layers);
  read("decoder_heads", c.decoder_heads);
  read("decoder_mlp_dim", c.decoder_mlp_dim);
  read("pixel_feature_dim", c.pixel_feature_dim);
  read("text_embed_dim", c.text_embed_dim);
  read("text_layers", c.text_layers);
  read("text_heads", c.text_heads);
  read("hash_buckets", c.hash_buckets);
  read("max_prompt_tokens", c.max_prompt_tokens);
  read("prefix_length", c.prefix_length);
  read("freeze_image_encoder", c.freeze_image_encoder);
  read("freeze_mask_decoder", c.freeze_mask_decoder);
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

SegModel::SegModel(SegModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), tokenizer_(config_.hash_buckets) {
  config_.validate();
  const int grid = config_.grid_size();
  const int tokens = grid * grid;
  const int patch_area = config_.patch_size * config_.patch_size;
  const int d_img = config_.image_embed_dim;
  const int d_dec = config_.decoder_dim;
  const int d_txt = config_.text_embed_dim;
  const int c_pix = config_.pixel_feature_dim;

  Rng image_rng(mix_seed(seed, 1));
  const std::string ie = kImageEncoderPrefix;
  patch_embed_ = nn::Linear::create(store_, ie + "patch_embed", patch_area, d_img, image_rng);
  encoder_positions_ = store_.create_normal(ie + "positions", {tokens, d_img}, 1, image_rng, 0.02f);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    encoder_blocks_.push_back(nn::TransformerBlock::create(store_, ie + "block" + std::to_string(l), d_img,
                                                           config_.encoder_heads, 4 * d_img, image_rng));
  }
  neck_norm1_ = nn::LayerNorm::create(store_, ie + "neck_norm1", d_img);
  neck_ = nn::Linear::create(store_, ie + "neck", d_img, d_dec, image_rng);
  neck_norm2_ = nn::LayerNorm::create(store_, ie + "neck_norm2", d_dec);
  stem1_ = nn::Conv2d::create(store_, ie + "stem1", 1, c_pix, 3, 1, 1, image_rng, 3.0f);
  stem2_ = nn::Conv2d::create(store_, ie + "stem2", c_pix, c_pix, 3, 1, 1, image_rng);
  // Spread the first layer's ReLU kinks over the intensity range.
  for (float& b : store_.entries()[std::size_t(stem1_.bias)].var.mutable_value().data) {
    b = static_cast<float>(image_rng.normal(0.0, 1.0));
  }

  Rng prompt_rng(mix_seed(seed, 2));
  const std::string pe = kPromptEncoderPrefix;
  token_table_ = store_.create_normal(pe + "token_embedding", {tokenizer_.vocabulary_size(), d_txt}, 1, prompt_rng, 0.5f);
  if (config_.prefix_length > 0) {
    prefix_ = store_.create_normal(pe + "prefix", {config_.prefix_length, d_txt}, 1, prompt_rng, 0.5f);
  }
  for (int l = 0; l < config_.text_layers; ++l) {
    text_blocks_.push_back(nn::TransformerBlock::create(store_, pe + "block" + std::to_string(l), d_txt,
                                                        config_.text_heads, 4 * d_txt, prompt_rng));
  }
  text_norm_ = nn::LayerNorm::create(store_, pe + "norm", d_txt);
  text_projection_ = nn::Linear::create(store_, pe + "projection", d_txt, d_dec, prompt_rng);

  Rng decoder_rng(mix_seed(seed, 3));
  const std::string md = kMaskDecoderPrefix;
  output_token_ = store_.create_normal(md + "output_token", {1, d_dec}, 1, decoder_rng);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string name = md + "layer" + std::to_string(l);
    DecoderLayer layer;
    layer.self_attention = nn::Attention::create(store_, name + ".self_attn", d_dec, config_.decoder_heads, decoder_rng);
    layer.norm1 = nn::LayerNorm::create(store_, name + ".norm1", d_dec);
    layer.token_to_image = nn::Attention::create(store_, name + ".t2i", d_dec, config_.decoder_heads, decoder_rng);
    layer.norm2 = nn::LayerNorm::create(store_, name + ".norm2", d_dec);
    layer.mlp = nn::Mlp::create(store_, name + ".mlp", d_dec, config_.decoder_mlp_dim, d_dec, decoder_rng);
    layer.norm3 = nn::LayerNorm::create(store_, name + ".norm3", d_dec);
    layer.image_to_token = nn::Attention::create(store_, name + ".i2t", d_dec, config_.decoder_heads, decoder_rng);
    layer.norm4 = nn::LayerNorm::create(store_, name + ".norm4", d_dec);
    decoder_layers_.push_back(layer);
  }
  final_attention_ = nn::Attention::create(store_, md + "final_attn", d_dec, config_.decoder_heads, decoder_rng);
  final_norm_ = nn::LayerNorm::create(store_, md + "final_norm", d_dec);
  hypernetwork_ = nn::Mlp::create(store_, md + "hypernetwork", d_dec, 4 * d_dec, c_pix + 1, decoder_rng);
  upscale_ = nn::Linear::create(store_, md + "upscale", d_dec, c_pix, decoder_rng);
  image_positions_ = nn::sinusoidal_positions(tokens, d_dec);

  store_.set_trainable(kImageEncoderPrefix, !config_.freeze_image_encoder);
  store_.set_trainable(kMaskDecoderPrefix, !config_.freeze_mask_decoder);
}

ImageEmbedding SegModel::encode_image(const ingest::SliceImage& slice) const {
  const int size = config_.image_size;
  if (slice.pixels.height != size || slice.pixels.width != size) {
    throw ConfigError("slice is " + std::to_string(slice.pixels.height) + "x" + std::to_string(slice.pixels.width) +
                      " but the model expects " + std::to_string(size) + "x" + std::to_string(size));
  }
  const Image& input = slice.pixels;
  const int grid = config_.grid_size();
  const int p = config_.patch_size;
  nn::Tensor patches({grid * grid, p * p});
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) patches.at(gy * grid + gx, y * p + x) = input.at(gy * p + y, gx * p + x);
      }
    }
  }
  Var x = add(patch_embed_(store_, Var::constant(std::move(patches))), store_.at(encoder_positions_));
  for (const auto& block : encoder_blocks_) x = block(store_, x);
  x = neck_norm2_(store_, neck_(store_, neck_norm1_(store_, x)));

  Var image = Var::constant(nn::Tensor({1, size, size}, input.pixels));
  Var pixels = nn::relu(stem2_(store_, nn::relu(stem1_(store_, image))));

  ImageEmbedding emb;
  emb.grid = grid;
  emb.height = size;
  emb.width = size;
  emb.tokens = x.value();
  emb.pixel_features = nn::Tensor({config_.pixel_feature_dim, size * size}, pixels.value().data);
  return emb;
}

Var SegModel::encode_prompt(const std::string& prompt) const {
  std::vector<int> ids = tokenizer_.encode(prompt);
  if (ids.empty()) throw InputError("prompt has no tokens");
  if (static_cast<int>(ids.size()) > config_.max_prompt_tokens) ids.resize(config_.max_prompt_tokens);
  Var x = nn::embedding(store_.at(token_table_), ids);
  if (prefix_ >= 0) x = nn::concat_rows({store_.at(prefix_), x});
  x = add(x, Var::constant(nn::sinusoidal_positions(x.value().rows(), config_.text_embed_dim)));
  for (const auto& block : text_blocks_) x = block(store_, x);
  return text_projection_(store_, text_norm_(store_, x));
}

Var SegModel::decode(const ImageEmbedding& embedding, const Var& prompt_features) const {
  const int grid = config_.grid_size();
  if (embedding.grid != grid || embedding.tokens.shape != nn::Shape{grid * grid, config_.decoder_dim} ||
      embedding.pixel_features.shape !=
          nn::Shape{config_.pixel_feature_dim, embedding.height * embedding.width}) {
    throw ContractError("image embedding does not match the decoder configuration");
  }
  if (prompt_features.value().rank() != 2 || prompt_features.value().cols() != config_.decoder_dim) {
    throw ContractError("prompt features must be {tokens, decoder_dim}");
  }
  const Var positions = Var::constant(image_positions_);
  Var tokens = nn::concat_rows({store_.at(output_token_), prompt_features});
  Var image = Var::constant(embedding.tokens);
  for (const DecoderLayer& layer : decoder_layers_) {
    tokens = layer.norm1(store_, add(tokens, layer.self_attention(store_, tokens, tokens, tokens)));
    const Var keyed = add(image, positions);
    tokens = layer.norm2(store_, add(tokens, layer.token_to_image(store_, tokens, keyed, image)));
    tokens = layer.norm3(store_, add(tokens, layer.mlp(store_, tokens)));
    image = layer.norm4(store_, add(image, layer.image_to_token(store_, add(image, positions), tokens, tokens)));
  }
  tokens = final_norm_(store_, add(tokens, final_attention_(store_, tokens, add(image, positions), image)));
  const Var weights = hypernetwork_(store_, nn::slice_rows(tokens, 0, 1));  // {1, C + 1}

  const int c_pix = config_.pixel_feature_dim;
  const int area = embedding.height * embedding.width;
  Var coarse = nn::reshape(nn::transpose(upscale_(store_, image)), {c_pix, grid, grid});
  Var fine = nn::reshape(nn::upsample_bilinear(coarse, embedding.height, embedding.width), {c_pix, area});
  Var features = add(fine, Var::constant(embedding.pixel_features));
  features = nn::concat_rows({features, Var::constant(nn::Tensor({1, area}, 1.0f))});
  return nn::sigmoid(nn::matmul(weights, features));
}

MaskPrediction SegModel::decode_mask(const ImageEmbedding& embedding, const nn::Tensor& prompt_features) const {
  const Var probs = decode(embedding, Var::constant(prompt_features));
  MaskPrediction out;
  out.probabilities = Image(embedding.height, embedding.width);
  out.probabilities.pixels = probs.value().data;
  return out;
}

std::uint64_t SegModel::frozen_checksum() const {
  return store_.checksum(kImageEncoderPrefix) ^ (store_.checksum(kMaskDecoderPrefix) * 0x9E3779B97F4A7C15ULL);
}

}  // namespace lungcadex::cade
