#include "lungcadex/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <spdlog/spdlog.h>

#include "lungcadex/cade/segment.hpp"
#include "lungcadex/cade/train.hpp"
#include "lungcadex/cadx/align.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/eval/evaluate.hpp"
#include "lungcadex/gallery/gallery.hpp"
#include "lungcadex/nn/checkpoint.hpp"
#include "lungcadex/phantom/phantom.hpp"
#include "lungcadex/png_io.hpp"
#include "lungcadex/retrieval/diagnose.hpp"

namespace lungcadex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const UndefinedMetricError*>(&error)) return kExitUndefinedMetric;
  if (dynamic_cast<const TrainingError*>(&error)) return kExitTraining;
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const ParameterError*>(&error) ||
      dynamic_cast<const StateError*>(&error)) {
    return kExitConfig;
  }
  if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const InputError*>(&error) ||
      dynamic_cast<const ValidationError*>(&error)) {
    return kExitData;
  }
  return kExitRuntime;
}

namespace {

struct RunConfig {
  std::string command;
  std::string profile = "toy";
  fs::path manifest;
  fs::path out;
  fs::path config_file;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.7;
  int threads = 1;

  phantom::PhantomSpec phantom;
  cade::SegModelConfig seg_model;
  cade::CadeHyperParams cade;
  cadx::AlignConfig align;
  ingest::PatchOptions patch;

  fs::path cade_checkpoint;
  fs::path cadx_checkpoint;
  fs::path classifier_path;
  fs::path init_weights;

  int k = retrieval::kDefaultK;
  double l2 = 1e-3;
  retrieval::Aggregation aggregation = retrieval::Aggregation::mean;
  double classifier_threshold = 0.5;
  std::string prompt = "nodule";
  double bin_threshold = 0.5;
  int min_component = 4;

  std::vector<std::string> scans;
  fs::path volume;
  bool emit_overlays = false;
  bool malignant_only = false;
  std::string eval_mode = "auto";
  int k_min = 1;
  int k_max = 9;
  bool retrain_per_k = true;

  void apply_profile(const std::string& name) {
    profile = name;
    seg_model = cade::SegModelConfig::for_profile(name);
    cade = name == "paper" ? cade::CadeHyperParams::paper() : cade::CadeHyperParams::toy();
    align = cadx::AlignConfig::for_profile(name);
  }
};

json to_json(const RunConfig& c) {
  json phantom_spec = {{"num_volumes", c.phantom.num_volumes},
                       {"dims", c.phantom.dims},
                       {"nodules_per_volume", c.phantom.nodules_per_volume},
                       {"malignant_fraction", c.phantom.malignant_fraction},
                       {"seed", c.phantom.seed}};
  return {{"command", c.command},
          {"profile", c.profile},
          {"manifest", c.manifest.string()},
          {"out", c.out.string()},
          {"config_file", c.config_file.string()},
          {"seed", c.seed},
          {"split_seed", c.split_seed},
          {"train_fraction", c.train_fraction},
          {"threads", c.threads},
          {"phantom", phantom_spec},
          {"segmentation_model", c.seg_model},
          {"cade", c.cade},
          {"cadx", c.align},
          {"patch", {{"size", c.patch.out_size}, {"margin", c.patch.margin}}},
          {"cade_checkpoint", c.cade_checkpoint.string()},
          {"cadx_checkpoint", c.cadx_checkpoint.string()},
          {"classifier", c.classifier_path.string()},
          {"init_weights", c.init_weights.string()},
          {"k", c.k},
          {"l2", c.l2},
          {"aggregation", retrieval::to_string(c.aggregation)},
          {"classifier_threshold", c.classifier_threshold},
          {"prompt", c.prompt},
          {"bin_threshold", c.bin_threshold},
          {"min_component", c.min_component},
          {"scans", c.scans},
          {"volume", c.volume.string()},
          {"emit_overlays", c.emit_overlays},
          {"malignant_only", c.malignant_only},
          {"eval_mode", c.eval_mode},
          {"k_min", c.k_min},
          {"k_max", c.k_max},
          {"retrain_per_k", c.retrain_per_k}};
}

/// Overlays keys of a JSON config file onto the resolved configuration.
void apply_config_file(RunConfig& c, const json& j) {
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  auto read_path = [&j](const char* key, fs::path& field) {
    if (j.contains(key)) field = j.at(key).get<std::string>();
  };
  read_path("manifest", c.manifest);
  read_path("out", c.out);
  read("seed", c.seed);
  read("split_seed", c.split_seed);
  read("train_fraction", c.train_fraction);
  read("threads", c.threads);
  if (j.contains("phantom")) {
    const json& p = j.at("phantom");
    if (p.contains("num_volumes")) p.at("num_volumes").get_to(c.phantom.num_volumes);
    if (p.contains("dims")) p.at("dims").get_to(c.phantom.dims);
    if (p.contains("nodules_per_volume")) p.at("nodules_per_volume").get_to(c.phantom.nodules_per_volume);
    if (p.contains("malignant_fraction")) p.at("malignant_fraction").get_to(c.phantom.malignant_fraction);
    if (p.contains("seed")) p.at("seed").get_to(c.phantom.seed);
  }
  if (j.contains("segmentation_model")) {
    json merged = c.seg_model;
    merged.update(j.at("segmentation_model"));
    merged["profile"] = c.profile;
    c.seg_model = merged.get<cade::SegModelConfig>();
  }
  if (j.contains("cade")) from_json(j.at("cade"), c.cade);
  if (j.contains("cadx")) {
    json merged = c.align;
    merged.update(j.at("cadx"));
    merged["profile"] = c.profile;
    c.align = merged.get<cadx::AlignConfig>();
  }
  if (j.contains("patch")) {
    const json& p = j.at("patch");
    if (p.contains("size")) p.at("size").get_to(c.patch.out_size);
    if (p.contains("margin")) p.at("margin").get_to(c.patch.margin);
  }
  read_path("cade_checkpoint", c.cade_checkpoint);
  read_path("cadx_checkpoint", c.cadx_checkpoint);
  read_path("classifier", c.classifier_path);
  read_path("init_weights", c.init_weights);
  read("k", c.k);
  read("l2", c.l2);
  if (j.contains("aggregation")) c.aggregation = retrieval::aggregation_from_string(j.at("aggregation").get<std::string>());
  read("classifier_threshold", c.classifier_threshold);
  read("prompt", c.prompt);
  read("bin_threshold", c.bin_threshold);
  read("min_component", c.min_component);
  read("scans", c.scans);
  read_path("volume", c.volume);
  read("emit_overlays", c.emit_overlays);
  read("malignant_only", c.malignant_only);
  read("eval_mode", c.eval_mode);
  read("k_min", c.k_min);
  read("k_max", c.k_max);
  read("retrain_per_k", c.retrain_per_k);
}

struct Outcome {
  json metrics = json::object();
  json artifacts = json::object();
  int exit_code = kExitOk;
};

using Handler = std::function<Outcome(const RunConfig&)>;

/// One subcommand: its CLI11 app, the flag appliers and the handler.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::function<void(RunConfig&)>> appliers;
  std::shared_ptr<std::string> profile = std::make_shared<std::string>();
  CLI::Option* profile_option = nullptr;
  std::shared_ptr<std::string> config_path = std::make_shared<std::string>();
  Handler handler;

  template <typename T, typename Setter>
  CLI::Option* option(const std::string& name, const std::string& help, Setter set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    appliers.push_back([opt, value, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
    return opt;
  }

  template <typename Setter>
  CLI::Option* flag(const std::string& name, const std::string& help, Setter set) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(name, *value, help);
    appliers.push_back([opt, value, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
    return opt;
  }

  RunConfig resolve() const {
    RunConfig c;
    c.command = app->get_name();
    json file;
    if (!config_path->empty()) {
      std::ifstream in(*config_path);
      if (!in) throw ConfigError("config file not found: " + *config_path);
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + *config_path + " is not valid JSON: " + e.what());
      }
      c.config_file = *config_path;
    }
    std::string profile_name = "toy";
    if (file.contains("profile")) profile_name = file.at("profile").get<std::string>();
    if (profile_option && profile_option->count() > 0) profile_name = *profile;
    if (profile_name != "toy" && profile_name != "paper") throw ConfigError("unknown profile: " + profile_name);
    c.apply_profile(profile_name);
    try {
      if (!file.is_null()) apply_config_file(c, file);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + *config_path + ": " + e.what());
    }
    for (const auto& apply : appliers) apply(c);
    return c;
  }
};

void add_common(Command& cmd, bool needs_manifest, bool has_profile) {
  cmd.app->add_option("--config", *cmd.config_path, "JSON config file; explicit flags take precedence");
  cmd.option<std::string>("--out", "Output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  cmd.option<int>("--threads", "Worker threads for inference stages",
                  [](RunConfig& c, int v) { c.threads = v; });
  if (needs_manifest) {
    cmd.option<std::string>("--manifest", "Dataset manifest JSON",
                            [](RunConfig& c, const std::string& v) { c.manifest = v; });
    cmd.option<std::uint64_t>("--split-seed", "Seed of the scan-level train/test split",
                              [](RunConfig& c, std::uint64_t v) { c.split_seed = v; });
    cmd.option<double>("--train-fraction", "Fraction of scans on the training side",
                       [](RunConfig& c, double v) { c.train_fraction = v; });
    cmd.option<int>("--patch-margin", "Pixels added around nodule boxes before cropping patches",
                    [](RunConfig& c, int v) { c.patch.margin = v; });
  }
  if (has_profile) {
    cmd.profile_option = cmd.app->add_option("--profile", *cmd.profile, "Model size profile")
                             ->check(CLI::IsMember({"toy", "paper"}));
  }
}

void add_retrieval_flags(Command& cmd) {
  cmd.option<int>("--k", "Number of retrieved gallery entries", [](RunConfig& c, int v) { c.k = v; });
  cmd.option<std::string>("--aggregation", "mean or similarity_weighted", [](RunConfig& c, const std::string& v) {
    c.aggregation = retrieval::aggregation_from_string(v);
  });
}

void add_stage_paths(Command& cmd, bool cade, bool cadx, bool clf) {
  if (cade) {
    cmd.option<std::string>("--cade", "Segmentation checkpoint",
                            [](RunConfig& c, const std::string& v) { c.cade_checkpoint = v; });
  }
  if (cadx) {
    cmd.option<std::string>("--cadx", "Alignment checkpoint",
                            [](RunConfig& c, const std::string& v) { c.cadx_checkpoint = v; });
  }
  if (clf) {
    cmd.option<std::string>("--classifier", "Classifier JSON",
                            [](RunConfig& c, const std::string& v) { c.classifier_path = v; });
  }
}

void add_init_weights(Command& cmd, const std::string& help) {
  cmd.option<std::string>("--init-weights", help, [](RunConfig& c, const std::string& v) { c.init_weights = v; });
}

void add_segment_flags(Command& cmd) {
  cmd.option<std::string>("--prompt", "Text prompt for segmentation",
                          [](RunConfig& c, const std::string& v) { c.prompt = v; });
  cmd.option<double>("--bin-threshold", "Mask binarization threshold",
                     [](RunConfig& c, double v) { c.bin_threshold = v; });
  cmd.option<int>("--min-component", "Smallest connected component kept, in pixels",
                  [](RunConfig& c, int v) { c.min_component = v; });
}

// ---------------------------------------------------------------------------

fs::path require_out(const RunConfig& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

ingest::Dataset load_dataset(const RunConfig& c) {
  if (c.manifest.empty()) throw ConfigError("--manifest is required");
  return ingest::Dataset::load(c.manifest);
}

ingest::DatasetSplit make_split(const RunConfig& c, const ingest::Dataset& dataset) {
  return ingest::split_by_scan(dataset.scan_ids(), c.train_fraction, c.split_seed);
}

void require_path(const fs::path& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw MissingFileError(std::string(flag) + " file not found: " + path.string());
}

json split_json(const ingest::DatasetSplit& split) {
  return {{"seed", split.seed},
          {"train_fraction", split.train_fraction},
          {"train", std::vector<std::string>(split.train_scan_ids.begin(), split.train_scan_ids.end())},
          {"test", std::vector<std::string>(split.test_scan_ids.begin(), split.test_scan_ids.end())}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const eval::MetricsReport& r) {
  return {{"auc", optional_json(r.auc)},
          {"accuracy", optional_json(r.accuracy)},
          {"sensitivity", optional_json(r.sensitivity)},
          {"specificity", optional_json(r.specificity)},
          {"f1", optional_json(r.f1)},
          {"n_samples", r.n_samples}};
}

Outcome run_phantom(const RunConfig& c) {
  const fs::path out = require_out(c);
  phantom::PhantomSpec spec = c.phantom;
  const phantom::Phantom ph = phantom::generate(spec);
  const fs::path manifest = phantom::write_phantom(ph, out);
  json truth = json::array();
  int malignant = 0;
  for (const auto& t : ph.truth) {
    malignant += t.malignant ? 1 : 0;
    truth.push_back({{"scan_id", t.scan_id},
                     {"nodule_id", t.nodule_id},
                     {"malignant", t.malignant},
                     {"radius", t.radius},
                     {"intensity_hu", t.intensity_hu},
                     {"irregularity", t.irregularity},
                     {"center", t.center},
                     {"mean_malignancy", t.mean_malignancy}});
  }
  write_json(out / "truth.json", truth);
  Outcome o;
  o.metrics = {{"n_volumes", ph.volumes.size()},
               {"n_nodules", ph.truth.size()},
               {"n_malignant", malignant},
               {"n_benign", int(ph.truth.size()) - malignant}};
  o.artifacts = {{"manifest", manifest.string()}, {"truth", (out / "truth.json").string()}};
  return o;
}

Outcome run_ingest_check(const RunConfig& c) {
  const fs::path out = require_out(c);
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  std::size_t nodules = 0, slices = 0, readings = 0;
  for (const auto& scan : dataset.scans()) {
    nodules += scan.nodules.size();
    for (const auto& n : scan.nodules) {
      slices += n.contours.size();
      readings += n.readings.size();
    }
  }
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  const auto test = gallery::build_gallery(dataset, split, ingest::SplitSide::test, c.patch);
  gallery::write_gallery_jsonl(train, out / "gallery_train.jsonl", out / "patches");
  gallery::write_gallery_jsonl(test, out / "gallery_test.jsonl", out / "patches");
  write_json(out / "split.json", split_json(split));
  Outcome o;
  o.metrics = {{"n_scans", dataset.scans().size()},
               {"n_nodules", nodules},
               {"n_contoured_slices", slices},
               {"n_readings", readings},
               {"n_train_scans", split.train_scan_ids.size()},
               {"n_test_scans", split.test_scan_ids.size()},
               {"gallery_train", train.size()},
               {"gallery_test", test.size()},
               {"excluded", train.excluded + test.excluded},
               {"skipped_without_readings", train.skipped_without_readings + test.skipped_without_readings}};
  o.artifacts = {{"gallery_train", (out / "gallery_train.jsonl").string()},
                 {"gallery_test", (out / "gallery_test.jsonl").string()},
                 {"split", (out / "split.json").string()}};
  return o;
}

Outcome run_train_cade(const RunConfig& c) {
  const fs::path out = require_out(c);
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  cade::CadeHyperParams hyper = c.cade;
  hyper.seed = c.seed;
  hyper.validate();
  c.seg_model.validate();

  cade::TrainState state(c.seg_model, cade::PromptSuite::standard(), c.seed);
  std::size_t imported = 0;
  if (!c.init_weights.empty()) {
    require_path(c.init_weights, "--init-weights");
    imported = nn::import_parameters(c.init_weights, state.model.parameters(),
                                     {cade::kImageEncoderPrefix, cade::kMaskDecoderPrefix});
    spdlog::info("train-cade: imported {} tensors from {}", imported, c.init_weights.string());
  }
  const std::uint64_t frozen_before = state.model.frozen_checksum();
  const auto slices = cade::collect_training_slices(dataset, split.train_scan_ids, c.seg_model.image_size, hyper);
  spdlog::info("train-cade: {} training slices, {} epochs", slices.size(), hyper.epochs);
  const int report_every = std::max(1, hyper.epochs / 10);
  cade::train_cade(state, slices, hyper, [&](const cade::EpochLoss& e) {
    if (e.epoch % report_every == 0 || e.epoch == hyper.epochs) {
      spdlog::info("cade epoch {}/{} loss {:.5f} (bce {:.5f}, dice {:.5f})", e.epoch, hyper.epochs, e.total, e.bce,
                   e.dice);
    }
  });
  const std::uint64_t frozen_after = state.model.frozen_checksum();

  cade::save_cade(out / "cade.ckpt", state);
  cade::write_training_log(out / "cade_log.csv", state.history);

  Outcome o;
  o.metrics = {{"n_train_slices", slices.size()},
               {"epochs", state.epoch},
               {"frozen_checksum_before", cade::to_hex(frozen_before)},
               {"frozen_checksum_after", cade::to_hex(frozen_after)},
               {"frozen_unchanged", frozen_before == frozen_after},
               {"imported_tensors", imported}};
  if (!state.history.empty()) {
    o.metrics["final_loss"] = state.history.back().total;
    o.metrics["final_bce"] = state.history.back().bce;
    o.metrics["final_dice_loss"] = state.history.back().dice;
  }
  if (!split.test_scan_ids.empty()) {
    const auto seg = eval::evaluate_segmentation(dataset, split.test_scan_ids, state.model, c.prompt,
                                                 c.bin_threshold, c.threads);
    o.metrics["heldout_dice"] = seg.pooled_dice;
    o.metrics["heldout_mean_dice"] = seg.mean_dice;
    o.metrics["heldout_slices"] = seg.n_slices;
  }
  o.artifacts = {{"checkpoint", (out / "cade.ckpt").string()}, {"log", (out / "cade_log.csv").string()}};
  return o;
}

void write_align_log(const fs::path& path, const std::vector<cadx::AlignEpoch>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,ce,rce,total\n";
  out.precision(9);
  for (const auto& row : history) out << row.epoch << ',' << row.ce << ',' << row.rce << ',' << row.total << '\n';
}

Outcome run_train_cadx(const RunConfig& c) {
  const fs::path out = require_out(c);
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  cadx::AlignConfig config = c.align;
  config.seed = c.seed;
  spdlog::info("train-cadx: {} gallery pairs, {} epochs", train.size(), config.epochs);
  const int report_every = std::max(1, config.epochs / 10);
  config.validate();
  cadx::AlignedEncoders enc(config, config.seed);
  std::size_t imported = 0;
  if (!c.init_weights.empty()) {
    require_path(c.init_weights, "--init-weights");
    imported = nn::import_parameters(c.init_weights, enc.parameters(),
                                     {cadx::kPatchEncoderPrefix});
    spdlog::info("train-cadx: imported {} tensors from {}", imported, c.init_weights.string());
  }
  cadx::train_cadx(enc, train, [&](const cadx::AlignEpoch& e) {
    if (e.epoch % report_every == 0 || e.epoch == config.epochs) {
      spdlog::info("cadx epoch {}/{} loss {:.5f} (ce {:.5f}, rce {:.5f})", e.epoch, config.epochs, e.total, e.ce,
                   e.rce);
    }
  });
  cadx::save_cadx(out / "cadx.ckpt", enc);
  write_align_log(out / "cadx_log.csv", enc.history);
  gallery::write_gallery_jsonl(train, out / "gallery.jsonl", out / "patches");

  Outcome o;
  o.metrics = {{"gallery_size", train.size()}, {"epochs", enc.epoch}, {"imported_tensors", imported}};
  if (!enc.history.empty()) o.metrics["final_loss"] = enc.history.back().total;
  if (train.size() >= 2) o.metrics["alignment_gap_train"] = cadx::alignment_gap(enc, train);
  const auto test = gallery::build_gallery(dataset, split, ingest::SplitSide::test, c.patch);
  if (test.size() >= 2) o.metrics["alignment_gap_test"] = cadx::alignment_gap(enc, test);
  o.artifacts = {{"checkpoint", (out / "cadx.ckpt").string()},
                 {"log", (out / "cadx_log.csv").string()},
                 {"gallery", (out / "gallery.jsonl").string()}};
  return o;
}

Outcome run_train_clf(const RunConfig& c) {
  const fs::path out = require_out(c);
  require_path(c.cadx_checkpoint, "--cadx");
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  const cadx::AlignedEncoders enc = cadx::load_cadx(c.cadx_checkpoint);
  retrieval::LinearClassifier clf = retrieval::train_classifier(enc, train, c.k, c.aggregation, c.l2);
  clf.threshold = c.classifier_threshold;
  retrieval::save_classifier(out / "classifier.json", clf);

  const auto set = retrieval::retrieval_training_set(enc, train, c.k, c.aggregation);
  std::vector<double> scores;
  for (const auto& x : set.features) scores.push_back(clf.probability(x));
  const eval::MetricsReport fit = eval::metrics_report(scores, set.labels, clf.threshold);
  Outcome o;
  o.metrics = {{"k", c.k}, {"n_train", set.labels.size()}, {"train", metrics_json(fit)}};
  o.artifacts = {{"classifier", (out / "classifier.json").string()}};
  return o;
}

/// Slice as grey, ground truth white, prediction green.
void write_overlay(const fs::path& path, const ingest::SliceImage& slice, const Mask& predicted, const Mask* truth) {
  const int h = slice.pixels.height, w = slice.pixels.width;
  std::vector<std::uint8_t> rgb(std::size_t(h) * w * 3);
  for (std::size_t i = 0; i < std::size_t(h) * w; ++i) {
    const auto grey = static_cast<std::uint8_t>(std::lround(std::clamp(slice.pixels.pixels[i], 0.0f, 1.0f) * 255.0f));
    std::uint8_t r = grey, g = grey, b = grey;
    if (truth && truth->bits[i]) r = g = b = 255;
    if (predicted.bits[i]) {
      r = std::uint8_t(r / 3);
      g = 255;
      b = std::uint8_t(b / 3);
    }
    rgb[3 * i] = r;
    rgb[3 * i + 1] = g;
    rgb[3 * i + 2] = b;
  }
  write_png_rgb(path, h, w, rgb);
}

Outcome run_diagnose(const RunConfig& c) {
  const fs::path out = require_out(c);
  require_path(c.cade_checkpoint, "--cade");
  require_path(c.cadx_checkpoint, "--cadx");
  require_path(c.classifier_path, "--classifier");
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  const cade::TrainState state = cade::load_cade(c.cade_checkpoint);
  const cadx::AlignedEncoders enc = cadx::load_cadx(c.cadx_checkpoint);
  const retrieval::LinearClassifier clf = retrieval::load_classifier(c.classifier_path);
  const retrieval::DiagnosisPipeline pipeline(state, enc, train, clf);

  retrieval::DiagnoseOptions options;
  options.k = c.k;
  options.prompt = c.prompt;
  options.segment.bin_threshold = c.bin_threshold;
  options.segment.min_component_pixels = c.min_component;
  options.segment.patch = c.patch;
  options.threads = c.threads;

  struct Target {
    std::string scan_id;
    ingest::CTVolume windowed;
    bool has_truth;
  };
  std::vector<Target> targets;
  if (!c.volume.empty()) {
    if (!fs::exists(c.volume)) throw MissingFileError("volume not found: " + c.volume.string());
    ingest::CTVolume v = ingest::read_volume(c.volume, c.volume.stem().string());
    ingest::clamp_hounsfield(v);
    targets.push_back({v.scan_id, ingest::window_normalize(v), false});
  } else {
    std::vector<std::string> ids = c.scans;
    if (ids.empty()) ids.assign(split.test_scan_ids.begin(), split.test_scan_ids.end());
    for (const auto& id : ids) targets.push_back({id, ingest::window_normalize(dataset.load_volume(id)), true});
  }

  std::vector<retrieval::Diagnosis> all;
  int overlays = 0;
  std::size_t candidates = 0;
  for (const Target& t : targets) {
    const auto slices = ingest::extract_slices(t.windowed);
    for (const auto& slice : slices) {
      const cade::Segmentation seg = cade::segment(state.model, slice, options.prompt, options.segment);
      const auto found = pipeline.diagnose_candidates(slice, seg, options);
      candidates += found.size();
      for (const auto& d : found) {
        if (!c.malignant_only || d.cls == gallery::MalignancyClass::malignant) all.push_back(d);
      }
      if (c.emit_overlays) {
        std::optional<Mask> truth;
        if (t.has_truth) truth = dataset.slice_mask(t.scan_id, slice.slice_index);
        const Mask predicted = cade::binarize(seg.mask.probabilities, options.segment.bin_threshold);
        if (predicted.count() > 0 || (truth && truth->count() > 0)) {
          fs::create_directories(out / "overlays");
          write_overlay(out / "overlays" / (t.scan_id + "_z" + std::to_string(slice.slice_index) + ".png"), slice,
                        predicted, truth ? &*truth : nullptr);
          ++overlays;
        }
      }
    }
  }
  retrieval::write_diagnoses_jsonl(out / "diagnoses.jsonl", all);
  std::size_t malignant = 0;
  for (const auto& d : all) malignant += d.cls == gallery::MalignancyClass::malignant ? 1 : 0;
  Outcome o;
  o.metrics = {{"n_scans", targets.size()},
               {"n_candidates", candidates},
               {"n_written", all.size()},
               {"n_malignant", malignant},
               {"n_overlays", overlays}};
  o.artifacts = {{"diagnoses", (out / "diagnoses.jsonl").string()}};
  if (overlays > 0) o.artifacts["overlays"] = (out / "overlays").string();
  return o;
}

Outcome run_evaluate(const RunConfig& c) {
  const fs::path out = require_out(c);
  require_path(c.cadx_checkpoint, "--cadx");
  require_path(c.classifier_path, "--classifier");
  if (c.eval_mode != "auto" && c.eval_mode != "gt" && c.eval_mode != "both") {
    throw ConfigError("--mode must be gt, auto or both");
  }
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  const auto test = gallery::build_gallery(dataset, split, ingest::SplitSide::test, c.patch);
  const cadx::AlignedEncoders enc = cadx::load_cadx(c.cadx_checkpoint);
  const retrieval::LinearClassifier clf = retrieval::load_classifier(c.classifier_path);

  const bool with_cade = !c.cade_checkpoint.empty();
  if (with_cade) require_path(c.cade_checkpoint, "--cade");
  if (c.eval_mode == "both" && !with_cade) throw ConfigError("--mode both needs --cade");
  const bool run_automatic = with_cade && c.eval_mode != "gt";

  const eval::Evaluation gt = eval::evaluate(test, enc, train, clf, c.k, c.threads);
  const std::string name = "Ours(N=" + std::to_string(gt.report.n_samples) + ")";
  std::vector<std::pair<std::string, eval::MetricsReport>> rows{{name + " ground-truth patches", gt.report}};
  json report = {{"header", {{"modes", json::array({eval::to_string(gt.mode)})}, {"k", c.k}}},
                 {"ground_truth_patches", gt}};
  Outcome o;
  o.metrics = metrics_json(gt.report);
  o.metrics["k"] = c.k;

  if (with_cade) {
    const cade::TrainState state = cade::load_cade(c.cade_checkpoint);
    const auto seg = eval::evaluate_segmentation(dataset, split.test_scan_ids, state.model, c.prompt,
                                                 c.bin_threshold, c.threads);
    report["segmentation"] = seg;
    o.metrics["dice"] = seg.pooled_dice;
    o.metrics["mean_slice_dice"] = seg.mean_dice;
    if (run_automatic) {
      const retrieval::DiagnosisPipeline pipeline(state, enc, train, clf);
      retrieval::DiagnoseOptions options;
      options.k = c.k;
      options.prompt = c.prompt;
      options.segment.bin_threshold = c.bin_threshold;
      options.segment.min_component_pixels = c.min_component;
      options.segment.patch = c.patch;
      options.threads = c.threads;
      const eval::Evaluation automatic = eval::evaluate_automatic(dataset, test, pipeline, options);
      report["automatic"] = automatic;
      report["header"]["modes"].push_back(eval::to_string(automatic.mode));
      rows.emplace_back(name + " automatic", automatic.report);
      o.metrics["automatic"] = metrics_json(automatic.report);
      if (!automatic.report.all_defined()) o.exit_code = kExitUndefinedMetric;
    }
  }
  const std::string table = eval::format_metrics_table("Test results on held-out phantom scans", rows);
  report["table"] = table;
  write_json(out / "report.json", report);
  write_text(out / "report.txt", table);
  std::cout << table;
  if (!gt.report.all_defined()) o.exit_code = kExitUndefinedMetric;
  o.artifacts = {{"report", (out / "report.json").string()}, {"table", (out / "report.txt").string()}};
  return o;
}

Outcome run_ablate(const RunConfig& c) {
  const fs::path out = require_out(c);
  require_path(c.cadx_checkpoint, "--cadx");
  const ingest::Dataset dataset = load_dataset(c);
  const ingest::DatasetSplit split = make_split(c, dataset);
  const auto train = gallery::build_gallery(dataset, split, ingest::SplitSide::train, c.patch);
  const auto test = gallery::build_gallery(dataset, split, ingest::SplitSide::test, c.patch);
  const cadx::AlignedEncoders enc = cadx::load_cadx(c.cadx_checkpoint);
  retrieval::LinearClassifier clf;
  if (!c.classifier_path.empty()) {
    require_path(c.classifier_path, "--classifier");
    clf = retrieval::load_classifier(c.classifier_path);
  } else if (!c.retrain_per_k) {
    throw ConfigError("--no-retrain needs --classifier");
  }
  clf.threshold = c.classifier_path.empty() ? c.classifier_threshold : clf.threshold;

  eval::AblationOptions options;
  options.k_min = c.k_min;
  options.k_max = c.k_max;
  options.retrain_classifier = c.retrain_per_k;
  options.l2 = c.l2;
  options.aggregation = c.aggregation;
  options.threads = c.threads;
  const eval::AblationTable table = eval::ablate_k(test, enc, train, clf, options);
  const std::string text = eval::format_ablation_table(table);
  json report = table;
  report["table"] = text;
  write_json(out / "ablation.json", report);
  write_text(out / "ablation.txt", text);
  std::cout << text;

  Outcome o;
  json columns = json::object();
  for (std::size_t i = 0; i < table.ks.size(); ++i) {
    columns[std::to_string(table.ks[i])] = metrics_json(table.reports[i]);
    if (!table.reports[i].all_defined()) o.exit_code = kExitUndefinedMetric;
  }
  o.metrics = {{"k_min", c.k_min}, {"k_max", c.k_max}, {"columns", columns}};
  o.artifacts = {{"report", (out / "ablation.json").string()}, {"table", (out / "ablation.txt").string()}};
  return o;
}

int execute(const Command& cmd) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig config;
  try {
    config = cmd.resolve();
    Outcome outcome = cmd.handler(config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json summary = {{"command", config.command},
                          {"config", to_json(config)},
                          {"metrics", outcome.metrics},
                          {"artifacts", outcome.artifacts},
                          {"exit_code", outcome.exit_code},
                          {"wall_time_seconds", seconds}};
    write_json(config.out / "summary.json", summary);
    if (outcome.exit_code == kExitUndefinedMetric) spdlog::error("{}: at least one metric is undefined", config.command);
    return outcome.exit_code;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    spdlog::error("{}: {}", cmd.app->get_name(), e.what());
    if (!config.out.empty() && fs::is_directory(config.out)) {
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      try {
        write_json(config.out / "summary.json", {{"command", config.command},
                                                 {"config", to_json(config)},
                                                 {"error", e.what()},
                                                 {"exit_code", code},
                                                 {"wall_time_seconds", seconds}});
      } catch (const std::exception&) {
      }
    }
    return code;
  }
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Text-prompted lung nodule segmentation and retrieval-based malignancy diagnosis"};
  app.name("lungcadex");
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help, Handler handler) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->app->fallthrough();
    cmd->handler = std::move(handler);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  {
    Command& cmd = add("phantom", "Generate synthetic CT volumes with annotated nodules", run_phantom);
    add_common(cmd, false, false);
    cmd.option<int>("--volumes", "Number of volumes", [](RunConfig& c, int v) { c.phantom.num_volumes = v; });
    cmd.option<int>("--nodules-per-volume", "Nodules inserted per volume",
                    [](RunConfig& c, int v) { c.phantom.nodules_per_volume = v; });
    cmd.option<int>("--depth", "Slices per volume", [](RunConfig& c, int v) { c.phantom.dims[0] = v; });
    cmd.option<int>("--size", "In-plane size in pixels", [](RunConfig& c, int v) {
      c.phantom.dims[1] = v;
      c.phantom.dims[2] = v;
    });
    cmd.option<double>("--malignant-fraction", "Share of malignant-class nodules",
                       [](RunConfig& c, double v) { c.phantom.malignant_fraction = v; });
    cmd.option<std::uint64_t>("--seed", "Generator seed", [](RunConfig& c, std::uint64_t v) { c.phantom.seed = v; });
  }
  {
    Command& cmd = add("ingest-check", "Validate a manifest, split it and build both galleries", run_ingest_check);
    add_common(cmd, true, false);
  }
  {
    Command& cmd = add("train-cade", "Prefix-tune the segmentation prompt encoder", run_train_cade);
    add_common(cmd, true, true);
    add_segment_flags(cmd);
    cmd.option<std::uint64_t>("--seed", "Model and sampling seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    cmd.option<int>("--epochs", "Training epochs", [](RunConfig& c, int v) { c.cade.epochs = v; });
    cmd.option<double>("--lr", "Learning rate", [](RunConfig& c, double v) { c.cade.learning_rate = v; });
    cmd.option<int>("--batch", "Batch size", [](RunConfig& c, int v) { c.cade.batch_size = v; });
    cmd.option<double>("--weight-decay", "Decoupled weight decay",
                       [](RunConfig& c, double v) { c.cade.weight_decay = v; });
    cmd.option<int>("--prefix-length", "Trainable prefix tokens",
                    [](RunConfig& c, int v) { c.seg_model.prefix_length = v; });
    cmd.flag("--include-negatives", "Also train on slices without nodules",
             [](RunConfig& c, bool v) { c.cade.include_negatives = v; });
    cmd.option<double>("--negative-ratio", "Negative slices per positive slice",
                       [](RunConfig& c, double v) { c.cade.negative_ratio = v; });
    add_init_weights(cmd, "Archive of image-encoder and mask-decoder weights to start from");
  }
  {
    Command& cmd = add("train-cadx", "Contrastively align patch and radiomic embeddings", run_train_cadx);
    add_common(cmd, true, true);
    cmd.option<std::uint64_t>("--seed", "Model and sampling seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    cmd.option<int>("--epochs", "Training epochs", [](RunConfig& c, int v) { c.align.epochs = v; });
    cmd.option<double>("--lr", "Learning rate", [](RunConfig& c, double v) { c.align.learning_rate = v; });
    cmd.option<int>("--batch", "Batch size", [](RunConfig& c, int v) { c.align.batch_size = v; });
    cmd.option<double>("--weight-decay", "Decoupled weight decay",
                       [](RunConfig& c, double v) { c.align.weight_decay = v; });
    cmd.option<double>("--temperature", "Softmax temperature", [](RunConfig& c, double v) { c.align.temperature = v; });
    cmd.option<double>("--alpha", "Cross-entropy weight", [](RunConfig& c, double v) { c.align.alpha = v; });
    cmd.option<double>("--beta", "Reverse cross-entropy weight", [](RunConfig& c, double v) { c.align.beta = v; });
    cmd.option<int>("--joint-dim", "Shared embedding width", [](RunConfig& c, int v) { c.align.joint_dim = v; });
    add_init_weights(cmd, "Archive of patch-encoder weights to start from");
  }
  {
    Command& cmd = add("train-clf", "Fit the linear classifier on retrieved training features", run_train_clf);
    add_common(cmd, true, false);
    add_stage_paths(cmd, false, true, false);
    add_retrieval_flags(cmd);
    cmd.option<double>("--l2", "L2 penalty", [](RunConfig& c, double v) { c.l2 = v; });
    cmd.option<double>("--threshold", "Decision threshold on the malignant probability",
                       [](RunConfig& c, double v) { c.classifier_threshold = v; });
  }
  {
    Command& cmd = add("diagnose", "Segment, retrieve and classify nodule candidates", run_diagnose);
    add_common(cmd, true, false);
    add_stage_paths(cmd, true, true, true);
    add_retrieval_flags(cmd);
    add_segment_flags(cmd);
    cmd.option<std::vector<std::string>>("--scan", "Scan id from the manifest (repeatable; default: test split)",
                                         [](RunConfig& c, const std::vector<std::string>& v) { c.scans = v; });
    cmd.option<std::string>("--volume", "Raw int16 volume with sidecar header, instead of manifest scans",
                            [](RunConfig& c, const std::string& v) { c.volume = v; });
    cmd.flag("--emit-overlays", "Write PNG overlays: prediction green, ground truth white",
             [](RunConfig& c, bool v) { c.emit_overlays = v; });
    cmd.flag("--malignant-only", "Drop benign candidates from the output",
             [](RunConfig& c, bool v) { c.malignant_only = v; });
  }
  {
    Command& cmd = add("evaluate", "Classification metrics and segmentation Dice on the test split", run_evaluate);
    add_common(cmd, true, false);
    add_stage_paths(cmd, true, true, true);
    add_retrieval_flags(cmd);
    add_segment_flags(cmd);
    cmd.option<std::string>("--mode", "gt, auto (adds the automatic mode when --cade is given) or both",
                            [](RunConfig& c, const std::string& v) { c.eval_mode = v; })
        ->check(CLI::IsMember({"gt", "auto", "both"}));
  }
  {
    Command& cmd = add("ablate", "Metrics for each k in a range", run_ablate);
    add_common(cmd, true, false);
    add_stage_paths(cmd, false, true, true);
    cmd.option<int>("--k-min", "Smallest k", [](RunConfig& c, int v) { c.k_min = v; });
    cmd.option<int>("--k-max", "Largest k", [](RunConfig& c, int v) { c.k_max = v; });
    cmd.flag("--no-retrain", "Reuse the given classifier for every k instead of refitting",
             [](RunConfig& c, bool v) { c.retrain_per_k = !v; });
    cmd.option<std::string>("--aggregation", "mean or similarity_weighted", [](RunConfig& c, const std::string& v) {
      c.aggregation = retrieval::aggregation_from_string(v);
    });
    cmd.option<double>("--l2", "L2 penalty for refitted classifiers", [](RunConfig& c, double v) { c.l2 = v; });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  for (const auto& cmd : commands) {
    if (cmd->app->parsed()) return execute(*cmd);
  }
  return kExitUsage;
}

}  // namespace lungcadex::cli
