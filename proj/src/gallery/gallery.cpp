#include "lungcadex/gallery/gallery.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>

#include "lungcadex/errors.hpp"

namespace lungcadex::gallery {
namespace fs = std::filesystem;
using nlohmann::json;

FeatureGallery::FeatureGallery(std::vector<GalleryEntry> entries) : entries_(std::move(entries)) {
  std::set<std::string> ids;
  for (const GalleryEntry& e : entries_) {
    if (e.label.cls == MalignancyClass::excluded) {
      throw InputError("gallery entry " + e.nodule_id + " carries the excluded label");
    }
    if (!ids.insert(e.nodule_id).second) throw InputError("duplicate nodule id in gallery: " + e.nodule_id);
  }
}

FeatureGallery build_gallery(const ingest::Dataset& dataset, const std::set<std::string>& scan_ids,
                             const ingest::PatchOptions& patch_options) {
  std::vector<GalleryEntry> entries;
  int skipped = 0;
  int excluded = 0;
  std::vector<const ingest::NoduleAnnotation*> nodules;
  for (const std::string& scan_id : scan_ids) {
    for (const ingest::NoduleAnnotation& ann : dataset.scan(scan_id).nodules) nodules.push_back(&ann);
  }
  std::sort(nodules.begin(), nodules.end(), [](const auto* a, const auto* b) {
    return std::tie(a->scan_id, a->nodule_id) < std::tie(b->scan_id, b->nodule_id);
  });

  std::string loaded_scan;
  std::vector<ingest::SliceImage> slices;
  for (const ingest::NoduleAnnotation* ann : nodules) {
    if (ann->readings.empty()) {
      spdlog::warn("nodule {} in scan {} has no readings; skipped", ann->nodule_id, ann->scan_id);
      ++skipped;
      continue;
    }
    const ConsolidatedReading reading = consolidate_readings(ann->readings);
    const MalignancyLabel label = derive_label(reading.malignancy);
    if (label.cls == MalignancyClass::excluded) {
      ++excluded;
      continue;
    }
    if (ann->scan_id != loaded_scan) {
      slices = ingest::extract_slices(ingest::window_normalize(dataset.load_volume(ann->scan_id)));
      loaded_scan = ann->scan_id;
    }
    const int median = ann->median_slice();
    const ingest::SliceContour& contour = ann->contour_at(median);
    GalleryEntry entry{ann->scan_id, ann->nodule_id, reading.features, label,
                       ingest::extract_patch(slices.at(median), contour.bbox, patch_options), contour.bbox};
    entry.patch.nodule_id = ann->nodule_id;
    entries.push_back(std::move(entry));
  }
  FeatureGallery gallery(std::move(entries));
  gallery.skipped_without_readings = skipped;
  gallery.excluded = excluded;
  return gallery;
}

FeatureGallery build_gallery(const ingest::Dataset& dataset, const ingest::DatasetSplit& split,
                             ingest::SplitSide side, const ingest::PatchOptions& patch_options) {
  return build_gallery(dataset, side == ingest::SplitSide::train ? split.train_scan_ids : split.test_scan_ids,
                       patch_options);
}

void write_gallery_jsonl(const FeatureGallery& gallery, const fs::path& jsonl_path, const fs::path& patch_dir) {
  fs::create_directories(patch_dir);
  if (jsonl_path.has_parent_path()) fs::create_directories(jsonl_path.parent_path());
  std::ofstream out(jsonl_path);
  if (!out) throw DataError("cannot write gallery: " + jsonl_path.string());
  const fs::path base = fs::absolute(jsonl_path).parent_path();
  for (const GalleryEntry& e : gallery.entries()) {
    const fs::path patch_path = patch_dir / (e.nodule_id + ".f32");
    {
      std::ofstream pout(patch_path, std::ios::binary);
      pout.write(reinterpret_cast<const char*>(e.patch.pixels.pixels.data()),
                 static_cast<std::streamsize>(e.patch.pixels.pixels.size() * sizeof(float)));
    }
    json features = json::object();
    for (int i = 0; i < kFeatureCount; ++i) features[std::string(kFeatureNames[i])] = e.features[i];
    const json line = {{"nodule_id", e.nodule_id},
                       {"scan_id", e.scan_id},
                       {"features", features},
                       {"malignancy_raw", e.label.raw_score},
                       {"label", to_string(e.label.cls)},
                       {"slice_index", e.patch.slice_index},
                       {"bbox", {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1}},
                       {"patch_size", e.patch.pixels.height},
                       {"patch_path", fs::absolute(patch_path).lexically_relative(base).generic_string()}};
    out << line.dump() << '\n';
  }
}

FeatureGallery read_gallery_jsonl(const fs::path& jsonl_path) {
  if (!fs::exists(jsonl_path)) throw MissingFileError("gallery not found: " + jsonl_path.string());
  std::ifstream in(jsonl_path);
  const fs::path base = fs::absolute(jsonl_path).parent_path();
  std::vector<GalleryEntry> entries;
  std::string text;
  int line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    const std::string where = jsonl_path.string() + ":" + std::to_string(line_no);
    try {
      const json line = json::parse(text);
      GalleryEntry e;
      e.nodule_id = line.at("nodule_id").get<std::string>();
      e.scan_id = line.at("scan_id").get<std::string>();
      for (const auto& [name, value] : line.at("features").items()) {
        const auto index = feature_index(name);
        if (!index) throw SchemaError(where + ": unknown feature " + name);
        e.features[*index] = value.get<double>();
      }
      if (line.at("features").size() != kFeatureCount) throw SchemaError(where + ": expected eight features");
      e.label = derive_label(line.at("malignancy_raw").get<double>());
      if (e.label.cls != malignancy_class_from_string(line.at("label").get<std::string>())) {
        throw SchemaError(where + ": label disagrees with malignancy_raw");
      }
      const auto box = line.at("bbox").get<std::vector<int>>();
      if (box.size() != 4) throw SchemaError(where + ": bbox must have four entries");
      e.bbox = BBox{box[0], box[1], box[2], box[3]};
      const int size = line.at("patch_size").get<int>();
      e.patch.nodule_id = e.nodule_id;
      e.patch.slice_index = line.at("slice_index").get<int>();
      e.patch.pixels = Image(size, size);
      const fs::path patch_path = base / line.at("patch_path").get<std::string>();
      if (!fs::exists(patch_path)) throw DanglingReferenceError(where + ": patch file not found");
      std::ifstream pin(patch_path, std::ios::binary);
      pin.read(reinterpret_cast<char*>(e.patch.pixels.pixels.data()),
               static_cast<std::streamsize>(e.patch.pixels.pixels.size() * sizeof(float)));
      if (!pin) throw SchemaError(where + ": truncated patch file");
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw SchemaError(where + ": " + ex.what());
    }
  }
  return FeatureGallery(std::move(entries));
}

}  // namespace lungcadex::gallery
