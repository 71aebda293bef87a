#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "lungcadex/gallery/radiomics.hpp"
#include "lungcadex/ingest/manifest.hpp"

namespace lungcadex::gallery {

struct GalleryEntry {
  std::string scan_id;
  std::string nodule_id;
  RadiomicFeatureVector features;
  MalignancyLabel label;
  ingest::NodulePatch patch;
  BBox bbox;  // box on the median slice the patch was cut from
};

/// Retrieval classes for diagnosis. Never holds excluded entries; nodule ids are unique.
class FeatureGallery {
 public:
  FeatureGallery() = default;
  explicit FeatureGallery(std::vector<GalleryEntry> entries);

  const std::vector<GalleryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const GalleryEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// Nodules dropped because they had no readings.
  int skipped_without_readings = 0;
  /// Nodules dropped by the exclusion rule (mean malignancy of exactly 3).
  int excluded = 0;

 private:
  std::vector<GalleryEntry> entries_;
};

/// One entry per non-excluded nodule of the given scans, with the patch cut from the
/// lower-median contoured slice. Entries are ordered by (scan_id, nodule_id).
FeatureGallery build_gallery(const ingest::Dataset& dataset, const std::set<std::string>& scan_ids,
                             const ingest::PatchOptions& patch_options = {});
FeatureGallery build_gallery(const ingest::Dataset& dataset, const ingest::DatasetSplit& split,
                             ingest::SplitSide side, const ingest::PatchOptions& patch_options = {});

/// JSON-lines, one entry per line:
/// {nodule_id, scan_id, features:{name: value}, malignancy_raw, label, slice_index, bbox, patch_path}.
/// Patches are written as raw little-endian float32 files under patch_dir.
void write_gallery_jsonl(const FeatureGallery& gallery, const std::filesystem::path& jsonl_path,
                         const std::filesystem::path& patch_dir);
FeatureGallery read_gallery_jsonl(const std::filesystem::path& jsonl_path);

}  // namespace lungcadex::gallery
