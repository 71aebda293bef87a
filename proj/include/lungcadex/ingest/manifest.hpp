#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lungcadex/gallery/radiomics.hpp"
#include "lungcadex/image.hpp"
#include "lungcadex/ingest/volume.hpp"

namespace lungcadex::ingest {

struct SliceContour {
  int slice_index = 0;
  Mask mask;
  BBox bbox;
};

struct NoduleAnnotation {
  std::string scan_id;
  std::string nodule_id;
  std::vector<SliceContour> contours;  // strictly increasing slice_index
  std::vector<gallery::RadiomicReading> readings;

  std::vector<int> slice_indices() const;
  const SliceContour& contour_at(int slice_index) const;
  /// Lower-median contoured slice.
  int median_slice() const;
};

int median_nodule_slice(const NoduleAnnotation& annotation);

struct ScanRecord {
  std::string scan_id;
  std::filesystem::path volume_path;  // absolute after loading
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<NoduleAnnotation> nodules;
};

/// Read-only view of a manifest. Volumes are read from disk on demand.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& manifest_path);
  static Dataset from_records(std::vector<ScanRecord> records, std::filesystem::path root = {});

  const std::vector<ScanRecord>& scans() const { return scans_; }
  std::vector<std::string> scan_ids() const;
  const ScanRecord& scan(const std::string& scan_id) const;
  const std::filesystem::path& manifest_path() const { return manifest_path_; }

  /// Reads the raw volume (HU, clamped to the 12-bit range).
  CTVolume load_volume(const std::string& scan_id) const;

  /// Union of all nodule masks on one slice.
  Mask slice_mask(const std::string& scan_id, int slice_index) const;

 private:
  std::filesystem::path manifest_path_;
  std::vector<ScanRecord> scans_;
  std::map<std::string, std::size_t> index_;
};

/// Raw little-endian int16 voxels plus the sidecar header next to it.
void write_volume(const std::filesystem::path& raw_path, const CTVolume& volume);
CTVolume read_volume(const std::filesystem::path& raw_path, const std::string& scan_id);
std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

/// Serializes records; volume paths are written relative to the manifest directory
/// when they live below it. Masks are stored as RLE text.
void write_manifest(const std::filesystem::path& manifest_path, const std::vector<ScanRecord>& scans);

}  // namespace lungcadex::ingest
