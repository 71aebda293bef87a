#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "lungcadex/image.hpp"

namespace lungcadex::ingest {

inline constexpr float kMinHounsfield = -1024.0f;
inline constexpr float kMaxHounsfield = 3071.0f;
inline constexpr double kDefaultWindowLevel = 40.0;
inline constexpr double kDefaultWindowWidth = 400.0;
inline constexpr int kPatchSize = 96;

/// Voxel grid indexed (z, y, x). Holds Hounsfield units after loading and
/// unit-interval intensities after window_normalize.
struct CTVolume {
  std::string scan_id;
  std::array<int, 3> dims{0, 0, 0};           // z, y, x
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm, z, y, x
  std::vector<float> voxels;

  CTVolume() = default;
  CTVolume(std::string id, std::array<int, 3> d, std::array<double, 3> s, float fill = 0.0f);

  int depth() const { return dims[0]; }
  int height() const { return dims[1]; }
  int width() const { return dims[2]; }
  std::size_t slice_area() const { return std::size_t(dims[1]) * dims[2]; }
  float& at(int z, int y, int x) { return voxels[(std::size_t(z) * dims[1] + y) * dims[2] + x]; }
  float at(int z, int y, int x) const { return voxels[(std::size_t(z) * dims[1] + y) * dims[2] + x]; }

  /// Checks dims/voxel count agreement and positive spacing.
  void validate() const;
};

struct SliceImage {
  std::string scan_id;
  int slice_index = 0;
  Image pixels;  // values in [0, 1]
};

struct NodulePatch {
  std::string nodule_id;
  int slice_index = 0;
  Image pixels;  // kPatchSize x kPatchSize, values in [0, 1]
};

struct DatasetSplit {
  std::set<std::string> train_scan_ids;
  std::set<std::string> test_scan_ids;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
};

enum class SplitSide { train, test };

/// Clamps every voxel into the 12-bit CT range.
void clamp_hounsfield(CTVolume& volume);

/// Affine window: clamp((v - (level - width / 2)) / width, 0, 1).
CTVolume window_normalize(const CTVolume& volume, double level = kDefaultWindowLevel,
                          double width = kDefaultWindowWidth);
float window_value(float hu, double level = kDefaultWindowLevel, double width = kDefaultWindowWidth);

/// One slice per axial index. The volume must already be windowed.
std::vector<SliceImage> extract_slices(const CTVolume& volume);
SliceImage extract_slice(const CTVolume& volume, int slice_index);

/// Lower median of the contoured slice indices.
int median_slice_index(std::vector<int> contoured_indices);

struct PatchOptions {
  int out_size = kPatchSize;
  int margin = 0;  ///< pixels added on every side of the box before cropping
};

/// Crop to the box (clipped to the slice) and resize bilinearly to out_size x out_size.
NodulePatch extract_patch(const SliceImage& slice, const BBox& box, const PatchOptions& options = {});

/// Deterministic split by scan. |train| = round(fraction * n), kept within [1, n - 1].
DatasetSplit split_by_scan(std::vector<std::string> scan_ids, double train_fraction, std::uint64_t seed);

}  // namespace lungcadex::ingest
