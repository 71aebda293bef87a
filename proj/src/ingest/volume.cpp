#include "lungcadex/ingest/volume.hpp"

#include <algorithm>
#include <cmath>

#include "lungcadex/errors.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::ingest {

CTVolume::CTVolume(std::string id, std::array<int, 3> d, std::array<double, 3> s, float fill)
    : scan_id(std::move(id)), dims(d), spacing(s), voxels(std::size_t(d[0]) * d[1] * d[2], fill) {}

void CTVolume::validate() const {
  for (double s : spacing) {
    if (!(s > 0.0)) throw ValidationError("volume " + scan_id + " has non-positive spacing");
  }
  for (int d : dims) {
    if (d < 0) throw ValidationError("volume " + scan_id + " has negative dimensions");
  }
  if (voxels.size() != std::size_t(dims[0]) * dims[1] * dims[2]) {
    throw ValidationError("volume " + scan_id + " voxel count does not match its dimensions");
  }
}

void clamp_hounsfield(CTVolume& volume) {
  for (float& v : volume.voxels) v = std::clamp(v, kMinHounsfield, kMaxHounsfield);
}

float window_value(float hu, double level, double width) {
  if (!(width > 0.0)) throw ParameterError("window width must be positive");
  const double low = level - width / 2.0;
  return static_cast<float>(std::clamp((hu - low) / width, 0.0, 1.0));
}

CTVolume window_normalize(const CTVolume& volume, double level, double width) {
  if (!(width > 0.0)) throw ParameterError("window width must be positive");
  CTVolume out = volume;
  for (float& v : out.voxels) v = window_value(v, level, width);
  return out;
}

SliceImage extract_slice(const CTVolume& volume, int slice_index) {
  if (slice_index < 0 || slice_index >= volume.depth()) {
    throw InputError("slice " + std::to_string(slice_index) + " outside volume " + volume.scan_id);
  }
  SliceImage slice{volume.scan_id, slice_index, Image(volume.height(), volume.width())};
  const auto begin = volume.voxels.begin() + std::ptrdiff_t(slice_index) * std::ptrdiff_t(volume.slice_area());
  std::copy_n(begin, volume.slice_area(), slice.pixels.pixels.begin());
  for (float v : slice.pixels.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("extract_slices needs a windowed volume (values in [0, 1])");
  }
  return slice;
}

std::vector<SliceImage> extract_slices(const CTVolume& volume) {
  if (volume.depth() == 0 || volume.slice_area() == 0) throw InputError("volume " + volume.scan_id + " is empty");
  std::vector<SliceImage> slices;
  slices.reserve(volume.depth());
  for (int z = 0; z < volume.depth(); ++z) slices.push_back(extract_slice(volume, z));
  return slices;
}

int median_slice_index(std::vector<int> contoured_indices) {
  if (contoured_indices.empty()) throw InputError("nodule has no contoured slices");
  std::sort(contoured_indices.begin(), contoured_indices.end());
  return contoured_indices[(contoured_indices.size() - 1) / 2];
}

NodulePatch extract_patch(const SliceImage& slice, const BBox& box, const PatchOptions& options) {
  if (box.area() == 0) throw InputError("degenerate bounding box");
  if (options.out_size <= 0 || options.margin < 0) throw ParameterError("invalid patch options");
  const BBox padded{box.x0 - options.margin, box.y0 - options.margin, box.x1 + options.margin,
                    box.y1 + options.margin};
  const Image region = crop(slice.pixels, padded);
  NodulePatch patch;
  patch.slice_index = slice.slice_index;
  patch.pixels = resize_bilinear(region, options.out_size, options.out_size);
  for (float& v : patch.pixels.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return patch;
}

DatasetSplit split_by_scan(std::vector<std::string> scan_ids, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("train fraction must lie in (0, 1)");
  std::sort(scan_ids.begin(), scan_ids.end());
  scan_ids.erase(std::unique(scan_ids.begin(), scan_ids.end()), scan_ids.end());
  const long n = static_cast<long>(scan_ids.size());
  if (n < 2) throw InputError("a split needs at least two scans");
  Rng rng(seed);
  rng.shuffle(scan_ids);
  const long n_train = std::clamp(std::lround(train_fraction * static_cast<double>(n)), 1L, n - 1);
  DatasetSplit split;
  split.seed = seed;
  split.train_fraction = train_fraction;
  split.train_scan_ids.insert(scan_ids.begin(), scan_ids.begin() + n_train);
  split.test_scan_ids.insert(scan_ids.begin() + n_train, scan_ids.end());
  return split;
}

}  // namespace lungcadex::ingest
