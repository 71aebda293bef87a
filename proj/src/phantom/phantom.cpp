#include "lungcadex/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lungcadex/errors.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::phantom {
namespace {

bool disjoint(const std::array<double, 2>& a, const std::array<double, 2>& b) { return a[1] < b[0] || b[1] < a[0]; }

double normalized(double value, double lo, double hi) { return hi > lo ? std::clamp((value - lo) / (hi - lo), 0.0, 1.0) : 0.5; }

struct Blob {
  double cz, cy, cx;
  double radius;     // in-plane
  double z_radius;   // in slices
  double irregularity;
  int lobes;
  double phase;
  double intensity;

  /// Signed distance-like margin: positive inside the boundary.
  double margin(double z, double y, double x) const {
    const double dz = (z - cz) / z_radius;
    if (std::abs(dz) >= 1.0) return -1.0;
    const double dy = y - cy, dx = x - cx;
    const double angle = std::atan2(dy, dx);
    const double boundary = radius * (1.0 + irregularity * std::sin(lobes * angle + phase)) * std::sqrt(1.0 - dz * dz);
    return boundary - std::sqrt(dy * dy + dx * dx);
  }
};

/// Readings whose mean lands inside the class band [band_lo, band_hi].
std::vector<double> malignancy_readings(double target, double band_lo, double band_hi, int readers, double noise,
                                        Rng& rng) {
  std::vector<double> r(readers);
  for (double& v : r) v = std::clamp(target + rng.normal(0.0, noise), gallery::kMinRating, gallery::kMaxRating);
  auto mean = [&r] {
    double s = 0.0;
    for (double v : r) s += v;
    return s / static_cast<double>(r.size());
  };
  while (mean() < band_lo) {
    for (double& v : r) v = std::min(v + 0.05, gallery::kMaxRating);
  }
  while (mean() > band_hi) {
    for (double& v : r) v = std::max(v - 0.05, gallery::kMinRating);
  }
  return r;
}

}  // namespace

void PhantomSpec::validate() const {
  if (num_volumes < 0 || nodules_per_volume < 0) throw ConfigError("phantom counts must be non-negative");
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) throw ConfigError("phantom dims must be positive");
  for (double s : spacing) {
    if (!(s > 0.0)) throw ConfigError("phantom spacing must be positive");
  }
  if (malignant_fraction < 0.0 || malignant_fraction > 1.0) throw ConfigError("malignant_fraction must lie in [0, 1]");
  if (!disjoint(benign.radius, malignant.radius) && !disjoint(benign.intensity_hu, malignant.intensity_hu) &&
      !disjoint(benign.irregularity, malignant.irregularity)) {
    throw ConfigError("benign and malignant appearance ranges overlap in every dimension");
  }
  if (!(benign.malignancy[1] < 3.0 && malignant.malignancy[0] > 3.0)) {
    throw ConfigError("malignancy targets must stay clear of the excluded score 3");
  }
  if (readers < 1 || readers > 4) throw ConfigError("phantom readers must be between 1 and 4");
  if (!(mask_window_width > 0.0)) throw ConfigError("mask window width must be positive");
  const double floor_hu = mask_window_level - mask_window_width / 2.0;
  if (std::min(benign.intensity_hu[0], malignant.intensity_hu[0]) <= floor_hu || background_hu >= floor_hu) {
    throw ConfigError("nodules must render above the mask window floor and the background below it");
  }
}

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  Phantom out;
  const int total = spec.num_volumes * spec.nodules_per_volume;
  const int n_malignant = static_cast<int>(std::lround(spec.malignant_fraction * total));
  std::vector<bool> classes(static_cast<std::size_t>(total), false);
  std::fill_n(classes.begin(), n_malignant, true);
  Rng class_rng(mix_seed(spec.seed, 0xC1A55));
  class_rng.shuffle(classes);

  // Pooled class ranges, used to normalize appearance into ratings.
  const double r_lo = std::min(spec.benign.radius[0], spec.malignant.radius[0]);
  const double r_hi = std::max(spec.benign.radius[1], spec.malignant.radius[1]);
  const double i_lo = std::min(spec.benign.intensity_hu[0], spec.malignant.intensity_hu[0]);
  const double i_hi = std::max(spec.benign.intensity_hu[1], spec.malignant.intensity_hu[1]);
  const double g_lo = std::min(spec.benign.irregularity[0], spec.malignant.irregularity[0]);
  const double g_hi = std::max(spec.benign.irregularity[1], spec.malignant.irregularity[1]);

  const auto [depth, height, width] = spec.dims;
  for (int v = 0; v < spec.num_volumes; ++v) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(v) + 1));
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%03d", spec.id_prefix.c_str(), v);
    ingest::CTVolume volume(id, spec.dims, spec.spacing);
    for (float& vox : volume.voxels) {
      vox = static_cast<float>(spec.background_hu + rng.normal(0.0, spec.background_noise_hu));
    }
    ingest::ScanRecord record;
    record.scan_id = id;
    record.dims = spec.dims;
    record.spacing = spec.spacing;
    record.volume_path = std::string("volumes/") + id + ".raw";

    std::vector<Blob> blobs;
    for (int n = 0; n < spec.nodules_per_volume; ++n) {
      const bool malignant = classes[static_cast<std::size_t>(v * spec.nodules_per_volume + n)];
      const ClassAppearance& app = malignant ? spec.malignant : spec.benign;
      Blob blob{};
      blob.radius = rng.uniform(app.radius[0], app.radius[1]);
      blob.z_radius = std::max(1.5, blob.radius * spec.spacing[1] / spec.spacing[0] * 1.6);
      blob.irregularity = rng.uniform(app.irregularity[0], app.irregularity[1]);
      blob.lobes = 3 + static_cast<int>(rng.index(4));
      blob.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      blob.intensity = rng.uniform(app.intensity_hu[0], app.intensity_hu[1]);
      const double extent = blob.radius * (1.0 + blob.irregularity) + 2.0;
      bool placed = false;
      for (int attempt = 0; attempt < spec.max_placement_attempts && !placed; ++attempt) {
        if (2 * extent >= width || 2 * extent >= height) break;
        blob.cy = rng.uniform(extent, height - 1 - extent);
        blob.cx = rng.uniform(extent, width - 1 - extent);
        const double zr = std::min(blob.z_radius, depth / 2.0);
        blob.cz = depth > 1 ? rng.uniform(std::max(0.0, zr - 1.0), std::min(depth - 1.0, depth - zr)) : 0.0;
        placed = std::all_of(blobs.begin(), blobs.end(), [&](const Blob& other) {
          const double other_extent = other.radius * (1.0 + other.irregularity) + 2.0;
          const double dist = std::hypot(blob.cy - other.cy, blob.cx - other.cx);
          const bool z_apart = std::abs(blob.cz - other.cz) >= blob.z_radius + other.z_radius + 1.0;
          return dist > extent + other_extent || z_apart;
        });
      }
      if (!placed) throw GenerationError("could not place nodule " + std::to_string(n) + " in " + record.scan_id);
      blobs.push_back(blob);

      ingest::NoduleAnnotation ann;
      ann.scan_id = record.scan_id;
      ann.nodule_id = record.scan_id + "_n" + std::to_string(n);
      const double visible =
          0.5 * ingest::window_value(float(blob.intensity), spec.mask_window_level, spec.mask_window_width);
      for (int z = 0; z < depth; ++z) {
        ingest::SliceContour contour;
        contour.slice_index = z;
        contour.mask = Mask(height, width);
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            const double m = blob.margin(z, y, x);
            if (m <= -4.0 * spec.edge_softness) continue;
            const double weight = 1.0 / (1.0 + std::exp(-m / spec.edge_softness));
            float& vox = volume.at(z, y, x);
            vox = static_cast<float>(vox + weight * (blob.intensity - vox));
            const double clean = spec.background_hu + weight * (blob.intensity - spec.background_hu);
            if (ingest::window_value(float(clean), spec.mask_window_level, spec.mask_window_width) >= visible) {
              contour.mask.at(y, x) = 1;
            }
          }
        }
        if (contour.mask.count() == 0) continue;
        contour.bbox = contour.mask.bounding_box();
        ann.contours.push_back(std::move(contour));
      }
      if (ann.contours.empty()) throw GenerationError("nodule " + ann.nodule_id + " produced no mask voxels");

      // Ratings follow appearance linearly; reader noise is added per rating.
      const double size = normalized(blob.radius, r_lo, r_hi);
      const double density = normalized(blob.intensity, i_lo, i_hi);
      const double irregular = normalized(blob.irregularity, g_lo, g_hi);
      const std::array<double, gallery::kFeatureCount> expected = {
          2.0 + 2.5 * size,          // subtlety: larger is more obvious
          1.0 + 0.5 * (1.0 - density),  // internal structure
          5.0 - 3.5 * irregular,     // sphericity
          1.0 + 4.0 * density,       // calcification
          5.0 - 3.5 * irregular,     // margin sharpness
          1.0 + 3.5 * irregular,     // lobulation
          1.0 + 4.0 * irregular,     // spiculation
          2.0 + 3.0 * density};      // texture (solidity)
      const double within = 0.5 * (irregular + size);
      const double target = app.malignancy[0] + within * (app.malignancy[1] - app.malignancy[0]);
      const double band_lo = malignant ? 3.5 : gallery::kMinRating;
      const double band_hi = malignant ? gallery::kMaxRating : 2.5;
      const auto malignancy = malignancy_readings(target, band_lo, band_hi, spec.readers, spec.rating_noise, rng);
      double mean_malignancy = 0.0;
      for (int r = 0; r < spec.readers; ++r) {
        gallery::RadiomicReading reading;
        reading.reader_id = "reader_" + std::to_string(r + 1);
        for (int k = 0; k < gallery::kFeatureCount; ++k) {
          reading.attributes[k] =
              std::clamp(expected[k] + rng.normal(0.0, spec.rating_noise), gallery::kMinRating, gallery::kMaxRating);
        }
        reading.malignancy = malignancy[r];
        mean_malignancy += reading.malignancy / spec.readers;
        ann.readings.push_back(reading);
      }
      out.truth.push_back({record.scan_id, ann.nodule_id, malignant, blob.radius, blob.intensity, blob.irregularity,
                           {blob.cz, blob.cy, blob.cx}, mean_malignancy});
      record.nodules.push_back(std::move(ann));
    }
    ingest::clamp_hounsfield(volume);
    for (float& vox : volume.voxels) vox = std::round(vox);
    out.volumes.push_back(std::move(volume));
    out.records.push_back(std::move(record));
  }
  return out;
}

std::filesystem::path write_phantom(const Phantom& phantom, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<ingest::ScanRecord> records = phantom.records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].volume_path = out_dir / records[i].volume_path;
    ingest::write_volume(records[i].volume_path, phantom.volumes[i]);
  }
  const auto manifest = out_dir / "manifest.json";
  ingest::write_manifest(manifest, records);
  return manifest;
}

}  // namespace lungcadex::phantom
