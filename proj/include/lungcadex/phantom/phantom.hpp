#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lungcadex/gallery/radiomics.hpp"
#include "lungcadex/ingest/manifest.hpp"

namespace lungcadex::phantom {

/// Appearance ranges for one nodule class. Radii are in-plane, in pixels.
struct ClassAppearance {
  std::array<double, 2> radius{3.0, 5.0};
  std::array<double, 2> intensity_hu{120.0, 220.0};
  std::array<double, 2> irregularity{0.0, 0.08};  // relative amplitude of the boundary lobes
  std::array<double, 2> malignancy{1.3, 2.2};     // target mean malignancy rating
};

struct PhantomSpec {
  int num_volumes = 40;
  std::array<int, 3> dims{16, 64, 64};  // z, y, x
  std::array<double, 3> spacing{2.5, 0.7, 0.7};
  int nodules_per_volume = 2;
  double malignant_fraction = 0.5;
  double background_hu = -800.0;
  double background_noise_hu = 30.0;
  double edge_softness = 0.6;  ///< pixels; width of the blob's intensity falloff
  /// Masks mark voxels whose noise-free windowed value reaches half of the blob's.
  double mask_window_level = 40.0;
  double mask_window_width = 400.0;
  ClassAppearance benign;
  ClassAppearance malignant{{5.0, 8.0}, {-20.0, 60.0}, {0.25, 0.45}, {3.8, 4.7}};
  double rating_noise = 0.3;
  int readers = 4;
  int max_placement_attempts = 200;
  std::uint64_t seed = 7;
  std::string id_prefix = "phantom";

  /// Throws ConfigError when the spec cannot yield learnable classes.
  void validate() const;
};

/// Ground truth the generator knows about each nodule.
struct NoduleTruth {
  std::string scan_id;
  std::string nodule_id;
  bool malignant = false;
  double radius = 0.0;
  double intensity_hu = 0.0;
  double irregularity = 0.0;
  std::array<double, 3> center{};  // z, y, x
  double mean_malignancy = 0.0;
};

struct Phantom {
  std::vector<ingest::CTVolume> volumes;    // Hounsfield units
  std::vector<ingest::ScanRecord> records;  // annotations and readings
  std::vector<NoduleTruth> truth;
};

/// Deterministic given spec.seed. Background ~ background_hu with Gaussian noise;
/// nodules are soft-edged lobulated ellipsoids. Masks follow the mask window rule above.
Phantom generate(const PhantomSpec& spec);

/// Writes volumes and manifest.json under out_dir; returns the manifest path.
std::filesystem::path write_phantom(const Phantom& phantom, const std::filesystem::path& out_dir);

}  // namespace lungcadex::phantom
