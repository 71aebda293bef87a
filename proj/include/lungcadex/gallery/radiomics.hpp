#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace lungcadex::gallery {

inline constexpr int kFeatureCount = 8;

/// Attribute order used everywhere a feature vector is stored positionally.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "subtlety", "internal_structure", "sphericity", "calcification",
    "margin",   "lobulation",         "spiculation", "texture"};

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 5.0;

std::optional<int> feature_index(std::string_view name);

/// One radiologist's scores, each in [1, 5].
struct RadiomicReading {
  std::string reader_id;
  std::array<double, kFeatureCount> attributes{};
  double malignancy = 1.0;

  void validate() const;
};

struct RadiomicFeatureVector {
  std::array<double, kFeatureCount> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  void validate() const;

  friend bool operator==(const RadiomicFeatureVector&, const RadiomicFeatureVector&) = default;
};

enum class MalignancyClass { benign, malignant, excluded };

std::string_view to_string(MalignancyClass cls);
MalignancyClass malignancy_class_from_string(std::string_view text);

struct MalignancyLabel {
  double raw_score = 0.0;
  MalignancyClass cls = MalignancyClass::excluded;
};

struct ConsolidatedReading {
  RadiomicFeatureVector features;
  double malignancy = 0.0;
};

/// Componentwise mean over one to four readers, for the eight attributes and malignancy.
ConsolidatedReading consolidate_readings(std::span<const RadiomicReading> readings);

/// > 3 malignant, == 3 excluded, < 3 benign; the comparison uses the score rounded to 6 decimals.
MalignancyLabel derive_label(double raw_score);

}  // namespace lungcadex::gallery
