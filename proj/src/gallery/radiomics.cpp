#include "lungcadex/gallery/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lungcadex/errors.hpp"

namespace lungcadex::gallery {
namespace {

void check_rating(double value, std::string_view what) {
  if (!(value >= kMinRating && value <= kMaxRating)) {
    throw ValidationError(std::string(what) + " rating " + std::to_string(value) + " outside [1, 5]");
  }
}

/// Sum in sorted order so the mean does not depend on reader order.
double order_independent_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace

std::optional<int> feature_index(std::string_view name) {
  for (int i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return std::nullopt;
}

void RadiomicReading::validate() const {
  for (int i = 0; i < kFeatureCount; ++i) check_rating(attributes[i], kFeatureNames[i]);
  check_rating(malignancy, "malignancy");
}

void RadiomicFeatureVector::validate() const {
  for (int i = 0; i < kFeatureCount; ++i) check_rating(values[i], kFeatureNames[i]);
}

std::string_view to_string(MalignancyClass cls) {
  switch (cls) {
    case MalignancyClass::benign:
      return "benign";
    case MalignancyClass::malignant:
      return "malignant";
    case MalignancyClass::excluded:
      return "excluded";
  }
  return "excluded";
}

MalignancyClass malignancy_class_from_string(std::string_view text) {
  if (text == "benign") return MalignancyClass::benign;
  if (text == "malignant") return MalignancyClass::malignant;
  if (text == "excluded") return MalignancyClass::excluded;
  throw SchemaError("unknown malignancy label: " + std::string(text));
}

ConsolidatedReading consolidate_readings(std::span<const RadiomicReading> readings) {
  if (readings.empty()) throw InputError("no readings to consolidate");
  if (readings.size() > 4) throw InputError("at most four readings per nodule are supported");
  for (const RadiomicReading& r : readings) r.validate();
  ConsolidatedReading out;
  std::vector<double> column(readings.size());
  for (int i = 0; i < kFeatureCount; ++i) {
    for (std::size_t r = 0; r < readings.size(); ++r) column[r] = readings[r].attributes[i];
    out.features.values[i] = order_independent_mean(column);
  }
  for (std::size_t r = 0; r < readings.size(); ++r) column[r] = readings[r].malignancy;
  out.malignancy = order_independent_mean(column);
  return out;
}

MalignancyLabel derive_label(double raw_score) {
  check_rating(raw_score, "malignancy");
  const double rounded = std::round(raw_score * 1e6) / 1e6;
  MalignancyLabel label{raw_score, MalignancyClass::excluded};
  if (rounded > 3.0) {
    label.cls = MalignancyClass::malignant;
  } else if (rounded < 3.0) {
    label.cls = MalignancyClass::benign;
  }
  return label;
}

}  // namespace lungcadex::gallery
