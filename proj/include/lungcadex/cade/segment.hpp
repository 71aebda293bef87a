#pragma once

#include <string>
#include <vector>

#include "lungcadex/cade/model.hpp"
#include "lungcadex/ingest/volume.hpp"

namespace lungcadex::cade {

struct SegmentOptions {
  double bin_threshold = 0.5;
  int min_component_pixels = 4;
  ingest::PatchOptions patch;
};

struct Segmentation {
  MaskPrediction mask;                      // aligned to the input slice
  std::vector<BBox> boxes;                  // one per retained component, in component order
  std::vector<Mask> components;
  std::vector<ingest::NodulePatch> patches;
};

/// Probability map at the input slice resolution.
MaskPrediction predict_mask(const SegModel& model, const ingest::SliceImage& slice, const std::string& prompt);

/// Binarizes, splits into 8-connected components, drops small ones and cuts a patch per component.
Segmentation candidates_from_mask(const ingest::SliceImage& slice, MaskPrediction mask,
                                  const SegmentOptions& options = {});

Segmentation segment(const SegModel& model, const ingest::SliceImage& slice, const std::string& prompt,
                     const SegmentOptions& options = {});

Mask binarize(const Image& probabilities, double threshold);

}  // namespace lungcadex::cade
