#include "lungcadex/cade/segment.hpp"

#include <algorithm>

#include "lungcadex/cade/train.hpp"
#include "lungcadex/errors.hpp"

namespace lungcadex::cade {

MaskPrediction predict_mask(const SegModel& model, const ingest::SliceImage& slice, const std::string& prompt) {
  if (slice.pixels.empty()) throw InputError("slice is empty");
  const int size = model.config().image_size;
  const ImageEmbedding embedding = model.encode_image(resize_slice(slice, size));
  MaskPrediction pred = model.decode_mask(embedding, model.encode_prompt(prompt).value());
  if (slice.pixels.height != size || slice.pixels.width != size) {
    pred.probabilities = resize_bilinear(pred.probabilities, slice.pixels.height, slice.pixels.width);
  }
  for (float& p : pred.probabilities.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return pred;
}

Mask binarize(const Image& probabilities, double threshold) {
  Mask mask(probabilities.height, probabilities.width);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = probabilities.pixels[i] >= threshold ? 1 : 0;
  return mask;
}

Segmentation candidates_from_mask(const ingest::SliceImage& slice, MaskPrediction mask,
                                  const SegmentOptions& options) {
  if (options.min_component_pixels < 1) throw ParameterError("minimum component size must be at least 1");
  Segmentation out;
  out.mask = std::move(mask);
  for (Mask& component : connected_components(binarize(out.mask.probabilities, options.bin_threshold))) {
    if (component.count() < options.min_component_pixels) continue;
    const BBox box = component.bounding_box();
    out.patches.push_back(ingest::extract_patch(slice, box, options.patch));
    out.boxes.push_back(box);
    out.components.push_back(std::move(component));
  }
  return out;
}

Segmentation segment(const SegModel& model, const ingest::SliceImage& slice, const std::string& prompt,
                     const SegmentOptions& options) {
  return candidates_from_mask(slice, predict_mask(model, slice, prompt), options);
}

}  // namespace lungcadex::cade
