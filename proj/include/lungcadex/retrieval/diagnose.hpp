#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lungcadex/cade/segment.hpp"
#include "lungcadex/cade/train.hpp"
#include "lungcadex/retrieval/retrieve.hpp"

namespace lungcadex::retrieval {

struct Diagnosis {
  std::string scan_id;
  int slice_index = 0;
  BBox bbox;
  double probability = 0.0;  // probability malignant
  gallery::MalignancyClass cls = gallery::MalignancyClass::benign;
  int k = 0;
  std::vector<std::string> retrieved_ids;
};

struct DiagnoseOptions {
  int k = kDefaultK;
  std::string prompt = "nodule";
  cade::SegmentOptions segment;
  int threads = 1;
};

/// Trained stages bundled for inference. Gallery embeddings are computed once.
class DiagnosisPipeline {
 public:
  /// Throws StateError when any stage is untrained.
  DiagnosisPipeline(const cade::TrainState& cade, const cadx::AlignedEncoders& encoders,
                    const gallery::FeatureGallery& gallery, const LinearClassifier& classifier);

  const cade::TrainState& cade() const { return *cade_; }
  const cadx::AlignedEncoders& encoders() const { return *encoders_; }
  const gallery::FeatureGallery& gallery() const { return *gallery_; }
  const LinearClassifier& classifier() const { return *classifier_; }
  const std::vector<std::vector<float>>& gallery_embeddings() const { return embeddings_; }

  /// Retrieval, aggregation and classification of one patch.
  Diagnosis diagnose_patch(const ingest::NodulePatch& patch, int k) const;

  /// One diagnosis per segmentation candidate, in candidate order. Benign
  /// candidates are kept.
  std::vector<Diagnosis> diagnose_slice(const ingest::SliceImage& slice, const DiagnoseOptions& options = {}) const;
  std::vector<Diagnosis> diagnose_candidates(const ingest::SliceImage& slice, const cade::Segmentation& segmentation,
                                             const DiagnoseOptions& options = {}) const;

  /// Every slice of a windowed volume, in slice order.
  std::vector<Diagnosis> diagnose_volume(const ingest::CTVolume& windowed, const DiagnoseOptions& options = {}) const;

 private:
  const cade::TrainState* cade_;
  const cadx::AlignedEncoders* encoders_;
  const gallery::FeatureGallery* gallery_;
  const LinearClassifier* classifier_;
  std::vector<std::vector<float>> embeddings_;
};

/// JSON-lines {scan_id, slice_index, bbox, prob_malignant, class, k, retrieved_ids}.
void write_diagnoses_jsonl(const std::filesystem::path& path, const std::vector<Diagnosis>& diagnoses);

}  // namespace lungcadex::retrieval
