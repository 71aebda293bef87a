#include "lungcadex/retrieval/diagnose.hpp"

#include <fstream>
#include <json.hpp>

#include "lungcadex/errors.hpp"
#include "lungcadex/parallel.hpp"

namespace lungcadex::retrieval {

DiagnosisPipeline::DiagnosisPipeline(const cade::TrainState& cade, const cadx::AlignedEncoders& encoders,
                                     const gallery::FeatureGallery& gallery, const LinearClassifier& classifier)
    : cade_(&cade), encoders_(&encoders), gallery_(&gallery), classifier_(&classifier) {
  if (!cade.trained()) throw StateError("segmentation stage is untrained");
  if (!encoders.trained()) throw StateError("alignment stage is untrained");
  if (!classifier.fitted) throw StateError("classifier is untrained");
  if (gallery.empty()) throw InputError("gallery is empty");
  embeddings_ = embed_gallery(encoders, gallery);
}

Diagnosis DiagnosisPipeline::diagnose_patch(const ingest::NodulePatch& patch, int k) const {
  const RetrievalResult hits = retrieve_top_k(encoders_->encode_patch(patch), *gallery_, embeddings_, k);
  const Classification c = classify(aggregate_hits(hits, classifier_->aggregation), *classifier_);
  Diagnosis d;
  d.slice_index = patch.slice_index;
  d.probability = c.probability;
  d.cls = c.cls;
  d.k = k;
  for (const RetrievalHit& hit : hits.hits) d.retrieved_ids.push_back(hit.nodule_id);
  return d;
}

std::vector<Diagnosis> DiagnosisPipeline::diagnose_candidates(const ingest::SliceImage& slice,
                                                              const cade::Segmentation& segmentation,
                                                              const DiagnoseOptions& options) const {
  if (options.k < 1) throw ParameterError("k must be at least 1, got " + std::to_string(options.k));
  std::vector<Diagnosis> out(segmentation.patches.size());
  parallel_for(out.size(), options.threads, [&](std::size_t i) {
    Diagnosis d = diagnose_patch(segmentation.patches[i], options.k);
    d.scan_id = slice.scan_id;
    d.slice_index = slice.slice_index;
    d.bbox = segmentation.boxes[i];
    out[i] = std::move(d);
  });
  return out;
}

std::vector<Diagnosis> DiagnosisPipeline::diagnose_slice(const ingest::SliceImage& slice,
                                                         const DiagnoseOptions& options) const {
  const cade::Segmentation seg = cade::segment(cade_->model, slice, options.prompt, options.segment);
  return diagnose_candidates(slice, seg, options);
}

std::vector<Diagnosis> DiagnosisPipeline::diagnose_volume(const ingest::CTVolume& windowed,
                                                          const DiagnoseOptions& options) const {
  const std::vector<ingest::SliceImage> slices = ingest::extract_slices(windowed);
  std::vector<std::vector<Diagnosis>> per_slice(slices.size());
  DiagnoseOptions inner = options;
  inner.threads = 1;
  parallel_for(slices.size(), options.threads, [&](std::size_t i) { per_slice[i] = diagnose_slice(slices[i], inner); });
  std::vector<Diagnosis> out;
  for (auto& part : per_slice) {
    for (auto& d : part) out.push_back(std::move(d));
  }
  return out;
}

void write_diagnoses_jsonl(const std::filesystem::path& path, const std::vector<Diagnosis>& diagnoses) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const Diagnosis& d : diagnoses) {
    const nlohmann::json j = {{"scan_id", d.scan_id},
                              {"slice_index", d.slice_index},
                              {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1}},
                              {"prob_malignant", d.probability},
                              {"class", std::string(gallery::to_string(d.cls))},
                              {"k", d.k},
                              {"retrieved_ids", d.retrieved_ids}};
    out << j.dump() << '\n';
  }
}

}  // namespace lungcadex::retrieval
