#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "lungcadex/cade/train.hpp"
#include "lungcadex/cadx/align.hpp"
#include "lungcadex/gallery/gallery.hpp"
#include "lungcadex/ingest/manifest.hpp"
#include "lungcadex/phantom/phantom.hpp"
#include "lungcadex/retrieval/retrieve.hpp"

namespace lungcadex::testing {

/// Fresh, empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

/// 40-volume phantom written once per test run.
struct PhantomFixture {
  phantom::Phantom phantom;
  std::filesystem::path manifest;
  ingest::Dataset dataset;
  ingest::DatasetSplit split;
  gallery::FeatureGallery train;
  gallery::FeatureGallery test;
};
const PhantomFixture& shared_phantom();

/// Toy segmentation, alignment and classifier trained once on the shared phantom.
struct PipelineFixture {
  std::unique_ptr<cade::TrainState> cade;
  std::unique_ptr<cadx::AlignedEncoders> encoders;
  retrieval::LinearClassifier classifier;
};
const PipelineFixture& shared_pipeline();

}  // namespace lungcadex::testing
