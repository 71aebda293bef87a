#include "fixtures.hpp"

#include <mutex>

namespace lungcadex::testing {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lungcadex_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const PhantomFixture& shared_phantom() {
  static const PhantomFixture fixture = [] {
    PhantomFixture f;
    f.phantom = phantom::generate(phantom::PhantomSpec{});
    f.manifest = phantom::write_phantom(f.phantom, scratch_dir("shared_phantom"));
    f.dataset = ingest::Dataset::load(f.manifest);
    f.split = ingest::split_by_scan(f.dataset.scan_ids(), 0.7, 0);
    f.train = gallery::build_gallery(f.dataset, f.split, ingest::SplitSide::train);
    f.test = gallery::build_gallery(f.dataset, f.split, ingest::SplitSide::test);
    return f;
  }();
  return fixture;
}

const PipelineFixture& shared_pipeline() {
  static const PipelineFixture fixture = [] {
    const PhantomFixture& ph = shared_phantom();
    PipelineFixture f;
    f.cade = std::make_unique<cade::TrainState>(
        cade::train_cade(ph.dataset, ph.split, cade::SegModelConfig::toy(), cade::PromptSuite::standard(),
                         cade::CadeHyperParams::toy()));
    f.encoders = std::make_unique<cadx::AlignedEncoders>(cadx::train_cadx(ph.train, cadx::AlignConfig::toy()));
    f.classifier = retrieval::train_classifier(*f.encoders, ph.train);
    return f;
  }();
  return fixture;
}

}  // namespace lungcadex::testing
