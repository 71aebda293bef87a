#include <doctest.h>

#include "fixtures.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/ingest/volume.hpp"

using namespace lungcadex;
using namespace lungcadex::phantom;

namespace {

PhantomSpec small_spec(std::uint64_t seed) {
  PhantomSpec spec;
  spec.num_volumes = 4;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("phantom generation is deterministic in its seed") {
  const Phantom a = generate(small_spec(3));
  const Phantom b = generate(small_spec(3));
  const Phantom c = generate(small_spec(4));
  REQUIRE(a.volumes.size() == 4);
  CHECK(a.volumes[0].voxels == b.volumes[0].voxels);
  CHECK(a.volumes[0].voxels != c.volumes[0].voxels);
  CHECK(a.truth.size() == b.truth.size());
}

TEST_CASE("phantom volumes and records agree") {
  const PhantomSpec spec = small_spec(9);
  const Phantom p = generate(spec);
  REQUIRE(p.records.size() == p.volumes.size());
  CHECK(p.truth.size() == std::size_t(spec.num_volumes * spec.nodules_per_volume));
  for (std::size_t i = 0; i < p.volumes.size(); ++i) {
    CHECK(p.volumes[i].dims == spec.dims);
    CHECK(p.records[i].scan_id == p.volumes[i].scan_id);
    CHECK(p.records[i].nodules.size() == std::size_t(spec.nodules_per_volume));
    for (const auto& ann : p.records[i].nodules) {
      CHECK(ann.readings.size() == std::size_t(spec.readers));
      CHECK_FALSE(ann.contours.empty());
    }
  }
}

TEST_CASE("phantom masks cover visibly brighter voxels") {
  const Phantom p = generate(small_spec(5));
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    const ingest::CTVolume w = ingest::window_normalize(p.volumes[i]);
    for (const auto& ann : p.records[i].nodules) {
      const auto& c = ann.contour_at(ann.median_slice());
      double inside = 0.0, outside = 0.0;
      long n_in = 0, n_out = 0;
      for (int y = 0; y < c.mask.height; ++y) {
        for (int x = 0; x < c.mask.width; ++x) {
          const double v = w.at(c.slice_index, y, x);
          if (c.mask.at(y, x)) {
            inside += v;
            ++n_in;
          } else {
            outside += v;
            ++n_out;
          }
        }
      }
      CHECK(inside / n_in > outside / n_out + 0.2);
    }
  }
}

TEST_CASE("balanced spec yields a fully labeled gallery") {
  PhantomSpec spec = small_spec(12);
  spec.num_volumes = 10;
  spec.nodules_per_volume = 2;
  const Phantom p = generate(spec);
  const auto dir = testing::scratch_dir("phantom_gallery");
  const auto ds = ingest::Dataset::load(write_phantom(p, dir));
  const auto ids = ds.scan_ids();
  const auto g = gallery::build_gallery(ds, std::set<std::string>(ids.begin(), ids.end()));
  CHECK(g.size() == 20);
  CHECK(g.excluded == 0);
  int malignant = 0;
  for (const auto& t : p.truth) malignant += t.malignant ? 1 : 0;
  CHECK(malignant == 10);
}

TEST_CASE("phantom spec validation") {
  PhantomSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.malignant_fraction = 1.5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.malignant = spec.benign;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.benign.malignancy = {2.5, 3.2};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.readers = 5;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.background_hu = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = PhantomSpec{};
  spec.dims = {0, 64, 64};
  CHECK_THROWS_AS(generate(spec), ConfigError);
}
