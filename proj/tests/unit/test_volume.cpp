#include <doctest.h>

#include <cmath>
#include <set>

#include "lungcadex/errors.hpp"
#include "lungcadex/ingest/volume.hpp"

using namespace lungcadex;
using namespace lungcadex::ingest;

TEST_CASE("window maps the level to one half and the edges to zero and one") {
  CHECK(window_value(-160.0f) == doctest::Approx(0.0));
  CHECK(window_value(40.0f) == doctest::Approx(0.5));
  CHECK(window_value(240.0f) == doctest::Approx(1.0));
  CHECK(window_value(140.0f) == doctest::Approx(0.75));
  CHECK(window_value(-1000.0f) == 0.0f);
  CHECK(window_value(3000.0f) == 1.0f);
  CHECK_THROWS_AS(window_value(0.0f, 40.0, 0.0), ParameterError);
}

TEST_CASE("window is monotone and stays in the unit interval") {
  float previous = -1.0f;
  for (int i = 0; i < 4096; ++i) {
    const float v = window_value(kMinHounsfield + float(i));
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    CHECK(v >= previous);
    previous = v;
  }
}

TEST_CASE("window_normalize applies the window voxelwise") {
  CTVolume v("s", {1, 1, 3}, {1, 1, 1});
  v.voxels = {-160.0f, 40.0f, 240.0f};
  const CTVolume w = window_normalize(v);
  CHECK(w.voxels[0] == doctest::Approx(0.0));
  CHECK(w.voxels[1] == doctest::Approx(0.5));
  CHECK(w.voxels[2] == doctest::Approx(1.0));
  CHECK(w.scan_id == "s");
}

TEST_CASE("clamp_hounsfield keeps voxels in the 12-bit range") {
  CTVolume v("s", {1, 1, 3}, {1, 1, 1});
  v.voxels = {-3000.0f, 0.0f, 5000.0f};
  clamp_hounsfield(v);
  CHECK(v.voxels[0] == kMinHounsfield);
  CHECK(v.voxels[1] == 0.0f);
  CHECK(v.voxels[2] == kMaxHounsfield);
}

TEST_CASE("volume validation") {
  CTVolume v("s", {2, 2, 2}, {1, 1, 1});
  CHECK_NOTHROW(v.validate());
  v.voxels.pop_back();
  CHECK_THROWS_AS(v.validate(), ValidationError);
  CTVolume bad("b", {1, 1, 1}, {1, 0, 1});
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("extract_slices yields one slice per axial index") {
  CTVolume v("s", {5, 4, 3}, {1, 1, 1}, 0.25f);
  v.at(3, 1, 2) = 0.75f;
  const auto slices = extract_slices(v);
  REQUIRE(slices.size() == 5);
  CHECK(slices[3].slice_index == 3);
  CHECK(slices[3].pixels.at(1, 2) == 0.75f);
  CHECK(slices[0].pixels.height == 4);
  CHECK(slices[0].pixels.width == 3);
  CHECK_THROWS_AS(extract_slice(v, 5), InputError);
  CTVolume raw("r", {1, 1, 1}, {1, 1, 1}, -500.0f);
  CHECK_THROWS_AS(extract_slices(raw), ContractError);
}

TEST_CASE("median slice picks the lower median") {
  CHECK(median_slice_index({4, 2, 3}) == 3);
  CHECK(median_slice_index({7, 5, 6, 8}) == 6);
  CHECK(median_slice_index({9}) == 9);
  CHECK_THROWS_AS(median_slice_index({}), InputError);
}

TEST_CASE("patch from a gradient crop keeps its corner values") {
  SliceImage slice;
  slice.pixels = Image(256, 256);
  for (int y = 0; y < 256; ++y) {
    for (int x = 0; x < 256; ++x) slice.pixels.at(y, x) = float(x + y) / 510.0f;
  }
  const BBox box{10, 20, 202, 212};
  const NodulePatch patch = extract_patch(slice, box);
  REQUIRE(patch.pixels.height == kPatchSize);
  REQUIRE(patch.pixels.width == kPatchSize);
  CHECK(std::abs(patch.pixels.at(0, 0) - slice.pixels.at(20, 10)) < 1e-6);
  CHECK(std::abs(patch.pixels.at(95, 95) - slice.pixels.at(211, 201)) < 1e-6);
  CHECK(std::abs(patch.pixels.at(0, 95) - slice.pixels.at(20, 201)) < 1e-6);
  CHECK(std::abs(patch.pixels.at(95, 0) - slice.pixels.at(211, 10)) < 1e-6);
  CHECK(patch.pixels.at(50, 50) > patch.pixels.at(10, 10));
}

TEST_CASE("patch extraction rejects degenerate input") {
  SliceImage slice;
  slice.pixels = Image(8, 8, 0.5f);
  CHECK_THROWS_AS(extract_patch(slice, BBox{2, 2, 2, 5}), InputError);
  PatchOptions bad;
  bad.out_size = 0;
  CHECK_THROWS_AS(extract_patch(slice, BBox{0, 0, 4, 4}, bad), ParameterError);
}

TEST_CASE("split by scan is disjoint, complete and order independent") {
  std::vector<std::string> ids;
  for (int i = 0; i < 40; ++i) ids.push_back("scan" + std::to_string(i));
  const DatasetSplit a = split_by_scan(ids, 0.7, 4);
  CHECK(a.train_scan_ids.size() == 28);
  CHECK(a.test_scan_ids.size() == 12);
  for (const auto& id : a.test_scan_ids) CHECK(a.train_scan_ids.count(id) == 0);
  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  const DatasetSplit b = split_by_scan(reversed, 0.7, 4);
  CHECK(a.train_scan_ids == b.train_scan_ids);
  const DatasetSplit c = split_by_scan(ids, 0.7, 5);
  CHECK(c.train_scan_ids != a.train_scan_ids);
}

TEST_CASE("split keeps both sides non-empty") {
  const DatasetSplit s = split_by_scan({"a", "b"}, 0.99, 0);
  CHECK(s.train_scan_ids.size() == 1);
  CHECK(s.test_scan_ids.size() == 1);
  CHECK_THROWS_AS(split_by_scan({"a"}, 0.7, 0), InputError);
  CHECK_THROWS_AS(split_by_scan({"a", "b"}, 1.0, 0), ParameterError);
}
