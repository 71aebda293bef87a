#include "lungcadex/ingest/manifest.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <json.hpp>

#include "lungcadex/errors.hpp"
#include "lungcadex/png_io.hpp"

namespace lungcadex::ingest {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "volume IO assumes a little-endian host");

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw SchemaError(where + ": missing \"" + key + "\"");
  return obj.at(key);
}

template <typename T>
T require_as(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": \"" + key + "\" has the wrong type");
  }
}

std::string id_string(const json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw SchemaError(where + ": identifier must be a string or integer");
}

std::array<double, 3> parse_spacing(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw SchemaError(where + ": spacing must be [z, y, x]");
  std::array<double, 3> s{};
  for (int i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw SchemaError(where + ": spacing entries must be numbers");
    s[i] = v[i].get<double>();
    if (!(s[i] > 0.0)) throw SchemaError(where + ": spacing must be positive");
  }
  return s;
}

fs::path resolve(const fs::path& root, const std::string& relative) {
  const fs::path p(relative);
  return p.is_absolute() ? p : (root / p).lexically_normal();
}

gallery::RadiomicReading parse_reading(const json& r, const std::string& where) {
  gallery::RadiomicReading reading;
  reading.reader_id = id_string(require(r, "reader_id", where), where);
  for (int i = 0; i < gallery::kFeatureCount; ++i) {
    const std::string key(gallery::kFeatureNames[i]);
    reading.attributes[i] = require_as<double>(r, key.c_str(), where);
  }
  reading.malignancy = require_as<double>(r, "malignancy", where);
  try {
    reading.validate();
  } catch (const ValidationError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return reading;
}

struct Sidecar {
  std::array<int, 3> dims{};
  std::array<double, 3> spacing{};
};

Sidecar read_sidecar(const fs::path& raw_path) {
  const fs::path header_path = sidecar_path(raw_path);
  if (!fs::exists(header_path)) throw DanglingReferenceError("volume header not found: " + header_path.string());
  std::ifstream in(header_path);
  json header;
  try {
    header = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("volume header " + header_path.string() + " is not JSON: " + e.what());
  }
  const std::string where = header_path.string();
  Sidecar sc;
  const json& dims = require(header, "dims", where);
  if (!dims.is_array() || dims.size() != 3) throw SchemaError(where + ": dims must be [z, y, x]");
  for (int i = 0; i < 3; ++i) {
    if (!dims[i].is_number_integer() || dims[i].get<int>() <= 0) throw SchemaError(where + ": dims must be positive");
    sc.dims[i] = dims[i].get<int>();
  }
  sc.spacing = parse_spacing(require(header, "spacing", where), where);
  return sc;
}

}  // namespace

std::vector<int> NoduleAnnotation::slice_indices() const {
  std::vector<int> out;
  out.reserve(contours.size());
  for (const SliceContour& c : contours) out.push_back(c.slice_index);
  return out;
}

const SliceContour& NoduleAnnotation::contour_at(int slice_index) const {
  for (const SliceContour& c : contours) {
    if (c.slice_index == slice_index) return c;
  }
  throw InputError("nodule " + nodule_id + " has no contour on slice " + std::to_string(slice_index));
}

int NoduleAnnotation::median_slice() const { return median_slice_index(slice_indices()); }

int median_nodule_slice(const NoduleAnnotation& annotation) { return annotation.median_slice(); }

fs::path sidecar_path(const fs::path& raw_path) {
  fs::path p = raw_path;
  return p.has_extension() ? p.replace_extension(".json") : fs::path(raw_path.string() + ".json");
}

void write_volume(const fs::path& raw_path, const CTVolume& volume) {
  volume.validate();
  if (raw_path.has_parent_path()) fs::create_directories(raw_path.parent_path());
  std::vector<std::int16_t> raw(volume.voxels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(volume.voxels[i], kMinHounsfield, kMaxHounsfield);
    raw[i] = static_cast<std::int16_t>(std::lround(v));
  }
  {
    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw DataError("cannot write volume: " + raw_path.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::int16_t)));
  }
  json header = {{"dims", volume.dims}, {"spacing", volume.spacing}};
  std::ofstream hout(sidecar_path(raw_path));
  hout << header.dump(2) << '\n';
}

CTVolume read_volume(const fs::path& raw_path, const std::string& scan_id) {
  if (!fs::exists(raw_path)) throw DanglingReferenceError("volume file not found: " + raw_path.string());
  const Sidecar sc = read_sidecar(raw_path);
  CTVolume volume(scan_id, sc.dims, sc.spacing);
  const std::size_t expected = volume.voxels.size() * sizeof(std::int16_t);
  if (fs::file_size(raw_path) != expected) {
    throw SchemaError("volume " + raw_path.string() + " size does not match its header dims");
  }
  std::vector<std::int16_t> raw(volume.voxels.size());
  std::ifstream in(raw_path, std::ios::binary);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (!in) throw DataError("failed reading volume " + raw_path.string());
  std::transform(raw.begin(), raw.end(), volume.voxels.begin(), [](std::int16_t v) { return static_cast<float>(v); });
  clamp_hounsfield(volume);
  return volume;
}

Dataset Dataset::load(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw MissingFileError("manifest not found: " + manifest_path.string());
  std::ifstream in(manifest_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const json* scans = &doc;
  if (doc.is_object()) scans = &require(doc, "scans", "manifest");
  if (!scans->is_array()) throw SchemaError("manifest must be a list of scans");

  const fs::path root = fs::absolute(manifest_path).parent_path();
  std::vector<ScanRecord> records;
  for (std::size_t s = 0; s < scans->size(); ++s) {
    const json& js = (*scans)[s];
    std::string where = "scan[" + std::to_string(s) + "]";
    ScanRecord rec;
    rec.scan_id = id_string(require(js, "scan_id", where), where);
    where = "scan " + rec.scan_id;
    rec.volume_path = resolve(root, require_as<std::string>(js, "volume_path", where));
    rec.spacing = parse_spacing(require(js, "spacing", where), where);
    if (!fs::exists(rec.volume_path)) {
      throw DanglingReferenceError(where + ": volume file not found: " + rec.volume_path.string());
    }
    const Sidecar sc = read_sidecar(rec.volume_path);
    rec.dims = sc.dims;
    if (sc.spacing != rec.spacing) throw SchemaError(where + ": spacing differs from the volume header");

    const json empty = json::array();
    const json& nodules = js.contains("nodules") ? js.at("nodules") : empty;
    if (!nodules.is_array()) throw SchemaError(where + ": nodules must be a list");
    for (const json& jn : nodules) {
      NoduleAnnotation ann;
      ann.scan_id = rec.scan_id;
      ann.nodule_id = id_string(require(jn, "nodule_id", where), where);
      const std::string nwhere = where + " nodule " + ann.nodule_id;
      const json& slices = require(jn, "slices", nwhere);
      if (!slices.is_array()) throw SchemaError(nwhere + ": slices must be a list");
      for (const json& jsl : slices) {
        SliceContour contour;
        contour.slice_index = require_as<int>(jsl, "index", nwhere);
        if (contour.slice_index < 0 || contour.slice_index >= rec.dims[0]) {
          throw SchemaError(nwhere + ": slice index outside the volume");
        }
        if (!ann.contours.empty() && contour.slice_index <= ann.contours.back().slice_index) {
          throw SchemaError(nwhere + ": slice indices must be strictly increasing");
        }
        const auto box = require_as<std::vector<int>>(jsl, "bbox", nwhere);
        if (box.size() != 4) throw SchemaError(nwhere + ": bbox must be [x0, y0, x1, y1]");
        contour.bbox = BBox{box[0], box[1], box[2], box[3]};
        const bool has_rle = jsl.contains("mask_rle");
        const bool has_path = jsl.contains("mask_path");
        if (has_rle == has_path) throw SchemaError(nwhere + ": each slice needs exactly one of mask_rle, mask_path");
        if (has_rle) {
          contour.mask = decode_rle(require_as<std::string>(jsl, "mask_rle", nwhere));
        } else {
          const fs::path mp = resolve(root, require_as<std::string>(jsl, "mask_path", nwhere));
          if (!fs::exists(mp)) throw DanglingReferenceError(nwhere + ": mask file not found: " + mp.string());
          contour.mask = read_png_mask(mp);
        }
        if (contour.mask.height != rec.dims[1] || contour.mask.width != rec.dims[2]) {
          throw SchemaError(nwhere + ": mask shape differs from the slice shape");
        }
        if (contour.mask.count() == 0) throw SchemaError(nwhere + ": empty mask");
        const BBox tight = contour.mask.bounding_box();
        if (intersect(tight, contour.bbox) != tight) throw SchemaError(nwhere + ": mask extends beyond its bbox");
        ann.contours.push_back(std::move(contour));
      }
      if (ann.contours.empty()) throw SchemaError(nwhere + ": nodule has no contoured slices");
      if (jn.contains("readings")) {
        const json& readings = jn.at("readings");
        if (!readings.is_array()) throw SchemaError(nwhere + ": readings must be a list");
        for (const json& r : readings) ann.readings.push_back(parse_reading(r, nwhere));
      }
      rec.nodules.push_back(std::move(ann));
    }
    records.push_back(std::move(rec));
  }
  Dataset ds = from_records(std::move(records), root);
  ds.manifest_path_ = fs::absolute(manifest_path);
  return ds;
}

Dataset Dataset::from_records(std::vector<ScanRecord> records, fs::path) {
  Dataset ds;
  ds.scans_ = std::move(records);
  for (std::size_t i = 0; i < ds.scans_.size(); ++i) {
    if (!ds.index_.emplace(ds.scans_[i].scan_id, i).second) {
      throw SchemaError("duplicate scan_id: " + ds.scans_[i].scan_id);
    }
  }
  return ds;
}

std::vector<std::string> Dataset::scan_ids() const {
  std::vector<std::string> ids;
  ids.reserve(scans_.size());
  for (const ScanRecord& s : scans_) ids.push_back(s.scan_id);
  return ids;
}

const ScanRecord& Dataset::scan(const std::string& scan_id) const {
  const auto it = index_.find(scan_id);
  if (it == index_.end()) throw InputError("unknown scan: " + scan_id);
  return scans_[it->second];
}

CTVolume Dataset::load_volume(const std::string& scan_id) const {
  const ScanRecord& rec = scan(scan_id);
  CTVolume volume = read_volume(rec.volume_path, rec.scan_id);
  if (volume.dims != rec.dims) throw SchemaError("volume dims changed since the manifest was loaded: " + scan_id);
  return volume;
}

Mask Dataset::slice_mask(const std::string& scan_id, int slice_index) const {
  const ScanRecord& rec = scan(scan_id);
  Mask mask(rec.dims[1], rec.dims[2]);
  for (const NoduleAnnotation& ann : rec.nodules) {
    for (const SliceContour& c : ann.contours) {
      if (c.slice_index != slice_index) continue;
      for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] |= c.mask.bits[i];
    }
  }
  return mask;
}

void write_manifest(const fs::path& manifest_path, const std::vector<ScanRecord>& scans) {
  const fs::path root = fs::absolute(manifest_path).parent_path();
  json doc = json::array();
  for (const ScanRecord& rec : scans) {
    fs::path vp = fs::absolute(rec.volume_path).lexically_normal();
    const fs::path rel = vp.lexically_relative(root);
    const bool below = !rel.empty() && *rel.begin() != "..";
    json js = {{"scan_id", rec.scan_id},
               {"volume_path", below ? rel.generic_string() : vp.generic_string()},
               {"spacing", rec.spacing},
               {"nodules", json::array()}};
    for (const NoduleAnnotation& ann : rec.nodules) {
      json jn = {{"nodule_id", ann.nodule_id}, {"slices", json::array()}, {"readings", json::array()}};
      for (const SliceContour& c : ann.contours) {
        jn["slices"].push_back({{"index", c.slice_index},
                                {"mask_rle", encode_rle(c.mask)},
                                {"bbox", {c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1}}});
      }
      for (const gallery::RadiomicReading& r : ann.readings) {
        json jr = {{"reader_id", r.reader_id}};
        for (int i = 0; i < gallery::kFeatureCount; ++i) jr[std::string(gallery::kFeatureNames[i])] = r.attributes[i];
        jr["malignancy"] = r.malignancy;
        jn["readings"].push_back(std::move(jr));
      }
      js["nodules"].push_back(std::move(jn));
    }
    doc.push_back(std::move(js));
  }
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
  out << doc.dump(1) << '\n';
}

}  // namespace lungcadex::ingest
