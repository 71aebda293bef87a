#include "lungcadex/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "lungcadex/errors.hpp"

namespace lungcadex::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'C', 'X', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw SchemaError("truncated checkpoint: " + path.string());
  return value;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const ParameterStore& store) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const Tensor& t = e.var.value();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw SchemaError("not a checkpoint archive: " + path.string());
  }
  Checkpoint ckpt;
  const auto header_len = get<std::uint64_t>(in, path);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw SchemaError("truncated checkpoint header");
  try {
    ckpt.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw SchemaError("truncated tensor name");
    const auto rank = get<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::int32_t>(in, path);
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw SchemaError("truncated tensor data for " + name);
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void load_parameters(const Checkpoint& checkpoint, ParameterStore& store) {
  auto& entries = store.entries();
  if (checkpoint.tensors.size() != entries.size()) {
    throw ConfigError("checkpoint has " + std::to_string(checkpoint.tensors.size()) + " tensors, model expects " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = checkpoint.tensors[i];
    if (name != entries[i].name || tensor.shape != entries[i].var.value().shape) {
      throw ConfigError("checkpoint tensor " + name + " " + shape_string(tensor.shape) + " does not match model " +
                        entries[i].name + " " + shape_string(entries[i].var.value().shape));
    }
    entries[i].var.mutable_value() = tensor;
  }
}

std::size_t import_parameters(const std::filesystem::path& path, ParameterStore& store,
                              const std::vector<std::string>& prefixes) {
  const Checkpoint checkpoint = read_checkpoint(path);
  for (const auto& [name, tensor] : checkpoint.tensors) {
    const bool allowed = std::any_of(prefixes.begin(), prefixes.end(),
                                     [&name](const std::string& p) { return name.rfind(p, 0) == 0; });
    if (!allowed) throw ConfigError(path.string() + ": tensor " + name + " may not be imported");
    const int id = store.find(name);
    if (id < 0) throw ConfigError(path.string() + ": model has no parameter " + name);
    auto& entry = store.entries()[std::size_t(id)];
    if (tensor.shape != entry.var.value().shape) {
      throw ConfigError(path.string() + ": tensor " + name + " " + shape_string(tensor.shape) +
                        " does not match model " + shape_string(entry.var.value().shape));
    }
  }
  for (const auto& [name, tensor] : checkpoint.tensors) {
    store.entries()[std::size_t(store.find(name))].var.mutable_value() = tensor;
  }
  return checkpoint.tensors.size();
}

}  // namespace lungcadex::nn
