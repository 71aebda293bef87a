#include "lungcadex/nn/parameters.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>

#include "lungcadex/errors.hpp"

namespace lungcadex::nn {

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  entries_.clear();
  entries_.reserve(other.entries_.size());
  for (const Entry& e : other.entries_) {
    Var copy = e.trainable ? Var::parameter(e.var.value()) : Var::constant(e.var.value());
    entries_.push_back({e.name, std::move(copy), e.trainable});
  }
  return *this;
}

int ParameterStore::create(std::string name, Tensor init, bool trainable) {
  if (find(name) >= 0) throw ConfigError("duplicate parameter name: " + name);
  Var var = trainable ? Var::parameter(std::move(init)) : Var::constant(std::move(init));
  entries_.push_back({std::move(name), std::move(var), trainable});
  return static_cast<int>(entries_.size()) - 1;
}

int ParameterStore::create_normal(std::string name, Shape shape, int fan_in, Rng& rng, float gain,
                                  bool trainable) {
  Tensor t(std::move(shape));
  const double stddev = gain / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (float& v : t.data) v = static_cast<float>(rng.normal(0.0, stddev));
  return create(std::move(name), std::move(t), trainable);
}

int ParameterStore::create_filled(std::string name, Shape shape, float value, bool trainable) {
  return create(std::move(name), Tensor(std::move(shape), value), trainable);
}

int ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParameterStore::set_trainable(std::string_view prefix, bool trainable) {
  for (Entry& e : entries_) {
    if (!e.name.starts_with(prefix)) continue;
    e.trainable = trainable;
    e.var.set_requires_grad(trainable);
  }
}

void ParameterStore::zero_grad() {
  for (Entry& e : entries_) e.var.zero_grad();
}

std::uint64_t ParameterStore::checksum(std::string_view prefix) const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&hash](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  };
  for (const Entry& e : entries_) {
    if (!e.name.starts_with(prefix)) continue;
    feed(e.name.data(), e.name.size());
    feed(e.var.value().shape.data(), e.var.value().shape.size() * sizeof(int));
    feed(e.var.value().data.data(), e.var.value().data.size() * sizeof(float));
  }
  return hash;
}

std::size_t ParameterStore::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (e.name.starts_with(prefix)) n += e.var.value().size();
  }
  return n;
}

}  // namespace lungcadex::nn
