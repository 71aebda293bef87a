#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lungcadex/nn/autograd.hpp"
#include "lungcadex/rng.hpp"

namespace lungcadex::nn {

/// Named, ordered collection of model parameters. Layers refer to entries by
/// index, so copying a store deep-copies the model.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable = true;
  };

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  int create(std::string name, Tensor init, bool trainable = true);

  /// Normal(0, gain / sqrt(fan_in)) initialization.
  int create_normal(std::string name, Shape shape, int fan_in, Rng& rng, float gain = 1.0f,
                    bool trainable = true);
  int create_filled(std::string name, Shape shape, float value, bool trainable = true);

  const Var& at(int id) const { return entries_.at(static_cast<std::size_t>(id)).var; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  int find(std::string_view name) const;

  /// Marks every parameter whose name starts with prefix.
  void set_trainable(std::string_view prefix, bool trainable);
  void zero_grad();

  /// FNV-1a over names, shapes and raw float bytes of every parameter under prefix.
  std::uint64_t checksum(std::string_view prefix = "") const;
  std::size_t parameter_count(std::string_view prefix = "") const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace lungcadex::nn
