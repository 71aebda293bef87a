#include "lungcadex/cade/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <sstream>

#include "lungcadex/errors.hpp"

namespace lungcadex::cade {

Tokenizer::Tokenizer(int hash_buckets) : hash_buckets_(hash_buckets) {
  if (hash_buckets < 1) throw ConfigError("tokenizer needs at least one hash bucket");
}

const std::vector<std::string>& Tokenizer::base_vocabulary() {
  static const std::vector<std::string> vocab = {
      "nodule", "nodules", "lung", "lungs", "segment", "pulmonary", "lesion", "lesions",
      "mass",   "tumor",   "ct",   "slice", "the",     "a",         "all",    "find"};
  return vocab;
}

int Tokenizer::vocabulary_size() const { return static_cast<int>(base_vocabulary().size()) + hash_buckets_; }

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::istringstream words(lowered);
  std::vector<int> ids;
  const auto& vocab = base_vocabulary();
  for (std::string word; words >> word;) {
    const auto it = std::find(vocab.begin(), vocab.end(), word);
    if (it != vocab.end()) {
      ids.push_back(static_cast<int>(it - vocab.begin()));
      continue;
    }
    std::uint32_t hash = 2166136261u;
    for (unsigned char c : word) {
      hash ^= c;
      hash *= 16777619u;
    }
    ids.push_back(static_cast<int>(vocab.size()) + static_cast<int>(hash % static_cast<std::uint32_t>(hash_buckets_)));
  }
  return ids;
}

}  // namespace lungcadex::cade
