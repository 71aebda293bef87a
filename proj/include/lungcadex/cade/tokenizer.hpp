#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lungcadex::cade {

/// Lowercasing whitespace tokenizer over a small fixed vocabulary. Unknown words
/// fall into one of `hash_buckets` ids placed after the vocabulary.
class Tokenizer {
 public:
  explicit Tokenizer(int hash_buckets = 32);

  std::vector<int> encode(std::string_view text) const;
  int vocabulary_size() const;
  int hash_buckets() const { return hash_buckets_; }

  static const std::vector<std::string>& base_vocabulary();

 private:
  int hash_buckets_;
};

}  // namespace lungcadex::cade
