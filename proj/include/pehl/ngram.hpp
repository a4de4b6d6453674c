#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "pehl/header_extract.hpp"

namespace pehl {

inline constexpr int kMinGram = 2;
inline constexpr int kMaxGram = 6;

/// Binary presence vector: sorted, strictly increasing active column indices.
struct SparseBinaryVector {
  std::vector<std::uint32_t> active;
  std::size_t dim = 0;

  bool operator==(const SparseBinaryVector&) const = default;
};

/// A gram packs up to six bytes big-endian into the low bits of a uint64, so
/// integer order equals lexicographic byte order for a fixed n.
struct Gram {
  int n = 0;
  std::uint64_t bytes = 0;

  bool operator==(const Gram&) const = default;
};

class NGramVocabulary {
 public:
  NGramVocabulary() = default;

  // Columns must already be ordered (n ascending, bytes ascending within n).
  NGramVocabulary(std::vector<int> n_values, std::vector<Gram> grams,
                  std::vector<std::uint32_t> doc_freq, std::size_t corpus_size,
                  double min_doc_frac);

  const std::vector<int>& n_values() const { return n_values_; }
  const std::vector<Gram>& grams() const { return grams_; }
  const std::vector<std::uint32_t>& doc_freq() const { return doc_freq_; }
  std::size_t corpus_size() const { return corpus_size_; }
  double min_doc_frac() const { return min_doc_frac_; }
  std::size_t dim() const { return grams_.size(); }

  // Column of a gram, or -1.
  std::int64_t column_of(const Gram& gram) const;

 private:
  std::vector<int> n_values_;
  std::vector<Gram> grams_;
  std::vector<std::uint32_t> doc_freq_;
  std::size_t corpus_size_ = 0;
  double min_doc_frac_ = 0.0;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> index_;  // per n
};

using ByteDocument = std::span<const std::uint8_t>;

// Distinct grams of length n in a document, sorted.
std::vector<std::uint64_t> distinct_grams(ByteDocument doc, int n);

/// Keeps grams whose document frequency / corpus size >= min_doc_frac. Each
/// gram counts at most once per document. Throws DataError on an empty corpus
/// or an n outside [2, 6].
NGramVocabulary build_vocabulary(std::span<const ByteDocument> docs, std::vector<int> n_values,
                                 double min_doc_frac = 0.01);
NGramVocabulary build_vocabulary(std::span<const HeaderRegion> regions,
                                 std::vector<int> n_values, double min_doc_frac = 0.01);

SparseBinaryVector vectorize(ByteDocument doc, const NGramVocabulary& vocab);
inline SparseBinaryVector vectorize(const HeaderRegion& region, const NGramVocabulary& vocab) {
  return vectorize(region.view(), vocab);
}

}  // namespace pehl
