#include "pehl/ngram.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "pehl/error.hpp"

namespace pehl {

namespace {

std::vector<int> normalize_ns(std::vector<int> ns) {
  if (ns.empty()) throw DataError("n-gram sizes must not be empty");
  for (int n : ns) {
    if (n < kMinGram || n > kMaxGram) {
      throw DataError("n-gram size " + std::to_string(n) + " outside [2, 6]");
    }
  }
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  return ns;
}

}  // namespace

NGramVocabulary::NGramVocabulary(std::vector<int> n_values, std::vector<Gram> grams,
                                 std::vector<std::uint32_t> doc_freq, std::size_t corpus_size,
                                 double min_doc_frac)
    : n_values_(std::move(n_values)),
      grams_(std::move(grams)),
      doc_freq_(std::move(doc_freq)),
      corpus_size_(corpus_size),
      min_doc_frac_(min_doc_frac),
      index_(kMaxGram + 1) {
  for (std::size_t col = 0; col < grams_.size(); ++col) {
    index_[grams_[col].n].emplace(grams_[col].bytes, static_cast<std::uint32_t>(col));
  }
}

std::int64_t NGramVocabulary::column_of(const Gram& gram) const {
  if (gram.n < kMinGram || gram.n > kMaxGram) return -1;
  const auto& idx = index_[gram.n];
  const auto it = idx.find(gram.bytes);
  return it == idx.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::vector<std::uint64_t> distinct_grams(ByteDocument doc, int n) {
  std::vector<std::uint64_t> out;
  if (doc.size() < static_cast<std::size_t>(n)) return out;
  out.reserve(doc.size() - n + 1);
  const std::uint64_t mask = (std::uint64_t{1} << (8 * n)) - 1;
  std::uint64_t window = 0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    window = ((window << 8) | doc[i]) & mask;
    if (i + 1 >= static_cast<std::size_t>(n)) out.push_back(window);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NGramVocabulary build_vocabulary(std::span<const ByteDocument> docs, std::vector<int> n_values,
                                 double min_doc_frac) {
  if (docs.empty()) throw DataError("cannot build an n-gram vocabulary from an empty corpus");
  if (!(min_doc_frac >= 0.0 && min_doc_frac <= 1.0)) {
    throw DataError("min_doc_frac must lie in [0, 1]");
  }
  n_values = normalize_ns(std::move(n_values));
  const double corpus = static_cast<double>(docs.size());

  std::vector<Gram> grams;
  std::vector<std::uint32_t> freq;
  for (int n : n_values) {
    // Ordered map: keys come out sorted, which fixes the column order.
    std::map<std::uint64_t, std::uint32_t> counts;
    for (const auto& doc : docs) {
      for (std::uint64_t g : distinct_grams(doc, n)) ++counts[g];
    }
    for (const auto& [g, df] : counts) {
      if (static_cast<double>(df) / corpus >= min_doc_frac) {
        grams.push_back(Gram{n, g});
        freq.push_back(df);
      }
    }
  }
  return NGramVocabulary(std::move(n_values), std::move(grams), std::move(freq), docs.size(),
                         min_doc_frac);
}

NGramVocabulary build_vocabulary(std::span<const HeaderRegion> regions,
                                 std::vector<int> n_values, double min_doc_frac) {
  std::vector<ByteDocument> docs;
  docs.reserve(regions.size());
  for (const auto& r : regions) docs.push_back(r.view());
  return build_vocabulary(std::span<const ByteDocument>(docs), std::move(n_values), min_doc_frac);
}

SparseBinaryVector vectorize(ByteDocument doc, const NGramVocabulary& vocab) {
  SparseBinaryVector v;
  v.dim = vocab.dim();
  for (int n : vocab.n_values()) {
    for (std::uint64_t g : distinct_grams(doc, n)) {
      const auto col = vocab.column_of(Gram{n, g});
      if (col >= 0) v.active.push_back(static_cast<std::uint32_t>(col));
    }
  }
  std::sort(v.active.begin(), v.active.end());
  return v;
}

}  // namespace pehl
