#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace parl {

// Embedding vectors are plain 384-component double vectors. The embedder is a
// deterministic hashed n-gram stand-in for a sentence encoder: identical text
// maps to bit-identical vectors on every platform.

inline constexpr int kEmbeddingDim = 384;

using Embedding = std::vector<double>;

// Changing this constant changes every embedding and therefore the on-disk
// corpus format; treat it as frozen.
inline constexpr std::uint64_t kEmbeddingHashSeed = 0x7a3142f09b5cd1e6ULL;

// Lowercases, maps non-alphanumerics to spaces, collapses runs of spaces.
std::string normalize_text(std::string_view text);

// Feature-hashes word unigrams, word bigrams, and character 3/4/5-grams of the
// normalized text into 384 signed buckets, then L2-normalizes.
// Throws std::invalid_argument if the text is empty after normalization.
Embedding embed_text(std::string_view text);

// a.b / (|a||b|); 0.0 if either vector is all zeros.
double cosine_similarity(const Embedding& a, const Embedding& b);

// Element-wise mean; the empty list yields the zero vector (not re-normalized).
Embedding mean_pool(const std::vector<const Embedding*>& vectors);
Embedding mean_pool(const std::vector<Embedding>& vectors);

double l2_norm(const Embedding& v);

}  // namespace parl
