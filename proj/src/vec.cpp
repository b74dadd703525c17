#include "parl/vec.hpp"

#include <cmath>
#include <stdexcept>

#include "parl/rng.hpp"

namespace parl {

namespace {

bool is_alnum_ascii(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

void bump(Embedding& acc, std::string_view feature) {
  const std::uint64_t h = fnv1a64(feature, kEmbeddingHashSeed);
  const std::size_t bucket = static_cast<std::size_t>((h >> 1) % kEmbeddingDim);
  acc[bucket] += (h & 1) ? 1.0 : -1.0;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char raw : text) {
    if (is_alnum_ascii(raw)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(lower_ascii(raw));
    } else {
      pending_space = true;
    }
  }
  return out;
}

Embedding embed_text(std::string_view text) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw std::invalid_argument("embed_text: empty input");

  Embedding acc(kEmbeddingDim, 0.0);

  // Word unigrams and bigrams.
  std::vector<std::string_view> words;
  std::size_t start = 0;
  const std::string_view nv = norm;
  while (start < nv.size()) {
    std::size_t end = nv.find(' ', start);
    if (end == std::string_view::npos) end = nv.size();
    words.push_back(nv.substr(start, end - start));
    start = end + 1;
  }
  std::string feature;
  for (std::size_t i = 0; i < words.size(); ++i) {
    feature.assign("u\x1f");
    feature.append(words[i]);
    bump(acc, feature);
    if (i + 1 < words.size()) {
      feature.assign("b\x1f");
      feature.append(words[i]);
      feature.push_back(' ');
      feature.append(words[i + 1]);
      bump(acc, feature);
    }
  }

  // Character n-grams over the normalized string, spaces included so that
  // word boundaries contribute.
  for (int n = 3; n <= 5; ++n) {
    if (nv.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + n <= nv.size(); ++i) {
      feature.assign(1, static_cast<char>('0' + n));
      feature.push_back('\x1f');
      feature.append(nv.substr(i, n));
      bump(acc, feature);
    }
  }

  const double norm2 = l2_norm(acc);
  if (norm2 > 0.0) {
    for (double& x : acc) x /= norm2;
  }
  return acc;
}

double l2_norm(const Embedding& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.size() != static_cast<std::size_t>(kEmbeddingDim) ||
      b.size() != static_cast<std::size_t>(kEmbeddingDim)) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < kEmbeddingDim; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Embedding mean_pool(const std::vector<const Embedding*>& vectors) {
  Embedding out(kEmbeddingDim, 0.0);
  if (vectors.empty()) return out;
  for (const Embedding* v : vectors) {
    if (!v || v->size() != static_cast<std::size_t>(kEmbeddingDim)) {
      throw std::invalid_argument("mean_pool: dimension mismatch");
    }
    for (int i = 0; i < kEmbeddingDim; ++i) out[i] += (*v)[i];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (double& x : out) x *= inv;
  return out;
}

Embedding mean_pool(const std::vector<Embedding>& vectors) {
  std::vector<const Embedding*> ptrs;
  ptrs.reserve(vectors.size());
  for (const Embedding& v : vectors) ptrs.push_back(&v);
  return mean_pool(ptrs);
}

}  // namespace parl
