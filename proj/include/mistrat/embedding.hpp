#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mistrat/gateway.hpp"

namespace mistrat {

struct EmbeddingVector {
  std::vector<float> values;
  float norm = 0.0f;  // L2 norm of `values`, recorded for audit

  std::size_t dimension() const { return values.size(); }
};

/// Scales `values` to unit L2 norm. A zero vector is an ArgumentError.
EmbeddingVector normalized(std::vector<float> values);

/// Dot product; cosine similarity for unit vectors. Dimension mismatch is an
/// ArgumentError.
float similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct EmbedderFingerprint {
  std::string backend;
  std::size_t dimension = 0;
  std::string version;

  bool operator==(const EmbedderFingerprint&) const = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Unit-norm embedding. Empty (after trimming) text is an ArgumentError.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual EmbedderFingerprint fingerprint() const = 0;
  std::size_t dimension() const { return fingerprint().dimension; }
};

/// Signed feature hashing of case-folded unigrams and bigrams.
///
/// Tokens are maximal runs of ASCII alphanumerics, apostrophes (U+2019 is
/// folded to ') and non-ASCII bytes. Each unigram "u:<tok>" and bigram
/// "b:<tok> <tok>" is hashed with seeded 64-bit FNV-1a; the low bits pick a
/// bucket and bit 32 picks the sign. Text with no tokens hashes as one
/// feature made of the whole trimmed string.
class HashedEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 384;
  static constexpr std::uint64_t kSeed = 0x6d69737472617431ULL;

  explicit HashedEmbedder(std::size_t dimension = kDefaultDimension);

  EmbeddingVector embed(std::string_view text) const override;
  EmbedderFingerprint fingerprint() const override { return {"hashed", dimension_, "fnv1a64-uni-bi-v1"}; }

  static std::vector<std::string> tokenize(std::string_view text);
  static std::uint64_t feature_hash(std::string_view feature);

 private:
  std::size_t dimension_;
};

/// JSON-over-HTTP embedding service: {model, input} -> {vector}.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(HttpEndpoint endpoint, std::string model, std::size_t dimension);

  EmbeddingVector embed(std::string_view text) const override;
  EmbedderFingerprint fingerprint() const override { return {"remote", dimension_, model_}; }

 private:
  HttpEndpoint endpoint_;
  std::string model_;
  std::size_t dimension_;
};

}  // namespace mistrat
