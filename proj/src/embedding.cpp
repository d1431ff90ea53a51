#include "mistrat/embedding.hpp"

#include <cctype>
#include <cmath>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

EmbeddingVector normalized(std::vector<float> values) {
  double sq = 0.0;
  for (float v : values) sq += static_cast<double>(v) * v;
  if (sq == 0.0 || !std::isfinite(sq)) throw ArgumentError("cannot normalize a zero or non-finite vector");
  const double inv = 1.0 / std::sqrt(sq);
  double check = 0.0;
  for (float& v : values) {
    v = static_cast<float>(v * inv);
    check += static_cast<double>(v) * v;
  }
  return {std::move(values), static_cast<float>(std::sqrt(check))};
}

float similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.values.size() != b.values.size())
    throw ArgumentError("embedding dimension mismatch: " + std::to_string(a.values.size()) + " vs " +
                        std::to_string(b.values.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  return static_cast<float>(dot);
}

HashedEmbedder::HashedEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ArgumentError("embedding dimension must be positive");
}

std::vector<std::string> HashedEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto c = static_cast<unsigned char>(text[i]);
    // U+2019 RIGHT SINGLE QUOTATION MARK, as in "it’s".
    if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        static_cast<unsigned char>(text[i + 2]) == 0x99) {
      cur.push_back('\'');
      i += 2;
    } else if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::uint64_t HashedEmbedder::feature_hash(std::string_view feature) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ kSeed;
  for (unsigned char c : feature) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EmbeddingVector HashedEmbedder::embed(std::string_view text) const {
  const std::string trimmed = codec::trim(text);
  if (trimmed.empty()) throw ArgumentError("cannot embed empty text");
  std::vector<double> acc(dimension_, 0.0);
  auto add = [&](const std::string& feature) {
    std::uint64_t h = feature_hash(feature);
    acc[h % dimension_] += ((h >> 32) & 1U) ? -1.0 : 1.0;
  };
  auto tokens = tokenize(trimmed);
  if (tokens.empty()) add("s:" + trimmed);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add("u:" + tokens[i]);
    if (i + 1 < tokens.size()) add("b:" + tokens[i] + " " + tokens[i + 1]);
  }
  std::vector<float> values(acc.begin(), acc.end());
  bool all_zero = true;
  for (float v : values) all_zero = all_zero && v == 0.0f;
  // Signed collisions can cancel out completely; fall back to the raw string.
  if (all_zero) {
    std::uint64_t h = feature_hash("s:" + trimmed);
    values[h % dimension_] = 1.0f;
  }
  return normalized(std::move(values));
}

RemoteEmbedder::RemoteEmbedder(HttpEndpoint endpoint, std::string model, std::size_t dimension)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dimension_(dimension) {
  if (endpoint_.base_url.empty()) throw ConfigError("embedding endpoint URL is empty");
}

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
  const std::string trimmed = codec::trim(text);
  if (trimmed.empty()) throw ArgumentError("cannot embed empty text");
  nlohmann::json reply;
  try {
    reply = post_json(endpoint_, {{"model", model_}, {"input", trimmed}});
  } catch (const TransientError& e) {
    throw BackendError(std::string("embedding request failed: ") + e.what(), 1);
  }
  std::vector<float> values;
  try {
    values = reply.at("vector").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("embedding reply has no vector: ") + e.what());
  }
  if (values.size() != dimension_)
    throw ProtocolError("embedding reply has dimension " + std::to_string(values.size()) + ", expected " +
                        std::to_string(dimension_));
  return normalized(std::move(values));
}

}  // namespace mistrat
