#include "mistrat/strategy_store.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

namespace {

constexpr const char* kFormat = "mistrat-strategy-store";
constexpr int kVersion = 1;

nlohmann::json fingerprint_json(const EmbedderFingerprint& f) {
  return {{"backend", f.backend}, {"dimension", f.dimension}, {"version", f.version}};
}

std::string describe(const EmbedderFingerprint& f) {
  return f.backend + "/" + std::to_string(f.dimension) + "/" + f.version;
}

bool ranks_before(const ScoredRecord& a, const ScoredRecord& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.position < b.position;
}

}  // namespace

StrategyStore::StrategyStore(std::shared_ptr<const Embedder> embedder) : embedder_(std::move(embedder)) {
  if (!embedder_) throw ConfigError("strategy store needs an embedder");
  fingerprint_ = embedder_->fingerprint();
}

std::string StrategyStore::next_id() {
  for (;;) {
    std::ostringstream os;
    os << "rec-" << std::setw(6) << std::setfill('0') << next_seq_++;
    if (!ids_.count(os.str())) return os.str();
  }
}

std::string StrategyStore::append(StrategyRecord record) {
  if (record.situation_vector.dimension() != fingerprint_.dimension)
    throw ConfigError("vector dimension " + std::to_string(record.situation_vector.dimension()) +
                      " does not match store dimension " + std::to_string(fingerprint_.dimension));
  if (!ids_.insert(record.record_id).second) throw FormatError("duplicate record id '" + record.record_id + "'");
  records_.push_back(std::move(record));
  return records_.back().record_id;
}

std::string StrategyStore::add(LearnedStrategy strategy) { return add(std::move(strategy), *embedder_); }

std::string StrategyStore::add(LearnedStrategy strategy, const Embedder& embedder) {
  if (embedder.fingerprint() != fingerprint_)
    throw ConfigError("embedder " + describe(embedder.fingerprint()) + " does not match store embedder " +
                      describe(fingerprint_));
  if (codec::trim(strategy.situation).empty()) throw ArgumentError("strategy has an empty situation");
  StrategyRecord r;
  r.situation_vector = embedder.embed(strategy.situation);
  r.strategy = std::move(strategy);
  r.record_id = next_id();
  return append(std::move(r));
}

std::vector<ScoredRecord> StrategyStore::retrieve_topk(std::string_view query, const RetrievalOptions& opts) const {
  if (records_.empty()) return {};
  return retrieve_topk(embedder_->embed(query), opts);
}

std::vector<ScoredRecord> StrategyStore::retrieve_topk(const EmbeddingVector& query,
                                                       const RetrievalOptions& opts) const {
  std::vector<ScoredRecord> scored;
  scored.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!r.strategy.verified && !opts.include_unverified) continue;
    scored.push_back({&r, similarity(query, r.situation_vector), i});
  }
  const std::size_t k = std::min(opts.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), ranks_before);
  scored.resize(k);
  return scored;
}

const StrategyRecord* StrategyStore::find(std::string_view record_id) const {
  auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.record_id == record_id; });
  return it == records_.end() ? nullptr : &*it;
}

nlohmann::json record_json(const StrategyRecord& r, bool include_vector) {
  nlohmann::json j{{"record_id", r.record_id},
                   {"rule_text", r.strategy.rule_text},
                   {"situation", r.strategy.situation},
                   {"verified", r.strategy.verified},
                   {"trials_used", r.strategy.trials_used},
                   {"provenance",
                    {{"dialogue_id", r.strategy.provenance.dialogue_id},
                     {"response_turn_index", r.strategy.provenance.response_turn_index}}}};
  if (include_vector) j["vector"] = codec::encode_f32_le(r.situation_vector.values);
  return j;
}

void StrategyStore::write(std::ostream& out) const {
  nlohmann::json header{
      {"type", "header"}, {"format", kFormat}, {"version", kVersion}, {"embedder", fingerprint_json(fingerprint_)}};
  out << header.dump() << '\n';
  for (const auto& r : records_) out << record_json(r, true).dump() << '\n';
}

void StrategyStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write strategy store " + path.string());
  write(out);
}

StrategyStore StrategyStore::read(std::istream& in, std::shared_ptr<const Embedder> embedder) {
  StrategyStore store(std::move(embedder));
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (codec::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (j.value("type", "") != "header" || j.value("format", "") != kFormat)
        throw FormatError("line " + std::to_string(lineno) + ": missing strategy store header");
      EmbedderFingerprint f;
      try {
        const auto& e = j.at("embedder");
        f = {e.at("backend").get<std::string>(), e.at("dimension").get<std::size_t>(),
             e.at("version").get<std::string>()};
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("line " + std::to_string(lineno) + ": bad embedder fingerprint: " + e.what());
      }
      if (f != store.fingerprint_)
        throw ConfigError("store was built with embedder " + describe(f) + " but " + describe(store.fingerprint_) +
                          " is configured");
      have_header = true;
      continue;
    }
    try {
      if (j.value("type", "") == "header") throw FormatError("second header");
      StrategyRecord r;
      r.record_id = j.at("record_id").get<std::string>();
      r.strategy.rule_text = j.at("rule_text").get<std::string>();
      r.strategy.situation = j.at("situation").get<std::string>();
      r.strategy.verified = j.at("verified").get<bool>();
      r.strategy.trials_used = j.at("trials_used").get<std::size_t>();
      r.strategy.provenance.dialogue_id = j.at("provenance").at("dialogue_id").get<std::string>();
      r.strategy.provenance.response_turn_index = j.at("provenance").at("response_turn_index").get<std::size_t>();
      auto values = codec::decode_f32_le(j.at("vector").get<std::string>());
      if (values.size() != store.fingerprint_.dimension)
        throw FormatError("vector has dimension " + std::to_string(values.size()));
      double sq = 0.0;
      for (float v : values) sq += static_cast<double>(v) * v;
      r.situation_vector = {std::move(values), static_cast<float>(std::sqrt(sq))};
      store.append(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError("strategy store has no header line");
  return store;
}

StrategyStore StrategyStore::load(const std::filesystem::path& path, std::shared_ptr<const Embedder> embedder) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open strategy store " + path.string());
  return read(in, std::move(embedder));
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> parse_menu_choice(std::string_view reply, std::size_t count) {
  auto it = std::find_if(reply.begin(), reply.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  if (it == reply.end()) return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(&*it, reply.data() + reply.size(), value);
  if (ec != std::errc{} || value < 1 || value > count) return std::nullopt;
  return value - 1;
}

Reranker::Reranker(Gateway& gateway, PromptSet prompts, std::size_t history_turns)
    : gateway_(gateway), prompts_(std::move(prompts)), history_turns_(history_turns) {}

std::string Reranker::render_prompt(std::span<const Turn> history, std::span<const ScoredRecord> candidates,
                                    std::string_view topic) const {
  std::string menu;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    menu += std::to_string(i + 1) + ". " + candidates[i].record->strategy.rule_text;
    if (i + 1 < candidates.size()) menu += '\n';
  }
  return prompts_.rerank.render({{"history", render_history(history, history_turns_, topic)}, {"candidates", menu}});
}

RerankOutcome Reranker::rerank(std::span<const Turn> history, std::span<const ScoredRecord> candidates,
                               std::string_view topic) {
  if (candidates.empty()) throw ArgumentError("rerank needs at least one candidate");
  if (candidates.size() == 1) return {0, false, false};

  std::vector<Message> messages{{MessageRole::User, render_prompt(history, candidates, topic)}};
  std::string reply = gateway_.complete(gateway_.make_call(Role::Reranker, messages)).text;
  if (auto i = parse_menu_choice(reply, candidates.size())) return {*i, true, false};

  messages.push_back({MessageRole::Assistant, reply});
  messages.push_back({MessageRole::User, "Reply with a single number between 1 and " +
                                             std::to_string(candidates.size()) + "."});
  reply = gateway_.complete(gateway_.make_call(Role::Reranker, messages)).text;
  if (auto i = parse_menu_choice(reply, candidates.size())) return {*i, true, false};
  return {0, true, true};
}

}  // namespace mistrat
