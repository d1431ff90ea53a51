#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mistrat {

enum class Speaker { Interviewer, Client };
enum class Quality { High, Low, Unknown };

std::string_view to_string(Speaker s);
std::string_view to_string(Quality q);
/// Accepts "interviewer"/"therapist" and "client", case-insensitively.
Speaker parse_speaker(std::string_view s);
/// "high"/"low", case-insensitively; anything else is Unknown.
Quality parse_quality(std::string_view s);

struct Turn {
  Speaker speaker = Speaker::Client;
  std::string text;
  std::size_t index = 0;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::string topic;
  Quality quality = Quality::Unknown;
  std::vector<Turn> turns;

  bool operator==(const Dialogue&) const = default;
};

/// One demonstration: everything said before an interviewer turn that answers
/// a client turn, plus that interviewer turn as the gold response.
struct ContextResponsePair {
  std::vector<Turn> history;
  std::string gold_response;
  std::string source_dialogue_id;
  std::size_t response_turn_index = 0;
  std::string topic;

  bool operator==(const ContextResponsePair&) const = default;
};

/// Column names of an AnnoMI-style transcript CSV.
struct AnnomiColumns {
  std::string transcript_id = "transcript_id";
  std::string topic = "topic";
  std::string quality = "mi_quality";
  std::string interlocutor = "interlocutor";
  std::string utterance = "utterance_text";
};

/// Parses an AnnoMI-style CSV. Dialogues appear in order of first transcript
/// id occurrence; consecutive rows by the same speaker merge into one turn.
/// Row numbers in errors count CSV records with the header as row 1.
std::vector<Dialogue> parse_annomi(std::istream& in, const AnnomiColumns& columns = {});

std::vector<Dialogue> filter_quality(std::span<const Dialogue> dialogues, Quality keep);

std::vector<ContextResponsePair> extract_pairs(const Dialogue& d);

struct CorpusSplit {
  std::vector<Dialogue> learn;
  std::vector<Dialogue> eval;
};

/// Seeded shuffle, first `n_eval` dialogues to eval, the rest to learn.
/// The shuffle is defined here (64-bit Mersenne Twister, Fisher-Yates), so
/// splits are identical across standard library implementations.
CorpusSplit split_corpus(std::span<const Dialogue> dialogues, std::uint64_t seed, std::size_t n_eval);

// Normalized JSON Lines: {id, topic, quality, turns:[{speaker, text}]} per line.
void write_corpus_jsonl(std::ostream& out, std::span<const Dialogue> dialogues);
std::vector<Dialogue> read_corpus_jsonl(std::istream& in);
/// A bare list of turns, one {speaker, text} object per line.
std::vector<Turn> read_turns_jsonl(std::istream& in);

void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);
void to_json(nlohmann::json& j, const Dialogue& d);
void from_json(const nlohmann::json& j, Dialogue& d);

}  // namespace mistrat
