#include "mistrat/corpus.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>

#include "mistrat/codec.hpp"
#include "mistrat/errors.hpp"

namespace mistrat {

std::string_view to_string(Speaker s) {
  return s == Speaker::Interviewer ? "interviewer" : "client";
}

std::string_view to_string(Quality q) {
  switch (q) {
    case Quality::High: return "high";
    case Quality::Low: return "low";
    case Quality::Unknown: break;
  }
  return "unknown";
}

Speaker parse_speaker(std::string_view s) {
  auto v = codec::to_lower(codec::trim(s));
  if (v == "therapist" || v == "interviewer") return Speaker::Interviewer;
  if (v == "client") return Speaker::Client;
  throw FormatError("unknown speaker '" + std::string(s) + "'");
}

Quality parse_quality(std::string_view s) {
  auto v = codec::to_lower(codec::trim(s));
  if (v == "high") return Quality::High;
  if (v == "low") return Quality::Low;
  return Quality::Unknown;
}

namespace {

// RFC 4180 records: quoted fields, doubled quotes, embedded newlines, CRLF.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  std::optional<std::vector<std::string>> next() {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool any = false;
    int c;
    while ((c = in_.get()) != EOF) {
      any = true;
      char ch = static_cast<char>(c);
      if (quoted) {
        if (ch == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          field.push_back(ch);
        }
        continue;
      }
      if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (ch == '\n' || ch == '\r') {
        if (ch == '\r' && in_.peek() == '\n') in_.get();
        fields.push_back(std::move(field));
        return fields;
      } else {
        field.push_back(ch);
      }
    }
    if (quoted) throw FormatError("unterminated quoted CSV field");
    if (!any) return std::nullopt;
    fields.push_back(std::move(field));
    return fields;
  }

 private:
  std::istream& in_;
};

bool blank_record(const std::vector<std::string>& r) {
  return std::all_of(r.begin(), r.end(), [](const std::string& f) { return codec::trim(f).empty(); });
}

}  // namespace

std::vector<Dialogue> parse_annomi(std::istream& in, const AnnomiColumns& columns) {
  CsvReader reader(in);
  auto header = reader.next();
  while (header && blank_record(*header)) header = reader.next();
  if (!header) throw EmptyCorpusError();

  if (!header->empty() && header->front().starts_with("\xEF\xBB\xBF")) header->front().erase(0, 3);
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header->size(); ++i)
      if (codec::trim((*header)[i]) == name) return i;
    throw FormatError("missing required column '" + name + "'");
  };
  const std::size_t c_id = column(columns.transcript_id);
  const std::size_t c_topic = column(columns.topic);
  const std::size_t c_quality = column(columns.quality);
  const std::size_t c_speaker = column(columns.interlocutor);
  const std::size_t c_text = column(columns.utterance);
  const std::size_t needed = std::max({c_id, c_topic, c_quality, c_speaker, c_text}) + 1;

  std::vector<Dialogue> out;
  std::map<std::string, std::size_t> by_id;
  std::size_t row = 1;
  std::size_t data_rows = 0;
  while (auto rec = reader.next()) {
    ++row;
    if (blank_record(*rec)) continue;
    ++data_rows;
    if (rec->size() < needed)
      throw FormatError("row " + std::to_string(row) + ": expected at least " + std::to_string(needed) +
                        " fields, found " + std::to_string(rec->size()));
    const auto& r = *rec;
    Speaker speaker;
    try {
      speaker = parse_speaker(r[c_speaker]);
    } catch (const FormatError&) {
      throw FormatError("row " + std::to_string(row) + ": unknown interlocutor '" + r[c_speaker] + "'");
    }
    std::string id = codec::trim(r[c_id]);
    auto [it, inserted] = by_id.try_emplace(id, out.size());
    if (inserted) {
      Dialogue d;
      d.id = id;
      d.topic = codec::trim(r[c_topic]);
      d.quality = parse_quality(r[c_quality]);
      out.push_back(std::move(d));
    }
    Dialogue& d = out[it->second];
    std::string text = codec::trim(r[c_text]);
    if (text.empty()) continue;
    if (!d.turns.empty() && d.turns.back().speaker == speaker) {
      d.turns.back().text += ' ';
      d.turns.back().text += text;
    } else {
      d.turns.push_back(Turn{speaker, std::move(text), d.turns.size()});
    }
  }
  if (data_rows == 0) throw EmptyCorpusError();
  return out;
}

std::vector<Dialogue> filter_quality(std::span<const Dialogue> dialogues, Quality keep) {
  std::vector<Dialogue> out;
  std::copy_if(dialogues.begin(), dialogues.end(), std::back_inserter(out),
               [keep](const Dialogue& d) { return d.quality == keep; });
  return out;
}

std::vector<ContextResponsePair> extract_pairs(const Dialogue& d) {
  std::vector<ContextResponsePair> out;
  for (std::size_t i = 1; i < d.turns.size(); ++i) {
    if (d.turns[i].speaker != Speaker::Interviewer || d.turns[i - 1].speaker != Speaker::Client) continue;
    ContextResponsePair p;
    p.history.assign(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(i));
    p.gold_response = d.turns[i].text;
    p.source_dialogue_id = d.id;
    p.response_turn_index = i;
    p.topic = d.topic;
    out.push_back(std::move(p));
  }
  return out;
}

CorpusSplit split_corpus(std::span<const Dialogue> dialogues, std::uint64_t seed, std::size_t n_eval) {
  if (n_eval > dialogues.size())
    throw ArgumentError("n_eval (" + std::to_string(n_eval) + ") exceeds corpus size (" +
                        std::to_string(dialogues.size()) + ")");
  std::vector<std::size_t> order(dialogues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_eval ? split.eval : split.learn).push_back(dialogues[order[i]]);
  return split;
}

void to_json(nlohmann::json& j, const Turn& t) {
  j = nlohmann::json{{"speaker", to_string(t.speaker)}, {"text", t.text}};
}

void from_json(const nlohmann::json& j, Turn& t) {
  t.speaker = parse_speaker(j.at("speaker").get<std::string>());
  t.text = j.at("text").get<std::string>();
  if (codec::trim(t.text).empty()) throw FormatError("turn text is empty");
}

void to_json(nlohmann::json& j, const Dialogue& d) {
  j = nlohmann::json{{"id", d.id}, {"topic", d.topic}, {"quality", to_string(d.quality)}, {"turns", d.turns}};
}

void from_json(const nlohmann::json& j, Dialogue& d) {
  d.id = j.at("id").get<std::string>();
  d.topic = j.value("topic", "");
  d.quality = parse_quality(j.value("quality", "unknown"));
  d.turns = j.at("turns").get<std::vector<Turn>>();
  for (std::size_t i = 0; i < d.turns.size(); ++i) d.turns[i].index = i;
}

void write_corpus_jsonl(std::ostream& out, std::span<const Dialogue> dialogues) {
  for (const auto& d : dialogues) out << nlohmann::json(d).dump() << '\n';
}

namespace {

template <typename T>
std::vector<T> read_jsonl(std::istream& in) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (codec::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const std::exception& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<Dialogue> read_corpus_jsonl(std::istream& in) { return read_jsonl<Dialogue>(in); }

std::vector<Turn> read_turns_jsonl(std::istream& in) {
  auto turns = read_jsonl<Turn>(in);
  for (std::size_t i = 0; i < turns.size(); ++i) turns[i].index = i;
  return turns;
}

}  // namespace mistrat
