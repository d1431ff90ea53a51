#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "mistrat/corpus.hpp"
#include "mistrat/errors.hpp"

using namespace mistrat;
using testing::fixture;

namespace {

std::vector<Dialogue> parse_text(const std::string& csv) {
  std::istringstream in(csv);
  return parse_annomi(in);
}

const char* kHeader = "transcript_id,topic,mi_quality,interlocutor,utterance_text\n";

Dialogue random_dialogue(std::mt19937& rng, int id) {
  Dialogue d;
  d.id = "d" + std::to_string(id);
  d.topic = "topic " + std::to_string(rng() % 5);
  d.quality = rng() % 2 ? Quality::High : Quality::Low;
  const std::size_t n = rng() % 9;
  for (std::size_t i = 0; i < n; ++i) {
    Speaker s = rng() % 2 ? Speaker::Client : Speaker::Interviewer;
    d.turns.push_back({s, "utterance " + std::to_string(rng() % 1000) + " \"quoted\", \xE2\x80\x99 x", i});
  }
  return d;
}

}  // namespace

TEST_CASE("ingest of the bundled AnnoMI-style sample") {
  std::ifstream in(fixture("annomi_sample.csv"));
  const auto ds = parse_annomi(in);
  REQUIRE(ds.size() == 3);
  CHECK(ds[0].id == "0");
  CHECK(ds[0].topic == "reducing alcohol consumption");
  CHECK(ds[0].quality == Quality::High);
  REQUIRE(ds[0].turns.size() == 5);
  CHECK(ds[0].turns[0].speaker == Speaker::Interviewer);
  CHECK(ds[0].turns[1].text == "Fine, I guess. My wife says I drink too much, but I don't see it.");
  CHECK(ds[0].turns[3].text == "\"Worried\" is one word for it.");
  CHECK(ds[0].turns[4].text == "She's been on your case,\nand that's tiring.");
  CHECK(ds[1].quality == Quality::Low);
  CHECK(ds[2].topic == "taking medicine");

  std::size_t pairs = 0;
  for (const auto& d : ds) pairs += extract_pairs(d).size();
  CHECK(pairs == 4);
  CHECK(filter_quality(ds, Quality::High).size() == 2);
}

TEST_CASE("turn indices are positions and speakers alternate after merging") {
  std::ifstream in(fixture("annomi_sample.csv"));
  for (const auto& d : parse_annomi(in))
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      CHECK(d.turns[i].index == i);
      if (i) CHECK(d.turns[i].speaker != d.turns[i - 1].speaker);
    }
}

TEST_CASE("two consecutive interviewer rows merge into one turn") {
  auto ds = parse_text(std::string(kHeader) + "a,t,high,therapist,Hello.\na,t,high,therapist,How are you?\n");
  REQUIRE(ds.size() == 1);
  REQUIRE(ds[0].turns.size() == 1);
  CHECK(ds[0].turns[0].text == "Hello. How are you?");
}

TEST_CASE("a client-first dialogue keeps the first pair at the second turn") {
  auto ds = parse_text(std::string(kHeader) + "a,t,high,client,Hi.\na,t,high,therapist,Hello.\n");
  auto ps = extract_pairs(ds[0]);
  REQUIRE(ps.size() == 1);
  CHECK(ps[0].response_turn_index == 1);
  CHECK(ps[0].history.size() == 1);
}

TEST_CASE("ingest errors") {
  SUBCASE("missing column names the column") {
    try {
      parse_text("transcript_id,topic,mi_quality,utterance_text\na,t,high,x\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("missing required column 'interlocutor'") != std::string::npos);
    }
  }
  SUBCASE("unknown interlocutor names the row") {
    try {
      parse_text(std::string(kHeader) + "a,t,high,client,Hi.\na,t,high,narrator,Once upon a time.\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
      CHECK(std::string(e.what()).find("unknown interlocutor") != std::string::npos);
    }
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(parse_text(""), EmptyCorpusError);
    CHECK_THROWS_AS(parse_text(kHeader), EmptyCorpusError);
  }
}

TEST_CASE("pair extraction properties over random dialogues") {
  std::mt19937 rng(11);
  for (int k = 0; k < 300; ++k) {
    const Dialogue d = random_dialogue(rng, k);
    const auto ps = extract_pairs(d);
    std::size_t expected = 0;
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      expected += d.turns[i].speaker == Speaker::Interviewer && d.turns[i - 1].speaker == Speaker::Client;
    CHECK(ps.size() == expected);
    for (const auto& p : ps) {
      REQUIRE(!p.history.empty());
      CHECK(p.history.back().speaker == Speaker::Client);
      CHECK(p.history.size() == p.response_turn_index);
      CHECK(std::equal(p.history.begin(), p.history.end(), d.turns.begin()));
      CHECK(p.gold_response == d.turns[p.response_turn_index].text);
      CHECK(p.source_dialogue_id == d.id);
      CHECK(p.topic == d.topic);
    }
  }
}

TEST_CASE("split is a seeded partition") {
  std::mt19937 rng(3);
  std::vector<Dialogue> ds;
  for (int i = 0; i < 20; ++i) ds.push_back(random_dialogue(rng, i));
  const auto a = split_corpus(ds, 42, 5);
  const auto b = split_corpus(ds, 42, 5);
  CHECK(a.eval == b.eval);
  CHECK(a.learn == b.learn);
  CHECK(a.eval.size() == 5);
  CHECK(a.learn.size() == 15);
  std::set<std::string> ids;
  for (const auto& d : a.eval) ids.insert(d.id);
  for (const auto& d : a.learn) ids.insert(d.id);
  CHECK(ids.size() == 20);
  const auto c = split_corpus(ds, 43, 5);
  CHECK(!(c.eval == a.eval));
  CHECK_THROWS_AS(split_corpus(ds, 1, 21), ArgumentError);
  CHECK(split_corpus(ds, 1, 0).eval.empty());
}

TEST_CASE("corpus JSON Lines round trip is the identity") {
  std::mt19937 rng(5);
  std::vector<Dialogue> ds;
  for (int i = 0; i < 50; ++i) ds.push_back(random_dialogue(rng, i));
  std::stringstream buf;
  write_corpus_jsonl(buf, ds);
  CHECK(read_corpus_jsonl(buf) == ds);
}

TEST_CASE("history files report the bad line") {
  std::istringstream in("{\"speaker\":\"client\",\"text\":\"hi\"}\n{\"speaker\":\"client\"}\n");
  try {
    read_turns_jsonl(in);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).rfind("line 2", 0) == 0);
  }
  const auto turns = testing::load_fixture_turns("hesitant_history.jsonl");
  REQUIRE(turns.size() == 4);
  CHECK(turns.back().speaker == Speaker::Client);
  CHECK(turns[3].index == 3);
}
