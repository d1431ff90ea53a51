#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "mistrat/dialogue_acts.hpp"
#include "mistrat/errors.hpp"

using namespace mistrat;
using Sentences = std::vector<std::string>;

TEST_CASE("sentence splitting") {
  CHECK(split_sentences("It sounds hard. What would help?") == Sentences{"It sounds hard.", "What would help?"});
  CHECK(split_sentences("Wow! Really?! Okay") == Sentences{"Wow!", "Really?!", "Okay"});
  CHECK(split_sentences("So... you're not sure.") == Sentences{"So... you're not sure."});
  CHECK(split_sentences("Dr. Smith said so. I agree.") == Sentences{"Dr. Smith said so.", "I agree."});
  CHECK(split_sentences("Take it at 8 a.m. every day.") == Sentences{"Take it at 8 a.m. every day."});
  CHECK(split_sentences("J. K. wrote it. Fine.") == Sentences{"J. K. wrote it.", "Fine."});
  CHECK(split_sentences("She said \"stop.\" Then she left.") == Sentences{"She said \"stop.\"", "Then she left."});
  CHECK(split_sentences("You have 3.5 days left.") == Sentences{"You have 3.5 days left."});
  CHECK(split_sentences("No. I don't want that.") == Sentences{"No.", "I don't want that."});
  CHECK(split_sentences("   ").empty());
  CHECK(split_sentences("no terminal punctuation") == Sentences{"no terminal punctuation"});
}

TEST_CASE("every sentence of a split response is non-empty and text is preserved") {
  const std::string text = "Okay. So you tried before!  What changed? Mr. Lee agreed... mostly. Fine";
  std::string joined;
  for (const auto& s : split_sentences(text)) {
    CHECK(!s.empty());
    joined += s;
  }
  std::string squeezed;
  for (char c : text)
    if (c != ' ') squeezed += c;
  std::string jsq;
  for (char c : joined)
    if (c != ' ') jsq += c;
  CHECK(jsq == squeezed);
}

TEST_CASE("act names") {
  std::set<std::string> ids, displays;
  for (DialogueAct a : kAllActs) {
    ids.insert(std::string(to_string(a)));
    displays.insert(std::string(display_name(a)));
    CHECK(parse_act(to_string(a)) == a);
    CHECK(parse_act(display_name(a)) == a);
    CHECK(!definition(a).empty());
  }
  CHECK(ids.size() == kActCount);
  CHECK(displays.size() == kActCount);
  CHECK(parse_act("complex_reflection") == DialogueAct::ComplexReflection);
  CHECK(!parse_act("reflection"));
}

TEST_CASE("finding a label in a free-form reply") {
  CHECK(find_act_label("Question") == DialogueAct::Question);
  CHECK(find_act_label("  simple reflection.\n") == DialogueAct::SimpleReflection);
  CHECK(find_act_label("Label: Advice without Permission") == DialogueAct::AdviseWithoutPermission);
  CHECK(find_act_label("Advise with Permission") == DialogueAct::AdviseWithPermission);
  CHECK(find_act_label("The answer is Give Information.\nIt is not a Question.") == DialogueAct::GiveInformation);
  CHECK(!find_act_label("Question or Affirm"));
  CHECK(!find_act_label("I cannot tell."));
  CHECK(find_act_label("ComplexReflection") == DialogueAct::ComplexReflection);
}

TEST_CASE("definitions block lists every act once") {
  const auto block = render_definitions();
  for (DialogueAct a : kAllActs) CHECK(block.find("- " + std::string(display_name(a)) + ": ") != std::string::npos);
  CHECK(block.back() != '\n');
}

TEST_CASE("prompted classifier") {
  SUBCASE("clean label, prompt carries the sentence and taxonomy") {
    std::string seen;
    auto backend = std::make_shared<FunctionBackend>([&](const ChatCall& c) {
      seen = c.messages.front().content;
      return std::string("Complex Reflection");
    });
    Gateway g(backend, testing::uncached());
    PromptedActClassifier cls(g, PromptSet::defaults(), 2);
    const auto history = std::vector<Turn>{{Speaker::Interviewer, "old one", 0},
                                           {Speaker::Client, "middle", 1},
                                           {Speaker::Interviewer, "recent", 2},
                                           {Speaker::Client, "latest", 3}};
    auto l = cls.classify_sentence("It's been tough.", history);
    CHECK(l.act == DialogueAct::ComplexReflection);
    CHECK(!l.flagged);
    CHECK(seen.find("Sentence to label: It's been tough.") != std::string::npos);
    CHECK(seen.find("Emphasize Autonomy") != std::string::npos);
    CHECK(seen.find("latest") != std::string::npos);
    CHECK(seen.find("old one") == std::string::npos);
    CHECK(g.call_count(Role::Classifier) == 1);
  }
  SUBCASE("unparseable reply is reprompted once, then Other and flagged") {
    auto backend = std::make_shared<FunctionBackend>([](const ChatCall&) { return std::string("hmm, hard to say"); });
    Gateway g(backend, testing::uncached());
    PromptedActClassifier cls(g, PromptSet::defaults());
    auto l = cls.classify_sentence("Whatever.", {});
    CHECK(l.act == DialogueAct::Other);
    CHECK(l.flagged);
    CHECK(g.call_count(Role::Classifier) == 2);
  }
  SUBCASE("reprompt can recover") {
    int n = 0;
    auto backend = std::make_shared<FunctionBackend>([&](const ChatCall& c) {
      ++n;
      CHECK(c.messages.size() == (n == 1 ? 1u : 3u));
      return std::string(n == 1 ? "unsure" : "Affirm");
    });
    Gateway g(backend, testing::uncached());
    PromptedActClassifier cls(g, PromptSet::defaults());
    auto l = cls.classify_sentence("Well done.", {});
    CHECK(l.act == DialogueAct::Affirm);
    CHECK(!l.flagged);
  }
}

TEST_CASE("classify_response labels each sentence and degrades failures to flagged Other") {
  int n = 0;
  auto backend = std::make_shared<FunctionBackend>([&](const ChatCall& c) -> std::string {
    ++n;
    if (testing::classified_sentence(c).find("boom") != std::string::npos) throw ProtocolError("bad");
    return "Question";
  });
  GatewayConfig cfg = testing::uncached();
  cfg.retry.max_attempts = 1;
  Gateway g(backend, cfg);
  PromptedActClassifier cls(g, PromptSet::defaults());
  auto ls = classify_response(cls, "What now? This goes boom. Why?", {});
  REQUIRE(ls.size() == 3);
  CHECK(ls[0].act == DialogueAct::Question);
  CHECK(ls[1].act == DialogueAct::Other);
  CHECK(ls[1].flagged);
  CHECK(ls[2].act == DialogueAct::Question);
  CHECK(acts_of(ls) == std::vector<DialogueAct>{DialogueAct::Question, DialogueAct::Other, DialogueAct::Question});
}
