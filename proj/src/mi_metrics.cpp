#include "mistrat/mi_metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "mistrat/errors.hpp"

namespace mistrat {

ActCounts ActCounts::of(std::span<const DialogueAct> acts) {
  ActCounts c;
  for (DialogueAct a : acts) c.add(a);
  return c;
}

std::uint64_t ActCounts::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ActCounts& ActCounts::operator+=(const ActCounts& other) {
  for (std::size_t i = 0; i < kActCount; ++i) counts_[i] += other.counts_[i];
  return *this;
}

ActCounts accumulate(std::span<const ActCounts> parts) {
  ActCounts sum;
  for (const auto& p : parts) sum += p;
  return sum;
}

std::optional<double> Metric::value() const {
  if (!defined()) return std::nullopt;
  return scale * static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::string Metric::render(int decimals) const {
  if (!defined()) return (!percent && numerator > 0) ? "inf" : "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << *value();
  return os.str();
}

MiReport compute_report(const ActCounts& c) {
  using A = DialogueAct;
  const std::uint64_t total = c.total();
  const std::uint64_t reflections = c[A::SimpleReflection] + c[A::ComplexReflection];
  auto pct = [total](std::uint64_t num) { return Metric{num, total, 100.0, true}; };

  MiReport r;
  r.counts = c;
  r.mi_inconsistent_pct = pct(c[A::Confront] + c[A::AdviseWithoutPermission]);
  r.cs_ratio = Metric{c[A::ComplexReflection], c[A::SimpleReflection], 1.0, false};
  r.rq_ratio = Metric{reflections, c[A::Question], 1.0, false};
  r.al_pct = pct(c[A::Question] + reflections);
  r.na_pct = pct(total - c[A::Confront] - c[A::AdviseWithPermission] - c[A::AdviseWithoutPermission] -
                 c[A::GiveInformation]);
  return r;
}

std::string render_table(std::span<const std::pair<std::string, MiReport>> rows) {
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  auto cell = [&](const std::string& s) { os << std::setw(8) << s; };
  os << std::left << std::setw(static_cast<int>(name_w)) << "Method" << std::right;
  for (const char* h : {"%MI-i", "C/S", "R/Q", "%AL", "%NA"}) cell(h);
  os << '\n';
  for (const auto& [name, r] : rows) {
    os << std::left << std::setw(static_cast<int>(name_w)) << name << std::right;
    for (const Metric* m : {&r.mi_inconsistent_pct, &r.cs_ratio, &r.rq_ratio, &r.al_pct, &r.na_pct})
      cell(m->render());
    os << '\n';
  }
  return os.str();
}

namespace {

nlohmann::json metric_json(const Metric& m) {
  nlohmann::json v = m.value() ? nlohmann::json(*m.value()) : nlohmann::json(nullptr);
  return {{"value", v}, {"numerator", m.numerator}, {"denominator", m.denominator}, {"display", m.render()}};
}

}  // namespace

nlohmann::json metrics_json(const MiReport& r) {
  return {{"mi_inconsistent_pct", metric_json(r.mi_inconsistent_pct)},
          {"cs_ratio", metric_json(r.cs_ratio)},
          {"rq_ratio", metric_json(r.rq_ratio)},
          {"al_pct", metric_json(r.al_pct)},
          {"na_pct", metric_json(r.na_pct)}};
}

nlohmann::json counts_json(const ActCounts& c) {
  nlohmann::json j = nlohmann::json::object();
  for (DialogueAct a : kAllActs) j[std::string(to_string(a))] = c[a];
  j["total"] = c.total();
  return j;
}

nlohmann::json audit_json(const SentenceAudit& a) {
  return {{"dialogue_id", a.dialogue_id}, {"turn_index", a.turn_index}, {"sentence_index", a.sentence_index},
          {"text", a.text},               {"act", to_string(a.act)},    {"flagged", a.flagged}};
}

Evaluation evaluate_system(std::span<const ContextResponsePair> pairs, const Responder& responder,
                           ActClassifier& classifier, std::size_t parallelism) {
  struct Slot {
    bool ok = false;
    std::string error;
    std::vector<LabeledSentence> sentences;
  };
  std::vector<Slot> slots(pairs.size());
  auto run = [&](std::size_t i) {
    const auto& pair = pairs[i];
    std::string response;
    try {
      response = responder(pair);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
      spdlog::warn("evaluation: skipping {}#{}: {}", pair.source_dialogue_id, pair.response_turn_index, e.what());
      return;
    }
    slots[i].sentences = classify_response(classifier, response, pair.history);
    slots[i].ok = true;
  };

  const std::size_t workers = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(pairs.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();) run(i);
      });
  }

  Evaluation out;
  ActCounts counts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!slots[i].ok) {
      ++out.skipped;
      out.skip_reasons.push_back(pairs[i].source_dialogue_id + "#" + std::to_string(pairs[i].response_turn_index) +
                                 ": " + slots[i].error);
      continue;
    }
    ++out.pairs_evaluated;
    for (std::size_t s = 0; s < slots[i].sentences.size(); ++s) {
      const auto& ls = slots[i].sentences[s];
      counts.add(ls.act);
      out.audit.push_back({pairs[i].source_dialogue_id, pairs[i].response_turn_index, s, ls.text, ls.act, ls.flagged});
    }
  }
  out.report = compute_report(counts);
  return out;
}

nlohmann::json report_json(const Evaluation& eval, const nlohmann::json& config_fingerprint) {
  return {{"counts", counts_json(eval.report.counts)},
          {"metrics", metrics_json(eval.report)},
          {"pairs", eval.pairs_evaluated},
          {"skipped", eval.skipped},
          {"skip_reasons", eval.skip_reasons},
          {"notes",
           {"MI-inconsistent acts: Confront + AdviseWithoutPermission (direct/warn codes fold into these)",
            "all metric totals include the Other label"}},
          {"config", config_fingerprint}};
}

}  // namespace mistrat
