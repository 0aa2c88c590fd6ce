#pragma once

// The three-question evaluation protocol: does the image include both
// subjects (Existence), are both recognizable (Recognizability), and are
// they free of blending (Not a Mixture). Scores pool every question-image
// answer pair into one percentage.
//
// Judges: a mock that thresholds the surrogate's hidden quality, and a
// fixture double that replays recorded answers keyed by image hash. A live
// VLM judge is an out-of-repo plug-in implementing the same interface; its
// question templates live in configuration so deployments stay auditable.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bon/backends.hpp"
#include "bon/domain.hpp"
#include "bon/errors.hpp"

namespace bon {

inline constexpr std::array<const char*, 3> kDefaultQuestionTemplates = {
    "Does the image include both {subject_a} and {subject_b}?",
    "Are both {subject_a} and {subject_b} shown in a recognizable form?",
    "Is the image free of any undesired mixture between {subject_a} and {subject_b}?",
};

struct AggregateScore {
  double score = 0.0;  // percent of positive answers
  long n_questions = 0;
  long n_positive = 0;
};

/// Pool all answers of all results: score = 100 * positives / questions.
inline AggregateScore aggregate(std::span<const JudgeResult> results) {
  if (results.empty()) throw ValidationError("aggregate: no judge results");
  AggregateScore out;
  out.n_questions = 3 * static_cast<long>(results.size());
  for (const auto& r : results) out.n_positive += r.positives();
  out.score = 100.0 * static_cast<double>(out.n_positive) / static_cast<double>(out.n_questions);
  return out;
}

class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string id() const = 0;
  virtual JudgeResult judge(const ImageHandle& image, const PromptSpec& prompt) const = 0;
};

/// Deterministic judge for surrogate runs: thresholds the handle's hidden
/// quality with theta_existence <= theta_recognizable <= theta_mixture, so a
/// higher quality can never flip an answer from yes to no.
class MockJudge final : public Judge {
 public:
  MockJudge(double theta_existence = -0.5, double theta_recognizable = 0.0, double theta_mixture = 0.5)
      : te_(theta_existence), tr_(theta_recognizable), tm_(theta_mixture) {
    if (!(te_ <= tr_ && tr_ <= tm_)) throw ValidationError("mock judge: thresholds must be ordered");
  }

  std::string id() const override { return "mock"; }

  JudgeResult judge(const ImageHandle& image, const PromptSpec&) const override {
    if (!image.has_quality)
      throw CapabilityError("mock judge needs a surrogate image handle carrying a quality value");
    JudgeResult r;
    r.existence = image.quality > te_;
    r.recognizability = image.quality > tr_;
    r.not_a_mixture = image.quality > tm_;
    r.judge_id = id();
    return r;
  }

 private:
  double te_, tr_, tm_;
};

/// Replays recorded judge answers from a JSON-lines file keyed by image
/// content hash. The reproducible stand-in for a live VLM judge.
class FixtureJudge final : public Judge {
 public:
  explicit FixtureJudge(const std::string& fixture_path) {
    std::ifstream in(fixture_path);
    if (!in) throw IngestionError("judge fixture not found: " + fixture_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      JudgeResult r;
      r.existence = j.at("existence").get<bool>();
      r.recognizability = j.at("recognizability").get<bool>();
      r.not_a_mixture = j.at("not_a_mixture").get<bool>();
      r.judge_id = id();
      answers_[j.at("image_hash").get<std::uint64_t>()] = r;
    }
  }

  std::string id() const override { return "fixture"; }

  JudgeResult judge(const ImageHandle& image, const PromptSpec&) const override {
    const auto it = answers_.find(image.content_hash);
    if (it == answers_.end())
      throw ValidationError("judge fixture has no answer for image hash " + std::to_string(image.content_hash));
    return it->second;
  }

 private:
  std::unordered_map<std::uint64_t, JudgeResult> answers_;
};

}  // namespace bon
