#pragma once

// JSON converters for the core types. Record and dataset files are JSON
// lines, one object per line, so they stay diffable and hand-auditable.

#include <json.hpp>

#include "bon/domain.hpp"
#include "bon/errors.hpp"

namespace bon {

inline nlohmann::json to_json(const SubjectGroup& g) {
  return {{"nouns", g.noun_tokens}, {"attributes", g.attribute_tokens}};
}

inline SubjectGroup subject_from_json(const nlohmann::json& j) {
  SubjectGroup g;
  g.noun_tokens = j.at("nouns").get<std::vector<int>>();
  if (j.contains("attributes")) g.attribute_tokens = j.at("attributes").get<std::vector<int>>();
  return g;
}

inline nlohmann::json to_json(const PromptSpec& p, bool with_dataset = true) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& g : p.subjects) subjects.push_back(to_json(g));
  nlohmann::json j{{"text", p.text}, {"subjects", subjects}};
  if (with_dataset) j["dataset"] = to_string(p.dataset_id);
  return j;
}

inline PromptSpec prompt_from_json(const nlohmann::json& j,
                                   std::optional<DatasetId> dataset_override = std::nullopt) {
  PromptSpec p;
  p.text = j.at("text").get<std::string>();
  for (const auto& s : j.at("subjects")) p.subjects.push_back(subject_from_json(s));
  if (dataset_override)
    p.dataset_id = *dataset_override;
  else if (j.contains("dataset"))
    p.dataset_id = dataset_from_string(j.at("dataset").get<std::string>());
  return p;
}

inline nlohmann::json to_json(const JudgeResult& r) {
  return {{"existence", r.existence},
          {"recognizability", r.recognizability},
          {"not_a_mixture", r.not_a_mixture},
          {"judge_id", r.judge_id}};
}

inline JudgeResult judge_result_from_json(const nlohmann::json& j) {
  JudgeResult r;
  r.existence = j.at("existence").get<bool>();
  r.recognizability = j.at("recognizability").get<bool>();
  r.not_a_mixture = j.at("not_a_mixture").get<bool>();
  r.judge_id = j.at("judge_id").get<std::string>();
  return r;
}

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : r.per_prompt_scores) scores.push_back(to_json(s));
  return {{"algorithm", to_string(r.algorithm)},
          {"backbone", r.backbone_id},
          {"dataset", to_string(r.dataset_id)},
          {"n", r.n_budget},
          {"seed", r.seed},
          {"per_prompt_scores", scores},
          {"aggregate_score", r.aggregate_score}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  r.backbone_id = j.at("backbone").get<std::string>();
  r.dataset_id = dataset_from_string(j.at("dataset").get<std::string>());
  r.n_budget = j.at("n").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("per_prompt_scores")) r.per_prompt_scores.push_back(judge_result_from_json(s));
  r.aggregate_score = j.at("aggregate_score").get<double>();
  return r;
}

}  // namespace bon
