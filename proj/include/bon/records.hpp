#pragma once

// Append-only line-delimited result store. Two record kinds share one file:
// per-prompt records (the resumable grain; key algorithm|backbone|dataset|
// N|seed|prompt) and per-cell records holding the pooled aggregate for one
// (algorithm, backbone, dataset, N, seed) cell. Every table number is
// recomputable from the prompt records; cell records are the stored
// aggregates the report cross-checks.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bon/domain.hpp"
#include "bon/errors.hpp"
#include "bon/serialize.hpp"

namespace bon {

enum class PromptStatus { ok, failed, unjudged };

inline std::string_view to_string(PromptStatus s) {
  switch (s) {
    case PromptStatus::ok: return "ok";
    case PromptStatus::failed: return "failed";
    case PromptStatus::unjudged: return "unjudged";
  }
  throw ValidationError("unknown PromptStatus");
}

inline PromptStatus prompt_status_from_string(std::string_view s) {
  if (s == "ok") return PromptStatus::ok;
  if (s == "failed") return PromptStatus::failed;
  if (s == "unjudged") return PromptStatus::unjudged;
  throw ValidationError("unknown prompt status: " + std::string(s));
}

struct PromptRecord {
  Algorithm algorithm = Algorithm::none;
  std::string backbone_id;
  DatasetId dataset_id = DatasetId::synthetic;
  int n_budget = 0;
  std::uint64_t seed = 0;
  int prompt_index = -1;
  PromptStatus status = PromptStatus::ok;
  std::optional<double> winner_loss;  // absent for N = 0 and failed cells
  std::uint64_t image_hash = 0;
  std::optional<JudgeResult> judge;
  std::string error;
};

struct CellRecord {
  Algorithm algorithm = Algorithm::none;
  std::string backbone_id;
  DatasetId dataset_id = DatasetId::synthetic;
  int n_budget = 0;
  std::uint64_t seed = 0;
  int n_prompts = 0;  // judged prompts pooled into the aggregate
  long n_questions = 0;
  long n_positive = 0;
  double aggregate_score = 0.0;
};

inline std::string prompt_key(const PromptRecord& r) {
  return std::string(to_string(r.algorithm)) + "|" + r.backbone_id + "|" + std::string(to_string(r.dataset_id)) +
         "|" + std::to_string(r.n_budget) + "|" + std::to_string(r.seed) + "|" + std::to_string(r.prompt_index);
}

inline std::string cell_key(Algorithm a, const std::string& backbone, DatasetId d, int n, std::uint64_t seed) {
  return std::string(to_string(a)) + "|" + backbone + "|" + std::string(to_string(d)) + "|" + std::to_string(n) +
         "|" + std::to_string(seed);
}

inline std::string cell_key(const CellRecord& r) {
  return cell_key(r.algorithm, r.backbone_id, r.dataset_id, r.n_budget, r.seed);
}

inline std::string cell_key(const PromptRecord& r) {
  return cell_key(r.algorithm, r.backbone_id, r.dataset_id, r.n_budget, r.seed);
}

inline nlohmann::json to_json(const PromptRecord& r) {
  nlohmann::json j{{"kind", "prompt"},
                   {"algorithm", to_string(r.algorithm)},
                   {"backbone", r.backbone_id},
                   {"dataset", to_string(r.dataset_id)},
                   {"n", r.n_budget},
                   {"seed", r.seed},
                   {"prompt_index", r.prompt_index},
                   {"status", to_string(r.status)}};
  if (r.winner_loss && std::isfinite(*r.winner_loss)) j["winner_loss"] = *r.winner_loss;
  if (r.status == PromptStatus::ok || r.status == PromptStatus::unjudged) j["image_hash"] = r.image_hash;
  if (r.judge) j["judge"] = to_json(*r.judge);
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline PromptRecord prompt_record_from_json(const nlohmann::json& j) {
  PromptRecord r;
  r.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  r.backbone_id = j.at("backbone").get<std::string>();
  r.dataset_id = dataset_from_string(j.at("dataset").get<std::string>());
  r.n_budget = j.at("n").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.prompt_index = j.at("prompt_index").get<int>();
  r.status = prompt_status_from_string(j.at("status").get<std::string>());
  if (j.contains("winner_loss")) r.winner_loss = j.at("winner_loss").get<double>();
  if (j.contains("image_hash")) r.image_hash = j.at("image_hash").get<std::uint64_t>();
  if (j.contains("judge")) r.judge = judge_result_from_json(j.at("judge"));
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

inline nlohmann::json to_json(const CellRecord& r) {
  return {{"kind", "cell"},
          {"algorithm", to_string(r.algorithm)},
          {"backbone", r.backbone_id},
          {"dataset", to_string(r.dataset_id)},
          {"n", r.n_budget},
          {"seed", r.seed},
          {"n_prompts", r.n_prompts},
          {"n_questions", r.n_questions},
          {"n_positive", r.n_positive},
          {"aggregate_score", r.aggregate_score}};
}

inline CellRecord cell_record_from_json(const nlohmann::json& j) {
  CellRecord r;
  r.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  r.backbone_id = j.at("backbone").get<std::string>();
  r.dataset_id = dataset_from_string(j.at("dataset").get<std::string>());
  r.n_budget = j.at("n").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.n_prompts = j.at("n_prompts").get<int>();
  r.n_questions = j.at("n_questions").get<long>();
  r.n_positive = j.at("n_positive").get<long>();
  r.aggregate_score = j.at("aggregate_score").get<double>();
  return r;
}

/// Single-writer append channel; one line per record, flushed per append.
class RecordStore {
 public:
  explicit RecordStore(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
    if (!out_) throw Error("cannot open record store for append: " + path.string());
  }

  const std::filesystem::path& path() const { return path_; }

  void append(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw Error("write to record store failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct LoadedRecords {
  std::vector<PromptRecord> prompts;
  std::vector<CellRecord> cells;
  int corrupt_lines = 0;
};

/// Read a record file back; corrupt lines are skipped and counted.
inline LoadedRecords load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("record file not found: " + path.string());
  LoadedRecords out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "prompt")
        out.prompts.push_back(prompt_record_from_json(j));
      else if (kind == "cell")
        out.cells.push_back(cell_record_from_json(j));
      else
        ++out.corrupt_lines;
    } catch (const std::exception&) {
      ++out.corrupt_lines;
    }
  }
  return out;
}

}  // namespace bon
