#pragma once

// Core value types shared across the toolkit. Everything here is immutable
// after construction in practice (plain data, validated on ingest) and safe
// to share across workers.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bon/errors.hpp"
#include "bon/rng.hpp"

namespace bon {

// ---------------------------------------------------------------------------
// Identifiers

enum class DatasetId {
  animal_animal,
  animal_object,
  object_object,
  similar_subjects,
  synthetic,  // generated prompt sets for desk-scale experiments
};

enum class Algorithm {
  conform,
  initno,
  selfcross,
  initno_selfcross,
  none,
};

inline std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::animal_animal: return "animal_animal";
    case DatasetId::animal_object: return "animal_object";
    case DatasetId::object_object: return "object_object";
    case DatasetId::similar_subjects: return "similar_subjects";
    case DatasetId::synthetic: return "synthetic";
  }
  throw ValidationError("unknown DatasetId");
}

inline DatasetId dataset_from_string(std::string_view s) {
  if (s == "animal_animal") return DatasetId::animal_animal;
  if (s == "animal_object") return DatasetId::animal_object;
  if (s == "object_object") return DatasetId::object_object;
  if (s == "similar_subjects") return DatasetId::similar_subjects;
  if (s == "synthetic") return DatasetId::synthetic;
  throw ValidationError("unknown dataset id: " + std::string(s));
}

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::conform: return "CONFORM";
    case Algorithm::initno: return "InitNO";
    case Algorithm::selfcross: return "SelfCross";
    case Algorithm::initno_selfcross: return "InitNO-SelfCross";
    case Algorithm::none: return "None";
  }
  throw ValidationError("unknown Algorithm");
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "CONFORM") return Algorithm::conform;
  if (s == "InitNO") return Algorithm::initno;
  if (s == "SelfCross") return Algorithm::selfcross;
  if (s == "InitNO-SelfCross") return Algorithm::initno_selfcross;
  if (s == "None") return Algorithm::none;
  throw ValidationError("unknown algorithm: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Prompts

/// One required subject: where its noun (and optional attribute) tokens sit
/// in the tokenized prompt.
struct SubjectGroup {
  std::vector<int> noun_tokens;
  std::vector<int> attribute_tokens;

  bool operator==(const SubjectGroup&) const = default;
};

/// A prompt plus the token groupings that drive every loss.
struct PromptSpec {
  std::string text;
  std::vector<SubjectGroup> subjects;
  DatasetId dataset_id = DatasetId::synthetic;

  bool operator==(const PromptSpec&) const = default;

  /// Whitespace token count of `text`.
  int token_count() const {
    std::istringstream in(text);
    std::string tok;
    int n = 0;
    while (in >> tok) ++n;
    return n;
  }

  /// Stable identity used to seed prompt-specific synthetic projections.
  std::uint64_t key_hash() const {
    std::uint64_t h = rng::hash_string(text);
    for (const auto& g : subjects) {
      for (int t : g.noun_tokens) h = rng::mix2(h, static_cast<std::uint64_t>(t) + 1);
      h = rng::mix2(h, 0xA11Eull);
      for (int t : g.attribute_tokens) h = rng::mix2(h, static_cast<std::uint64_t>(t) + 1);
      h = rng::mix2(h, 0xB22Full);
    }
    return h;
  }

  /// Enforces the prompt invariants; throws ValidationError naming the prompt.
  void validate() const {
    const auto fail = [&](const std::string& why) {
      throw ValidationError("prompt \"" + text + "\": " + why);
    };
    if (subjects.size() != 2) fail("expected exactly 2 subjects, got " + std::to_string(subjects.size()));
    const int tokens = token_count();
    std::set<int> seen;
    for (const auto& g : subjects) {
      if (g.noun_tokens.empty()) fail("subject with no noun tokens");
      for (const auto& list : {g.noun_tokens, g.attribute_tokens}) {
        for (int t : list) {
          if (t < 0 || t >= tokens) fail("token index " + std::to_string(t) + " out of range [0," + std::to_string(tokens) + ")");
          if (!seen.insert(t).second) fail("token index " + std::to_string(t) + " used by more than one subject");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Attention

/// Dense row-major matrix; small enough that no linear-algebra package is
/// warranted for the patch/token sizes used here.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::span<const double> row(int r) const { return {v.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<double> row(int r) { return {v.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

  bool operator==(const Mat&) const = default;
};

/// Cross- and self-attention maps for one (noise, prompt) pair. Rows of both
/// matrices are per-patch distributions and must sum to 1.
struct AttentionBundle {
  Mat cross;      // P x T
  Mat self_attn;  // P x P
  int grid_h = 0;
  int grid_w = 0;

  int patches() const { return grid_h * grid_w; }
  int tokens() const { return cross.cols; }

  void validate(double tol = 1e-6) const {
    const int p = patches();
    if (p <= 0 || cross.rows != p || self_attn.rows != p || self_attn.cols != p)
      throw ValidationError("attention bundle: inconsistent patch dimensions");
    if (cross.cols <= 0) throw ValidationError("attention bundle: no tokens");
    for (const Mat* m : {&cross, &self_attn}) {
      for (int r = 0; r < m->rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < m->cols; ++c) {
          const double x = m->at(r, c);
          if (!(x >= 0.0)) throw ValidationError("attention bundle: negative or NaN weight");
          s += x;
        }
        if (std::abs(s - 1.0) > tol)
          throw ValidationError("attention bundle: row " + std::to_string(r) + " sums to " + std::to_string(s));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Candidates and experiment records

/// One noise vector with its seed lineage and loss accounting.
struct NoiseCandidate {
  std::uint64_t seed = 0;                // stream key this noise was drawn from
  std::vector<double> noise;
  std::vector<double> loss_trace;        // every loss evaluated for this candidate
  int calcs_consumed = 0;                // must equal loss_trace.size()

  void validate(std::optional<int> expected_dim = std::nullopt) const {
    if (calcs_consumed != static_cast<int>(loss_trace.size()))
      throw ValidationError("noise candidate: calcs_consumed != loss trace length");
    if (expected_dim && static_cast<int>(noise.size()) != *expected_dim)
      throw ValidationError("noise candidate: dimension mismatch");
  }
};

/// Answers to the three judge questions for one generated image.
struct JudgeResult {
  bool existence = false;
  bool recognizability = false;
  bool not_a_mixture = false;
  std::string judge_id;

  bool operator==(const JudgeResult&) const = default;
  int positives() const { return int(existence) + int(recognizability) + int(not_a_mixture); }
};

/// One (algorithm, backbone, dataset, N, seed) experiment cell.
struct RunRecord {
  Algorithm algorithm = Algorithm::none;
  std::string backbone_id;
  DatasetId dataset_id = DatasetId::synthetic;
  int n_budget = 0;  // N, the number of loss calculations
  std::uint64_t seed = 0;
  std::vector<JudgeResult> per_prompt_scores;
  double aggregate_score = 0.0;  // percent of positive answers, pooled

  bool operator==(const RunRecord&) const = default;

  double recompute_aggregate() const {
    if (per_prompt_scores.empty()) throw ValidationError("run record with no judged prompts");
    long pos = 0;
    for (const auto& r : per_prompt_scores) pos += r.positives();
    return 100.0 * static_cast<double>(pos) / (3.0 * static_cast<double>(per_prompt_scores.size()));
  }

  void validate() const {
    if (n_budget < 0) throw ValidationError("run record: negative budget");
    const double expect = recompute_aggregate();
    if (std::abs(expect - aggregate_score) > 1e-9)
      throw ValidationError("run record: stored aggregate does not match per-prompt scores");
  }
};

}  // namespace bon
