#pragma once

// Run configuration: a single JSON file describing the sweep grid, the
// backend, and every sub-config. Relative paths resolve against the config
// file's directory.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bon/backends.hpp"
#include "bon/bestofn.hpp"
#include "bon/dataset.hpp"
#include "bon/errors.hpp"
#include "bon/judging.hpp"
#include "bon/noise_engine.hpp"

namespace bon {

inline const std::vector<int> kDefaultNGrid = {0, 10, 20, 30, 40, 50, 100, 150, 200, 250, 300};

inline std::vector<std::uint64_t> default_seeds() {
  return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
}

struct JudgeConfig {
  std::string kind = "mock";  // mock | fixture | live
  double theta_existence = -0.5;
  double theta_recognizable = 0.0;
  double theta_mixture = 0.5;
  std::string fixture_path;
  std::string credentials_env = "BON_JUDGE_API_KEY";  // read only when kind == live
  std::array<std::string, 3> question_templates = {kDefaultQuestionTemplates[0], kDefaultQuestionTemplates[1],
                                                   kDefaultQuestionTemplates[2]};

  void validate() const {
    if (kind != "mock" && kind != "fixture" && kind != "live")
      throw ConfigError("judge kind must be mock, fixture, or live");
    if (kind == "fixture" && fixture_path.empty()) throw ConfigError("fixture judge needs fixture_path");
    if (!(theta_existence <= theta_recognizable && theta_recognizable <= theta_mixture))
      throw ConfigError("judge thresholds must be ordered existence <= recognizable <= mixture");
  }
};

struct RunConfig {
  std::string backend_kind = "surrogate";  // surrogate | real_stub
  std::vector<Algorithm> algorithms = {Algorithm::conform, Algorithm::initno, Algorithm::selfcross,
                                       Algorithm::initno_selfcross};
  std::vector<DatasetId> datasets = {DatasetId::animal_animal, DatasetId::animal_object, DatasetId::object_object,
                                     DatasetId::similar_subjects};
  std::vector<int> n_grid = kDefaultNGrid;
  std::vector<std::uint64_t> seeds = default_seeds();
  SweepMode sweep_mode = SweepMode::budget_grid;
  int fixed_candidates = 5;   // steps_grid mode: candidates per cell
  int score_once_steps = 0;   // optional per-candidate optimization for score-once algorithms
  ScorerConfig scorer;
  OptimizerConfig optimizer;
  SurrogateConfig surrogate;
  JudgeConfig judge;
  std::filesystem::path data_dir = "data";
  int synthetic_count = 200;
  std::filesystem::path output_dir = "out";

  void validate() const {
    if (backend_kind != "surrogate" && backend_kind != "real_stub")
      throw ConfigError("backend kind must be surrogate or real_stub");
    if (algorithms.empty()) throw ConfigError("no algorithms configured");
    if (datasets.empty()) throw ConfigError("no datasets configured");
    if (n_grid.empty()) throw ConfigError("empty sweep grid");
    for (int n : n_grid)
      if (n < 0) throw ConfigError("negative grid entry");
    if (sweep_mode == SweepMode::steps_grid) {
      if (fixed_candidates <= 0) throw ConfigError("steps sweep needs a positive candidate count");
      for (int n : n_grid)
        if (n <= 0) throw ConfigError("steps sweep entries must be positive");
      for (Algorithm a : algorithms)
        if (!optimizes_candidates(a)) throw ConfigError("steps sweep requires optimizing algorithms only");
    }
    if (seeds.empty()) throw ConfigError("no seeds configured");
    if (score_once_steps < 0) throw ConfigError("negative per-candidate step count");
    if (synthetic_count <= 0) throw ConfigError("synthetic prompt count must be positive");
    scorer.validate();
    optimizer.validate();
    surrogate.validate();
    judge.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ScorerConfig& c) {
  return {{"infonce_temperature", c.infonce_temperature},
          {"smoothing", c.smoothing == Smoothing::box ? "box" : "none"},
          {"smoothing_window", c.smoothing_window},
          {"overlap_kind", "min_intersection"},
          {"eps", c.eps}};
}

inline ScorerConfig scorer_config_from_json(const nlohmann::json& j) {
  ScorerConfig c;
  if (j.contains("infonce_temperature")) c.infonce_temperature = j.at("infonce_temperature").get<double>();
  if (j.contains("smoothing")) {
    const auto s = j.at("smoothing").get<std::string>();
    if (s == "box")
      c.smoothing = Smoothing::box;
    else if (s == "none")
      c.smoothing = Smoothing::none;
    else
      throw ConfigError("unknown smoothing: " + s);
  }
  if (j.contains("smoothing_window")) c.smoothing_window = j.at("smoothing_window").get<int>();
  if (j.contains("overlap_kind") && j.at("overlap_kind").get<std::string>() != "min_intersection")
    throw ConfigError("unknown overlap kind: " + j.at("overlap_kind").get<std::string>());
  if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  return c;
}

inline nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"step_size", c.step_size},
          {"steps_per_candidate", c.steps_per_candidate},
          {"max_rounds", c.max_rounds},
          {"refinement_steps", c.refinement_steps},
          {"validity_threshold", c.validity_threshold},
          {"early_stop", c.early_stop}};
}

inline OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  if (j.contains("step_size")) c.step_size = j.at("step_size").get<double>();
  if (j.contains("steps_per_candidate")) c.steps_per_candidate = j.at("steps_per_candidate").get<int>();
  if (j.contains("max_rounds")) c.max_rounds = j.at("max_rounds").get<int>();
  if (j.contains("refinement_steps")) c.refinement_steps = j.at("refinement_steps").get<int>();
  if (j.contains("validity_threshold")) c.validity_threshold = j.at("validity_threshold").get<double>();
  if (j.contains("early_stop")) c.early_stop = j.at("early_stop").get<bool>();
  return c;
}

inline nlohmann::json to_json(const SurrogateConfig& c) {
  return {{"noise_dim", c.noise_dim},
          {"grid_h", c.grid_h},
          {"grid_w", c.grid_w},
          {"proxy_correlation", c.proxy_correlation},
          {"quality_noise_scale", c.quality_noise_scale},
          {"projection_seed", c.projection_seed},
          {"logit_scale", c.logit_scale},
          {"bias_scale", c.bias_scale},
          {"calibration_draws", c.calibration_draws},
          {"quality_scorer", to_string(c.quality_scorer)},
          {"gradients", c.gradients},
          {"backbone_id", c.backbone_id}};
}

inline SurrogateConfig surrogate_config_from_json(const nlohmann::json& j) {
  SurrogateConfig c;
  if (j.contains("noise_dim")) c.noise_dim = j.at("noise_dim").get<int>();
  if (j.contains("grid_h")) c.grid_h = j.at("grid_h").get<int>();
  if (j.contains("grid_w")) c.grid_w = j.at("grid_w").get<int>();
  if (j.contains("proxy_correlation")) c.proxy_correlation = j.at("proxy_correlation").get<double>();
  if (j.contains("quality_noise_scale")) c.quality_noise_scale = j.at("quality_noise_scale").get<double>();
  if (j.contains("projection_seed")) c.projection_seed = j.at("projection_seed").get<std::uint64_t>();
  if (j.contains("logit_scale")) c.logit_scale = j.at("logit_scale").get<double>();
  if (j.contains("bias_scale")) c.bias_scale = j.at("bias_scale").get<double>();
  if (j.contains("calibration_draws")) c.calibration_draws = j.at("calibration_draws").get<int>();
  if (j.contains("quality_scorer")) c.quality_scorer = scorer_from_string(j.at("quality_scorer").get<std::string>());
  if (j.contains("gradients")) c.gradients = j.at("gradients").get<bool>();
  if (j.contains("backbone_id")) c.backbone_id = j.at("backbone_id").get<std::string>();
  return c;
}

inline nlohmann::json to_json(const SurrogateManifest& m) {
  return {{"backbone_id", m.backbone_id},
          {"proxy_correlation", m.proxy_correlation},
          {"rho_hat", m.rho_hat},
          {"samples", m.samples},
          {"estimation_seed", m.estimation_seed},
          {"projection_seed", m.projection_seed}};
}

inline SurrogateManifest surrogate_manifest_from_json(const nlohmann::json& j) {
  SurrogateManifest m;
  m.backbone_id = j.at("backbone_id").get<std::string>();
  m.proxy_correlation = j.at("proxy_correlation").get<double>();
  m.rho_hat = j.at("rho_hat").get<double>();
  m.samples = j.at("samples").get<int>();
  m.estimation_seed = j.at("estimation_seed").get<std::uint64_t>();
  m.projection_seed = j.at("projection_seed").get<std::uint64_t>();
  return m;
}

inline nlohmann::json to_json(const JudgeConfig& c) {
  return {{"kind", c.kind},
          {"theta_existence", c.theta_existence},
          {"theta_recognizable", c.theta_recognizable},
          {"theta_mixture", c.theta_mixture},
          {"fixture_path", c.fixture_path},
          {"credentials_env", c.credentials_env},
          {"question_templates", c.question_templates}};
}

inline JudgeConfig judge_config_from_json(const nlohmann::json& j) {
  JudgeConfig c;
  if (j.contains("kind")) c.kind = j.at("kind").get<std::string>();
  if (j.contains("theta_existence")) c.theta_existence = j.at("theta_existence").get<double>();
  if (j.contains("theta_recognizable")) c.theta_recognizable = j.at("theta_recognizable").get<double>();
  if (j.contains("theta_mixture")) c.theta_mixture = j.at("theta_mixture").get<double>();
  if (j.contains("fixture_path")) c.fixture_path = j.at("fixture_path").get<std::string>();
  if (j.contains("credentials_env")) c.credentials_env = j.at("credentials_env").get<std::string>();
  if (j.contains("question_templates")) {
    const auto t = j.at("question_templates").get<std::vector<std::string>>();
    if (t.size() != 3) throw ConfigError("judge needs exactly 3 question templates");
    for (std::size_t i = 0; i < 3; ++i) c.question_templates[i] = t[i];
  }
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json algorithms = nlohmann::json::array();
  for (auto a : c.algorithms) algorithms.push_back(to_string(a));
  nlohmann::json datasets = nlohmann::json::array();
  for (auto d : c.datasets) datasets.push_back(to_string(d));
  return {{"backend", c.backend_kind},
          {"algorithms", algorithms},
          {"datasets", datasets},
          {"n_grid", c.n_grid},
          {"seeds", c.seeds},
          {"sweep_mode", c.sweep_mode == SweepMode::budget_grid ? "budget" : "steps"},
          {"fixed_candidates", c.fixed_candidates},
          {"score_once_steps", c.score_once_steps},
          {"scorer", to_json(c.scorer)},
          {"optimizer", to_json(c.optimizer)},
          {"surrogate", to_json(c.surrogate)},
          {"judge", to_json(c.judge)},
          {"data_dir", c.data_dir.string()},
          {"synthetic_count", c.synthetic_count},
          {"output_dir", c.output_dir.string()}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("backend")) c.backend_kind = j.at("backend").get<std::string>();
  if (j.contains("algorithms")) {
    c.algorithms.clear();
    for (const auto& a : j.at("algorithms")) c.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
  }
  if (j.contains("datasets")) {
    c.datasets.clear();
    for (const auto& d : j.at("datasets")) c.datasets.push_back(dataset_from_string(d.get<std::string>()));
  }
  if (j.contains("n_grid")) c.n_grid = j.at("n_grid").get<std::vector<int>>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("sweep_mode")) {
    const auto m = j.at("sweep_mode").get<std::string>();
    if (m == "budget")
      c.sweep_mode = SweepMode::budget_grid;
    else if (m == "steps")
      c.sweep_mode = SweepMode::steps_grid;
    else
      throw ConfigError("unknown sweep mode: " + m);
  }
  if (j.contains("fixed_candidates")) c.fixed_candidates = j.at("fixed_candidates").get<int>();
  if (j.contains("score_once_steps")) c.score_once_steps = j.at("score_once_steps").get<int>();
  if (j.contains("scorer")) c.scorer = scorer_config_from_json(j.at("scorer"));
  if (j.contains("optimizer")) c.optimizer = optimizer_config_from_json(j.at("optimizer"));
  if (j.contains("surrogate")) c.surrogate = surrogate_config_from_json(j.at("surrogate"));
  if (j.contains("judge")) c.judge = judge_config_from_json(j.at("judge"));
  if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("synthetic_count")) c.synthetic_count = j.at("synthetic_count").get<int>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  return c;
}

/// Parse a config file; relative data/output paths resolve against its
/// directory.
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config unparseable: " + std::string(e.what()));
  }
  RunConfig c = run_config_from_json(j);
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (c.data_dir.is_relative()) c.data_dir = base / c.data_dir;
  if (c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
  c.validate();
  return c;
}

}  // namespace bon
