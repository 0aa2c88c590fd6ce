#pragma once

// Config-driven experiment pipeline: sweep candidates, generate the winner,
// judge it, pool the answers, and persist everything through the append-only
// record store. Runs are crash-resumable: completed keys are skipped on the
// next invocation and the final record file is byte-identical to the one an
// uninterrupted run would have written.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "bon/backends.hpp"
#include "bon/bestofn.hpp"
#include "bon/config.hpp"
#include "bon/dataset.hpp"
#include "bon/judging.hpp"
#include "bon/records.hpp"
#include "bon/report.hpp"

namespace bon {

inline std::unique_ptr<Backend> make_backend(const RunConfig& cfg) {
  if (cfg.backend_kind == "surrogate") return std::make_unique<SurrogateBackend>(cfg.surrogate);
  return std::make_unique<RealPipelineAdapter>();
}

/// Builds the configured judge. A live judge is an out-of-repo plug-in: its
/// credentials variable is only consulted when explicitly configured, and
/// this build then reports the missing client rather than calling anything.
inline std::unique_ptr<Judge> make_judge(const JudgeConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "mock")
    return std::make_unique<MockJudge>(cfg.theta_existence, cfg.theta_recognizable, cfg.theta_mixture);
  if (cfg.kind == "fixture") return std::make_unique<FixtureJudge>(cfg.fixture_path);
  const char* cred = std::getenv(cfg.credentials_env.c_str());
  if (cred == nullptr || *cred == '\0')
    throw ConfigError("live judge configured but " + cfg.credentials_env + " is not set");
  throw ConfigError("live judge clients are not bundled; plug one in behind the Judge interface");
}

struct RunReport {
  long cells_total = 0;        // (dataset, algorithm, N, seed, prompt) units attempted
  long cells_completed = 0;
  long cells_resumed = 0;      // skipped because the store already had them
  long prompts_failed = 0;
  long prompts_unjudged = 0;
  std::vector<std::string> failure_keys;
  std::filesystem::path records_path;
  std::vector<std::filesystem::path> report_files;
};

inline RunReport run_experiment(const RunConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const auto note = [&](const std::string& msg) {
    if (log) (*log) << msg << '\n';
  };

  std::map<DatasetId, std::vector<PromptSpec>> datasets;
  for (DatasetId id : cfg.datasets)
    datasets[id] = id == DatasetId::synthetic ? synthetic_prompts(cfg.synthetic_count)
                                              : load_dataset(id, cfg.data_dir);

  const auto backend = make_backend(cfg);
  const auto judge = make_judge(cfg.judge);
  const std::string backbone = backend->descriptor().backbone_id;
  const EngineConfigs engine{cfg.scorer, cfg.optimizer, cfg.score_once_steps};

  std::filesystem::create_directories(cfg.output_dir);
  const auto records_path = cfg.output_dir / "records.jsonl";

  // calibrate the surrogate over the run's prompts and store the manifest
  if (const auto* surrogate = dynamic_cast<const SurrogateBackend*>(backend.get())) {
    std::vector<PromptSpec> all;
    for (const auto& [id, ps] : datasets) all.insert(all.end(), ps.begin(), ps.end());
    const int per_prompt = std::max<int>(1, static_cast<int>(20000 / all.size()));
    const auto manifest = surrogate->calibrate(all, per_prompt, cfg.surrogate.projection_seed ^ 0xE57ull);
    std::ofstream out(cfg.output_dir / "surrogate_manifest.json", std::ios::binary | std::ios::trunc);
    out << to_json(manifest).dump(2) << '\n';
    note("surrogate manifest: rho_hat = " + std::to_string(manifest.rho_hat) + " over " +
         std::to_string(manifest.samples) + " samples");
  }

  std::unordered_map<std::string, PromptRecord> prompt_records;
  std::set<std::string> cell_keys_done;
  if (std::filesystem::exists(records_path)) {
    const auto existing = load_records(records_path);
    for (const auto& p : existing.prompts) prompt_records.emplace(prompt_key(p), p);
    for (const auto& c : existing.cells) cell_keys_done.insert(cell_key(c));
    if (!existing.prompts.empty() || !existing.cells.empty())
      note("resuming: " + std::to_string(existing.prompts.size()) + " prompt records, " +
           std::to_string(existing.cells.size()) + " cell records already stored");
  }
  RecordStore store(records_path);

  RunReport report;
  report.records_path = records_path;

  for (DatasetId ds : cfg.datasets) {
    const auto& prompts = datasets.at(ds);
    for (Algorithm alg : cfg.algorithms) {
      for (int grid_value : cfg.n_grid) {
        const BudgetLedger plan = cfg.sweep_mode == SweepMode::budget_grid
                                      ? plan_budget(grid_value, alg, cfg.score_once_steps)
                                      : plan_fixed_candidates(cfg.fixed_candidates, grid_value, alg);
        for (std::uint64_t seed : cfg.seeds) {
          const std::string ck = cell_key(alg, backbone, ds, plan.n_budget, seed);
          for (int pi = 0; pi < static_cast<int>(prompts.size()); ++pi) {
            ++report.cells_total;
            PromptRecord rec;
            rec.algorithm = alg;
            rec.backbone_id = backbone;
            rec.dataset_id = ds;
            rec.n_budget = plan.n_budget;
            rec.seed = seed;
            rec.prompt_index = pi;
            const std::string pk = prompt_key(rec);
            if (const auto it = prompt_records.find(pk); it != prompt_records.end()) {
              ++report.cells_resumed;
              continue;
            }
            const PromptSpec& prompt = prompts[static_cast<std::size_t>(pi)];
            try {
              const SelectionResult sel =
                  run_with_ledger(prompt, *backend, plan, cell_master_seed(seed, prompt), engine);
              if (sel.scored) rec.winner_loss = sel.winner_loss;
              const ImageHandle image = backend->generate(sel.winner.noise, prompt);
              rec.image_hash = image.content_hash;
              try {
                rec.judge = judge->judge(image, prompt);
                rec.status = PromptStatus::ok;
                ++report.cells_completed;
              } catch (const Error& e) {
                rec.status = PromptStatus::unjudged;
                rec.error = e.what();
                ++report.prompts_unjudged;
                report.failure_keys.push_back(pk);
              }
            } catch (const Error& e) {
              rec.status = PromptStatus::failed;
              rec.error = e.what();
              ++report.prompts_failed;
              report.failure_keys.push_back(pk);
            }
            store.append(to_json(rec));
            prompt_records.emplace(pk, rec);
          }
          if (cell_keys_done.count(ck)) continue;
          // pool this cell's judged prompts into its stored aggregate
          CellRecord cell;
          cell.algorithm = alg;
          cell.backbone_id = backbone;
          cell.dataset_id = ds;
          cell.n_budget = plan.n_budget;
          cell.seed = seed;
          for (int pi = 0; pi < static_cast<int>(prompts.size()); ++pi) {
            PromptRecord probe;
            probe.algorithm = alg;
            probe.backbone_id = backbone;
            probe.dataset_id = ds;
            probe.n_budget = plan.n_budget;
            probe.seed = seed;
            probe.prompt_index = pi;
            const auto it = prompt_records.find(prompt_key(probe));
            if (it == prompt_records.end() || it->second.status != PromptStatus::ok || !it->second.judge) continue;
            ++cell.n_prompts;
            cell.n_positive += it->second.judge->positives();
          }
          if (cell.n_prompts == 0) {
            note("cell " + ck + " has no judged prompts; no aggregate stored");
            continue;
          }
          cell.n_questions = 3L * cell.n_prompts;
          cell.aggregate_score =
              100.0 * static_cast<double>(cell.n_positive) / static_cast<double>(cell.n_questions);
          store.append(to_json(cell));
          cell_keys_done.insert(ck);
        }
      }
    }
  }

  try {
    const auto rep = write_report(records_path, cfg.output_dir);
    report.report_files = rep.files;
  } catch (const Error& e) {
    note(std::string("report generation skipped: ") + e.what());
  }
  if (report.prompts_failed + report.prompts_unjudged > 0)
    note("completion report: " + std::to_string(report.prompts_failed) + " failed, " +
         std::to_string(report.prompts_unjudged) + " unjudged of " + std::to_string(report.cells_total) +
         " prompt cells");
  return report;
}

}  // namespace bon
