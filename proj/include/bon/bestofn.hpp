#pragma once

// Budget planning and Best-of-N selection: allocate N loss calculations
// across candidates per algorithm, evaluate them, keep the lowest loss.
//
// Candidate i is derived from (master_seed, i) alone, so pools are
// prefix-stable: growing N extends the pool without changing earlier
// candidates, which makes the winning loss non-increasing along nested
// budgets. Ties always break to the lowest candidate index, so parallel
// execution cannot change the winner.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bon/backends.hpp"
#include "bon/domain.hpp"
#include "bon/errors.hpp"
#include "bon/noise_engine.hpp"

namespace bon {

/// The scorer an algorithm optimizes/selects with. The combined
/// InitNO-SelfCross scheme spends its entire budget in the InitNO phase, so
/// it searches with the initno loss; the Self-Cross part concerns
/// denoising-time guidance, which is the backend's business.
inline ScorerKind scorer_for(Algorithm a) {
  switch (a) {
    case Algorithm::conform: return ScorerKind::conform;
    case Algorithm::initno: return ScorerKind::initno;
    case Algorithm::initno_selfcross: return ScorerKind::initno;
    case Algorithm::selfcross: return ScorerKind::selfcross;
    case Algorithm::none: break;
  }
  throw ValidationError("algorithm has no scorer");
}

inline bool optimizes_candidates(Algorithm a) {
  return a == Algorithm::initno || a == Algorithm::initno_selfcross;
}

/// The accounting spine of a Best-of-N run.
struct BudgetLedger {
  int n_budget = 0;
  Algorithm algorithm = Algorithm::none;
  int candidates_planned = 0;
  int calcs_per_candidate = 0;
  int remainder = 0;  // budget not divisible by the per-candidate cost
  long consumed = 0;

  long planned_consumption() const {
    return static_cast<long>(candidates_planned) * calcs_per_candidate;
  }
};

/// Split a budget of N loss calculations into candidates: optimizing
/// algorithms spend 10 calculations per candidate (N/10 effective
/// candidates), score-once algorithms keep N candidates. N = 0 plans zero
/// candidates (baseline passthrough).
///
/// score_once_steps > 0 opts score-once algorithms into per-candidate
/// optimization at that many calculations each (off by default; scoring each
/// candidate once is the standard reading of the budget).
inline BudgetLedger plan_budget(int n, Algorithm algorithm, int score_once_steps = 0) {
  if (n < 0) throw ValidationError("plan_budget: negative budget");
  if (score_once_steps < 0) throw ValidationError("plan_budget: negative per-candidate steps");
  BudgetLedger ledger;
  ledger.n_budget = n;
  ledger.algorithm = algorithm;
  ledger.calcs_per_candidate = optimizes_candidates(algorithm) ? 10
                               : score_once_steps > 0          ? score_once_steps
                                                               : 1;
  if (algorithm == Algorithm::none || n == 0) {
    ledger.candidates_planned = 0;
    ledger.remainder = 0;
    return ledger;
  }
  ledger.candidates_planned = n / ledger.calcs_per_candidate;
  ledger.remainder = n % ledger.calcs_per_candidate;
  return ledger;
}

/// Fixed-candidate variant (the steps-per-candidate sweep): `candidates`
/// noises each optimized for `steps` calculations.
inline BudgetLedger plan_fixed_candidates(int candidates, int steps, Algorithm algorithm) {
  if (candidates < 0 || steps <= 0) throw ValidationError("plan_fixed_candidates: bad plan");
  BudgetLedger ledger;
  ledger.n_budget = candidates * steps;
  ledger.algorithm = algorithm;
  ledger.candidates_planned = candidates;
  ledger.calcs_per_candidate = steps;
  ledger.remainder = 0;
  return ledger;
}

struct EngineConfigs {
  ScorerConfig scorer;
  OptimizerConfig optimizer;
  int score_once_steps = 0;  // per-candidate optimization for score-once algorithms, off by default
};

struct SelectionResult {
  NoiseCandidate winner;
  double winner_loss = std::numeric_limits<double>::quiet_NaN();
  int winner_index = -1;
  bool scored = false;  // false for the N = 0 baseline passthrough
  std::vector<double> all_final_losses;  // +inf marks a failed candidate
  std::vector<std::string> failures;     // diagnostics for failed candidates
  BudgetLedger ledger;
};

namespace detail {

inline SelectionResult baseline_passthrough(const Backend& backend, std::uint64_t master_seed, BudgetLedger ledger) {
  SelectionResult out;
  out.winner = sample_noise(master_seed, 0, backend.descriptor().noise_dim);
  out.scored = false;
  out.ledger = ledger;
  return out;
}

}  // namespace detail

/// Execute one Best-of-N cell from a prepared ledger. Candidate failures
/// score +inf (their allocation still counts as consumed); the run only
/// errors if every candidate failed.
inline SelectionResult run_with_ledger(const PromptSpec& prompt, const Backend& backend, BudgetLedger ledger,
                                       std::uint64_t master_seed, const EngineConfigs& configs) {
  if (ledger.candidates_planned == 0) return detail::baseline_passthrough(backend, master_seed, ledger);
  const ScorerKind scorer = scorer_for(ledger.algorithm);

  SelectionResult out;
  out.ledger = ledger;
  out.scored = true;
  out.all_final_losses.assign(static_cast<std::size_t>(ledger.candidates_planned),
                              std::numeric_limits<double>::infinity());
  out.failures.resize(static_cast<std::size_t>(ledger.candidates_planned));

  OptimizerConfig fairness = configs.optimizer;
  fairness.early_stop = false;
  fairness.steps_per_candidate = ledger.calcs_per_candidate;

  for (int i = 0; i < ledger.candidates_planned; ++i) {
    try {
      NoiseCandidate cand;
      if (ledger.calcs_per_candidate > 1) {
        cand = optimize_candidate_fairness(prompt, backend, scorer, configs.scorer, fairness, master_seed,
                                           static_cast<std::uint64_t>(i));
      } else {
        cand = sample_noise(master_seed, static_cast<std::uint64_t>(i), backend.descriptor().noise_dim);
        cand.loss_trace.push_back(evaluate_loss(backend, cand.noise, prompt, scorer, configs.scorer).total);
        cand.calcs_consumed = 1;
      }
      const double final_loss = cand.loss_trace.back();
      out.ledger.consumed += cand.calcs_consumed;
      out.all_final_losses[static_cast<std::size_t>(i)] = final_loss;
      if (out.winner_index < 0 || final_loss < out.winner_loss) {
        out.winner = std::move(cand);
        out.winner_loss = final_loss;
        out.winner_index = i;
      }
    } catch (const Error& e) {
      out.failures[static_cast<std::size_t>(i)] = e.what();
      out.ledger.consumed += ledger.calcs_per_candidate;  // the allocation is spent
    }
  }
  if (out.winner_index < 0) {
    std::string last;
    for (const auto& f : out.failures)
      if (!f.empty()) last = f;
    throw BackendError("all " + std::to_string(ledger.candidates_planned) + " candidates failed, last error: " + last);
  }
  return out;
}

/// Best-of-N over a budget of N loss calculations. N = 0 (or algorithm None)
/// returns the raw seed-derived noise unscored.
inline SelectionResult run_best_of_n(const PromptSpec& prompt, const Backend& backend, Algorithm algorithm, int n,
                                     std::uint64_t master_seed, const EngineConfigs& configs) {
  return run_with_ledger(prompt, backend, plan_budget(n, algorithm, configs.score_once_steps), master_seed, configs);
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepMode {
  budget_grid,  // grid entries are budgets N
  steps_grid,   // grid entries are optimization steps; candidate count fixed
};

/// One (prompt, grid value, seed) experiment cell, ready for generation and
/// judging. `n_budget` always records consumed-loss-calculation units.
struct SweepCell {
  Algorithm algorithm = Algorithm::none;
  DatasetId dataset_id = DatasetId::synthetic;
  int n_budget = 0;
  int grid_value = 0;  // the swept value (equals n_budget in budget mode)
  std::uint64_t seed = 0;
  int prompt_index = -1;
  bool ok = false;
  std::string error;
  SelectionResult selection;
};

/// Stream key for one cell's candidate pool. Deliberately independent of the
/// algorithm so every algorithm sees the same raw noise pool for a given
/// (seed, prompt) and the N = 0 baseline is algorithm-invariant.
inline std::uint64_t cell_master_seed(std::uint64_t seed, const PromptSpec& prompt) {
  return rng::mix2(seed, prompt.key_hash());
}

/// Run every (prompt, grid value, seed) cell. Cell errors are recorded, not
/// propagated, so long sweeps survive single-cell faults.
inline std::vector<SweepCell> sweep(std::span<const PromptSpec> prompts, const Backend& backend, Algorithm algorithm,
                                    std::span<const int> grid, std::span<const std::uint64_t> seeds,
                                    const EngineConfigs& configs, SweepMode mode = SweepMode::budget_grid,
                                    int fixed_candidates = 5) {
  if (grid.empty()) throw ValidationError("sweep: empty grid");
  if (mode == SweepMode::steps_grid && !optimizes_candidates(algorithm))
    throw ValidationError("steps sweep requires an optimizing algorithm");
  std::vector<SweepCell> cells;
  cells.reserve(prompts.size() * grid.size() * seeds.size());
  for (int value : grid) {
    for (const std::uint64_t seed : seeds) {
      for (int pi = 0; pi < static_cast<int>(prompts.size()); ++pi) {
        const PromptSpec& prompt = prompts[static_cast<std::size_t>(pi)];
        SweepCell cell;
        cell.algorithm = algorithm;
        cell.dataset_id = prompt.dataset_id;
        cell.grid_value = value;
        cell.seed = seed;
        cell.prompt_index = pi;
        const BudgetLedger ledger = mode == SweepMode::budget_grid
                                        ? plan_budget(value, algorithm, configs.score_once_steps)
                                        : plan_fixed_candidates(fixed_candidates, value, algorithm);
        cell.n_budget = ledger.n_budget;
        try {
          cell.selection = run_with_ledger(prompt, backend, ledger, cell_master_seed(seed, prompt), configs);
          cell.ok = true;
        } catch (const Error& e) {
          cell.error = e.what();
        }
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

}  // namespace bon
