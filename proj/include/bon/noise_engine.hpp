#pragma once

// Candidate generation and gradient-based noise optimization, including the
// multi-round validity protocol and its fairness-mode variant.
//
// Accounting rule: one optimization step consumes exactly one loss
// calculation — the validity check reads the same evaluation the step uses,
// never a second one. Every evaluated loss lands in the candidate's trace,
// so calcs_consumed always equals the trace length.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bon/backends.hpp"
#include "bon/domain.hpp"
#include "bon/errors.hpp"
#include "bon/rng.hpp"

namespace bon {

struct OptimizerConfig {
  double step_size = 1e-2;
  int steps_per_candidate = 10;
  int max_rounds = 5;
  int refinement_steps = 40;
  double validity_threshold = 0.2;
  bool early_stop = true;

  void validate() const {
    if (!(step_size > 0.0)) throw ValidationError("optimizer config: step size must be positive");
    if (steps_per_candidate <= 0) throw ValidationError("optimizer config: steps per candidate must be positive");
    if (max_rounds <= 0) throw ValidationError("optimizer config: max rounds must be positive");
    if (refinement_steps < 0) throw ValidationError("optimizer config: negative refinement steps");
    if (early_stop && !std::isfinite(validity_threshold))
      throw ValidationError("optimizer config: validity threshold must be finite when early stopping is on");
  }
};

struct RoundTrace {
  std::uint64_t seed = 0;                 // stream key of this round's noise
  std::vector<double> losses;             // one entry per consumed calculation
  std::optional<int> valid_at_step;       // 1-based step where the threshold was met
};

struct ProtocolTrace {
  std::vector<RoundTrace> rounds;
  std::vector<double> refinement_losses;
  long total_calcs = 0;
  NoiseCandidate selected;
  double selected_loss = std::numeric_limits<double>::quiet_NaN();

  long recount_calcs() const {
    long n = static_cast<long>(refinement_losses.size());
    for (const auto& r : rounds) n += static_cast<long>(r.losses.size());
    return n;
  }
};

/// Candidate stream key for (master_seed, candidate_index).
inline std::uint64_t candidate_stream(std::uint64_t master_seed, std::uint64_t candidate_index) {
  return rng::mix2(master_seed, candidate_index);
}

/// Deterministic i.i.d. standard-normal noise; (master_seed, candidate_index)
/// fully determines the vector.
inline NoiseCandidate sample_noise(std::uint64_t master_seed, std::uint64_t candidate_index, int dim) {
  if (dim <= 0) throw ValidationError("sample_noise: dimension must be positive");
  NoiseCandidate cand;
  cand.seed = candidate_stream(master_seed, candidate_index);
  cand.noise.resize(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim; ++k)
    cand.noise[static_cast<std::size_t>(k)] = rng::normal_at(cand.seed, static_cast<std::uint64_t>(k));
  return cand;
}

namespace detail {

inline void check_finite_gradient(const std::vector<double>& g, const PromptSpec& prompt) {
  for (double x : g)
    if (!std::isfinite(x))
      throw BackendError("non-finite loss gradient for prompt \"" + prompt.text + "\"");
}

/// One counted loss+gradient evaluation, via the analytic path when the
/// backend has one and central differences (2*dim evaluations) otherwise.
inline LossGradient eval_loss_gradient(const Backend& backend, std::span<const double> noise,
                                       const PromptSpec& prompt, ScorerKind scorer, const ScorerConfig& cfg) {
  if (backend.descriptor().supports_gradient) return backend.loss_gradient(noise, prompt, scorer, cfg);
  LossGradient out;
  out.loss = evaluate_loss(backend, noise, prompt, scorer, cfg);
  out.gradient = fd_loss_gradient(backend, noise, prompt, scorer, cfg);
  return out;
}

}  // namespace detail

/// One descent step: evaluates loss and gradient at the candidate's noise,
/// appends the pre-step loss to its trace, applies noise -= step * gradient,
/// and charges exactly one calculation. Returns the pre-step loss.
inline double gradient_step(NoiseCandidate& candidate, const PromptSpec& prompt, const Backend& backend,
                            ScorerKind scorer, const ScorerConfig& scorer_cfg, const OptimizerConfig& opt) {
  opt.validate();
  const auto eval = detail::eval_loss_gradient(backend, candidate.noise, prompt, scorer, scorer_cfg);
  detail::check_finite_gradient(eval.gradient, prompt);
  candidate.loss_trace.push_back(eval.loss.total);
  candidate.calcs_consumed += 1;
  for (std::size_t k = 0; k < candidate.noise.size(); ++k)
    candidate.noise[k] -= opt.step_size * eval.gradient[k];
  return eval.loss.total;
}

/// Fairness-mode candidate: exactly `steps_per_candidate` loss calculations,
/// no threshold check. The returned candidate's noise is the state at the
/// last evaluation, so its final trace entry is the loss of the noise it
/// carries (the final update would otherwise produce a never-scored noise).
inline NoiseCandidate optimize_candidate_fairness(const PromptSpec& prompt, const Backend& backend, ScorerKind scorer,
                                                  const ScorerConfig& scorer_cfg, const OptimizerConfig& opt,
                                                  std::uint64_t master_seed, std::uint64_t candidate_index) {
  opt.validate();
  NoiseCandidate cand = sample_noise(master_seed, candidate_index, backend.descriptor().noise_dim);
  for (int step = 1; step <= opt.steps_per_candidate; ++step) {
    const auto eval = detail::eval_loss_gradient(backend, cand.noise, prompt, scorer, scorer_cfg);
    detail::check_finite_gradient(eval.gradient, prompt);
    cand.loss_trace.push_back(eval.loss.total);
    cand.calcs_consumed += 1;
    if (step == opt.steps_per_candidate) break;
    for (std::size_t k = 0; k < cand.noise.size(); ++k) cand.noise[k] -= opt.step_size * eval.gradient[k];
  }
  return cand;
}

/// The multi-round optimization protocol.
///
/// early_stop = true: up to max_rounds rounds of up to steps_per_candidate
/// steps each; a round halts the moment its evaluated loss falls below the
/// validity threshold and that exact noise is selected. If every round stays
/// invalid, refinement restarts from the noise that achieved the smallest
/// recorded loss and runs refinement_steps further calculations; the final
/// evaluated state is selected.
///
/// early_stop = false: max_rounds candidates, each receiving exactly
/// steps_per_candidate evaluations, no threshold check, no refinement; the
/// candidate with the lowest final loss is selected.
inline ProtocolTrace run_initno_protocol(const PromptSpec& prompt, const Backend& backend, ScorerKind scorer,
                                         const ScorerConfig& scorer_cfg, const OptimizerConfig& opt,
                                         std::uint64_t master_seed) {
  opt.validate();
  const int dim = backend.descriptor().noise_dim;
  ProtocolTrace trace;

  if (!opt.early_stop) {
    double best = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opt.max_rounds; ++round) {
      NoiseCandidate cand = optimize_candidate_fairness(prompt, backend, scorer, scorer_cfg, opt, master_seed,
                                                        static_cast<std::uint64_t>(round));
      RoundTrace rt{cand.seed, cand.loss_trace, std::nullopt};
      const double final_loss = cand.loss_trace.back();
      if (final_loss < best) {
        best = final_loss;
        trace.selected = cand;
        trace.selected_loss = final_loss;
      }
      trace.rounds.push_back(std::move(rt));
    }
    trace.total_calcs = trace.recount_calcs();
    return trace;
  }

  // early-stopping protocol
  NoiseCandidate best_candidate;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int round = 0; round < opt.max_rounds; ++round) {
    NoiseCandidate cand = sample_noise(master_seed, static_cast<std::uint64_t>(round), dim);
    RoundTrace rt;
    rt.seed = cand.seed;
    for (int step = 1; step <= opt.steps_per_candidate; ++step) {
      const auto eval = detail::eval_loss_gradient(backend, cand.noise, prompt, scorer, scorer_cfg);
      detail::check_finite_gradient(eval.gradient, prompt);
      rt.losses.push_back(eval.loss.total);
      if (eval.loss.total < opt.validity_threshold) {
        rt.valid_at_step = step;
        cand.loss_trace = rt.losses;
        cand.calcs_consumed = static_cast<int>(rt.losses.size());
        trace.rounds.push_back(std::move(rt));
        trace.selected = std::move(cand);
        trace.selected_loss = trace.selected.loss_trace.back();
        trace.total_calcs = trace.recount_calcs();
        return trace;
      }
      if (eval.loss.total < best_loss) {
        best_loss = eval.loss.total;
        best_candidate = cand;  // noise as evaluated, before this step's update
        best_candidate.loss_trace = rt.losses;
        best_candidate.calcs_consumed = static_cast<int>(rt.losses.size());
      }
      if (step < opt.steps_per_candidate)
        for (std::size_t k = 0; k < cand.noise.size(); ++k) cand.noise[k] -= opt.step_size * eval.gradient[k];
    }
    trace.rounds.push_back(std::move(rt));
  }

  // every round failed: refine the best recorded noise
  NoiseCandidate refined = std::move(best_candidate);
  for (int step = 1; step <= opt.refinement_steps; ++step) {
    const auto eval = detail::eval_loss_gradient(backend, refined.noise, prompt, scorer, scorer_cfg);
    detail::check_finite_gradient(eval.gradient, prompt);
    trace.refinement_losses.push_back(eval.loss.total);
    refined.loss_trace.push_back(eval.loss.total);
    refined.calcs_consumed += 1;
    if (step < opt.refinement_steps)
      for (std::size_t k = 0; k < refined.noise.size(); ++k) refined.noise[k] -= opt.step_size * eval.gradient[k];
  }
  trace.selected = std::move(refined);
  trace.selected_loss = trace.refinement_losses.empty() ? best_loss : trace.refinement_losses.back();
  trace.total_calcs = trace.recount_calcs();
  return trace;
}

}  // namespace bon
