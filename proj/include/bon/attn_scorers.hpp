#pragma once

// The three initial-noise losses computed from attention maps, plus their
// shared primitives. All functions here are pure: same inputs give
// bit-identical outputs, and parallel invocation is unrestricted.
//
// Gradients with respect to the raw attention entries are provided alongside
// the forward passes so differentiable backends can chain them through their
// own attention Jacobians. Argmax/min kinks use the deterministic
// lowest-index convention, which yields a valid gradient almost everywhere.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bon/domain.hpp"
#include "bon/errors.hpp"

namespace bon {

enum class ScorerKind { conform, initno, selfcross };

inline std::string_view to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::conform: return "conform";
    case ScorerKind::initno: return "initno";
    case ScorerKind::selfcross: return "selfcross";
  }
  throw ValidationError("unknown ScorerKind");
}

inline ScorerKind scorer_from_string(std::string_view s) {
  if (s == "conform") return ScorerKind::conform;
  if (s == "initno") return ScorerKind::initno;
  if (s == "selfcross") return ScorerKind::selfcross;
  throw ValidationError("unknown scorer: " + std::string(s));
}

enum class Smoothing { none, box };

/// How the conflict between two normalized maps is measured. Intersection
/// mass is the only implemented kind; the enum keeps the choice on the
/// config surface.
enum class OverlapKind { min_intersection };

/// Constants the losses leave to configuration: InfoNCE temperature, optional
/// spatial smoothing of token maps, and the normalization guard.
struct ScorerConfig {
  double infonce_temperature = 0.5;
  Smoothing smoothing = Smoothing::none;
  int smoothing_window = 3;  // odd box width, used when smoothing == box
  OverlapKind overlap_kind = OverlapKind::min_intersection;
  double eps = 1e-12;

  void validate() const {
    if (!(infonce_temperature > 0.0)) throw ValidationError("scorer config: temperature must be positive");
    if (smoothing == Smoothing::box && (smoothing_window < 1 || smoothing_window % 2 == 0))
      throw ValidationError("scorer config: box window must be odd and >= 1");
    if (!(eps > 0.0)) throw ValidationError("scorer config: eps must be positive");
  }
};

struct LossBreakdown {
  double total = 0.0;
  double cross_component = 0.0;
  double self_component = 0.0;  // zero for the contrastive loss
};

/// Gradient of a scalar loss with respect to every attention entry.
struct BundleGrad {
  Mat d_cross;  // P x T
  Mat d_self;   // P x P
};

struct TokenMapResult {
  std::vector<double> map;  // normalized over P patches
  bool degenerate = false;  // all-zero input replaced by the uniform map
};

namespace detail {

/// Truncated 2D box mean over the patch grid; linear, so its adjoint is the
/// same stencil applied with transposed weights.
inline std::vector<double> box_smooth(std::span<const double> m, int h, int w, int window) {
  const int r = window / 2;
  std::vector<double> out(m.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      int cnt = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          s += m[static_cast<std::size_t>(yy) * w + xx];
          ++cnt;
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = s / cnt;
    }
  }
  return out;
}

inline std::vector<double> box_smooth_adjoint(std::span<const double> g, int h, int w, int window) {
  const int r = window / 2;
  std::vector<double> out(g.size(), 0.0);
  // out[q] = sum over p with q in W(p) of g[p] / |W(p)|
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int cnt = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) ++cnt;
        }
      const double gp = g[static_cast<std::size_t>(y) * w + x] / cnt;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w)
            out[static_cast<std::size_t>(yy) * w + xx] += gp;
        }
    }
  }
  return out;
}

inline void check_token_indices(const AttentionBundle& b, std::span<const int> tokens) {
  if (tokens.empty()) throw ValidationError("token_map: empty token index list");
  for (int t : tokens)
    if (t < 0 || t >= b.tokens())
      throw ValidationError("token_map: token index " + std::to_string(t) + " out of range");
}

/// Raw per-patch sum of the cross columns for a token set (no smoothing,
/// no normalization); the quantity minmax_cross maximizes.
inline std::vector<double> raw_token_weights(const AttentionBundle& b, std::span<const int> tokens) {
  const int p = b.patches();
  std::vector<double> out(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    double s = 0.0;
    for (int t : tokens) s += b.cross.at(i, t);
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

struct TokenMapWork {
  std::vector<double> raw;       // column sums
  std::vector<double> smoothed;  // after optional box filter
  double total = 0.0;            // sum of smoothed
  std::vector<double> map;       // normalized (or uniform fallback)
  bool degenerate = false;
};

inline TokenMapWork token_map_work(const AttentionBundle& b, std::span<const int> tokens, const ScorerConfig& cfg) {
  check_token_indices(b, tokens);
  TokenMapWork w;
  w.raw = raw_token_weights(b, tokens);
  w.smoothed = cfg.smoothing == Smoothing::box
                   ? box_smooth(w.raw, b.grid_h, b.grid_w, cfg.smoothing_window)
                   : w.raw;
  w.total = std::accumulate(w.smoothed.begin(), w.smoothed.end(), 0.0);
  const int p = b.patches();
  if (w.total <= cfg.eps) {
    w.map.assign(static_cast<std::size_t>(p), 1.0 / p);
    w.degenerate = true;
  } else {
    w.map.resize(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) w.map[static_cast<std::size_t>(i)] = w.smoothed[static_cast<std::size_t>(i)] / w.total;
  }
  return w;
}

/// Backward of token_map_work: scatter d(loss)/d(map) into d(loss)/d(cross).
/// Degenerate maps are constant, so they propagate nothing.
inline void token_map_backward(const AttentionBundle& b, std::span<const int> tokens, const ScorerConfig& cfg,
                               const TokenMapWork& w, std::span<const double> d_map, Mat& d_cross) {
  if (w.degenerate) return;
  const int p = b.patches();
  // normalize backward: m = u / total
  double dot = 0.0;
  for (int i = 0; i < p; ++i) dot += d_map[static_cast<std::size_t>(i)] * w.map[static_cast<std::size_t>(i)];
  std::vector<double> d_u(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i)
    d_u[static_cast<std::size_t>(i)] = (d_map[static_cast<std::size_t>(i)] - dot) / w.total;
  const std::vector<double> d_raw = cfg.smoothing == Smoothing::box
                                        ? box_smooth_adjoint(d_u, b.grid_h, b.grid_w, cfg.smoothing_window)
                                        : d_u;
  for (int i = 0; i < p; ++i)
    for (int t : tokens) d_cross.at(i, t) += d_raw[static_cast<std::size_t>(i)];
}

inline void require_two_subjects(const PromptSpec& prompt) {
  if (prompt.subjects.size() < 2)
    throw ValidationError("loss requires at least 2 subjects, prompt \"" + prompt.text + "\"");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

/// Per-patch cross weights summed over `tokens`, optionally box-smoothed,
/// renormalized to sum 1. An all-zero input yields the uniform map with the
/// degeneracy flag set.
inline TokenMapResult token_map(const AttentionBundle& bundle, std::span<const int> tokens,
                                const ScorerConfig& cfg = {}) {
  auto w = detail::token_map_work(bundle, tokens, cfg);
  return {std::move(w.map), w.degenerate};
}

/// Smallest, over subjects, of the maximum per-patch cross weight summed over
/// that subject's noun tokens (raw row-stochastic weights, capped at 1).
inline double minmax_cross(const AttentionBundle& bundle, const PromptSpec& prompt) {
  if (prompt.subjects.empty()) throw ValidationError("minmax_cross: prompt has no subjects");
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& subject : prompt.subjects) {
    const auto weights = detail::raw_token_weights(bundle, subject.noun_tokens);
    const double best = *std::max_element(weights.begin(), weights.end());
    worst = std::min(worst, std::min(1.0, best));
  }
  return worst;
}

/// Intersection mass of two normalized maps: sum over patches of the
/// pointwise minimum. Symmetric, in [0, 1], and 1 exactly on identical maps.
inline double overlap(std::span<const double> map_a, std::span<const double> map_b) {
  if (map_a.size() != map_b.size() || map_a.empty())
    throw ValidationError("overlap: shape mismatch");
  double sa = 0.0, sb = 0.0, inter = 0.0;
  for (std::size_t i = 0; i < map_a.size(); ++i) {
    if (!(map_a[i] >= 0.0) || !(map_b[i] >= 0.0)) throw ValidationError("overlap: negative entry");
    sa += map_a[i];
    sb += map_b[i];
    inter += std::min(map_a[i], map_b[i]);
  }
  if (std::abs(sa - 1.0) > 1e-6 || std::abs(sb - 1.0) > 1e-6)
    throw ValidationError("overlap: maps must each sum to 1");
  return inter;
}

// ---------------------------------------------------------------------------
// Losses

/// Cross component 1 - minmax_cross plus the overlap of the two self-attention
/// rows at each subject's peak cross-attention patch.
inline LossBreakdown initno_loss(const AttentionBundle& bundle, const PromptSpec& prompt,
                                 const ScorerConfig& cfg = {}) {
  detail::require_two_subjects(prompt);
  const auto& a = prompt.subjects[0];
  const auto& b = prompt.subjects[1];
  const auto map_a = detail::token_map_work(bundle, a.noun_tokens, cfg);
  const auto map_b = detail::token_map_work(bundle, b.noun_tokens, cfg);
  const int pa = detail::argmax_lowest(map_a.map);
  const int pb = detail::argmax_lowest(map_b.map);
  LossBreakdown out;
  out.cross_component = 1.0 - minmax_cross(bundle, prompt);
  out.self_component = overlap(bundle.self_attn.row(pa), bundle.self_attn.row(pb));
  out.total = out.cross_component + out.self_component;
  return out;
}

/// Like initno_loss but aggregates every patch's self-attention row weighted
/// by the subject's token map instead of only the peak patch.
inline LossBreakdown selfcross_loss(const AttentionBundle& bundle, const PromptSpec& prompt,
                                    const ScorerConfig& cfg = {}) {
  detail::require_two_subjects(prompt);
  const int p = bundle.patches();
  std::vector<std::vector<double>> aggregated;
  for (int s = 0; s < 2; ++s) {
    const auto work = detail::token_map_work(bundle, prompt.subjects[static_cast<std::size_t>(s)].noun_tokens, cfg);
    std::vector<double> d(static_cast<std::size_t>(p), 0.0);
    for (int i = 0; i < p; ++i) {
      const double w = work.map[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      const auto row = bundle.self_attn.row(i);
      for (int q = 0; q < p; ++q) d[static_cast<std::size_t>(q)] += w * row[static_cast<std::size_t>(q)];
    }
    double total = std::accumulate(d.begin(), d.end(), 0.0);
    if (total <= cfg.eps) {
      d.assign(static_cast<std::size_t>(p), 1.0 / p);
    } else {
      for (auto& x : d) x /= total;
    }
    aggregated.push_back(std::move(d));
  }
  LossBreakdown out;
  out.cross_component = 1.0 - minmax_cross(bundle, prompt);
  out.self_component = overlap(aggregated[0], aggregated[1]);
  out.total = out.cross_component + out.self_component;
  return out;
}

/// InfoNCE over per-token attention maps: each subject's noun and attribute
/// token maps form one group; positives share a group, negatives do not.
/// Similarity is the cosine of the flattened maps at temperature tau.
inline LossBreakdown conform_loss(const AttentionBundle& bundle, const PromptSpec& prompt,
                                  const ScorerConfig& cfg = {}) {
  detail::require_two_subjects(prompt);
  const int p = bundle.patches();
  std::vector<std::vector<double>> features;
  std::vector<int> group;
  for (int s = 0; s < static_cast<int>(prompt.subjects.size()); ++s) {
    const auto& subj = prompt.subjects[static_cast<std::size_t>(s)];
    for (const auto* list : {&subj.noun_tokens, &subj.attribute_tokens}) {
      for (int t : *list) {
        const int single[1] = {t};
        features.push_back(detail::token_map_work(bundle, single, cfg).map);
        group.push_back(s);
      }
    }
  }
  const int k = static_cast<int>(features.size());
  std::vector<double> norms(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int q = 0; q < p; ++q) s += features[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] * features[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)];
    norms[static_cast<std::size_t>(i)] = std::max(std::sqrt(s), cfg.eps);
  }
  const auto cosine = [&](int i, int j) {
    double dot = 0.0;
    for (int q = 0; q < p; ++q) dot += features[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] * features[static_cast<std::size_t>(j)][static_cast<std::size_t>(q)];
    return dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
  };
  const double tau = cfg.infonce_temperature;
  double total = 0.0;
  int anchors = 0;
  for (int a = 0; a < k; ++a) {
    double z_pos = 0.0, z_all = 0.0;
    bool has_pos = false;
    for (int j = 0; j < k; ++j) {
      if (j == a) continue;
      const double w = std::exp(cosine(a, j) / tau);
      z_all += w;
      if (group[static_cast<std::size_t>(j)] == group[static_cast<std::size_t>(a)]) {
        z_pos += w;
        has_pos = true;
      }
    }
    if (!has_pos) continue;  // singleton group: this anchor has no positives
    total += -std::log(z_pos / z_all);
    ++anchors;
  }
  if (anchors == 0)
    throw ValidationError("conform_loss: no anchor has a positive pair, prompt \"" + prompt.text + "\"");
  LossBreakdown out;
  out.cross_component = total / anchors;
  out.self_component = 0.0;
  out.total = out.cross_component + out.self_component;
  return out;
}

inline LossBreakdown score_bundle(ScorerKind kind, const AttentionBundle& bundle, const PromptSpec& prompt,
                                  const ScorerConfig& cfg = {}) {
  switch (kind) {
    case ScorerKind::conform: return conform_loss(bundle, prompt, cfg);
    case ScorerKind::initno: return initno_loss(bundle, prompt, cfg);
    case ScorerKind::selfcross: return selfcross_loss(bundle, prompt, cfg);
  }
  throw ValidationError("unknown ScorerKind");
}

// ---------------------------------------------------------------------------
// Gradients with respect to attention entries

namespace detail {

inline void minmax_cross_backward(const AttentionBundle& bundle, const PromptSpec& prompt, double d_value,
                                  Mat& d_cross) {
  // value = min over subjects of min(1, max_p raw_p); subgradient at the
  // argmin subject's argmax patch unless the cap binds.
  int best_subject = -1, best_patch = -1;
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 0; s < static_cast<int>(prompt.subjects.size()); ++s) {
    const auto weights = raw_token_weights(bundle, prompt.subjects[static_cast<std::size_t>(s)].noun_tokens);
    const int pm = argmax_lowest(weights);
    const double capped = std::min(1.0, weights[static_cast<std::size_t>(pm)]);
    if (capped < worst) {
      worst = capped;
      best_subject = s;
      best_patch = pm;
    }
  }
  if (worst >= 1.0) return;  // cap active: locally constant
  for (int t : prompt.subjects[static_cast<std::size_t>(best_subject)].noun_tokens)
    d_cross.at(best_patch, t) += d_value;
}

/// d(overlap)/d(a), d(overlap)/d(b) for overlap = sum min(a, b); ties route
/// to the first argument.
inline void overlap_backward(std::span<const double> a, std::span<const double> b, double d_value,
                             std::span<double> d_a, std::span<double> d_b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= b[i])
      d_a[i] += d_value;
    else
      d_b[i] += d_value;
  }
}

}  // namespace detail

/// Loss and its gradient with respect to every cross/self attention entry.
inline std::pair<LossBreakdown, BundleGrad> loss_with_bundle_grad(ScorerKind kind, const AttentionBundle& bundle,
                                                                  const PromptSpec& prompt,
                                                                  const ScorerConfig& cfg = {}) {
  const int p = bundle.patches();
  const int t = bundle.tokens();
  BundleGrad grad{Mat(p, t), Mat(p, p)};

  if (kind == ScorerKind::initno) {
    detail::require_two_subjects(prompt);
    const auto work_a = detail::token_map_work(bundle, prompt.subjects[0].noun_tokens, cfg);
    const auto work_b = detail::token_map_work(bundle, prompt.subjects[1].noun_tokens, cfg);
    const int pa = detail::argmax_lowest(work_a.map);
    const int pb = detail::argmax_lowest(work_b.map);
    LossBreakdown out;
    out.cross_component = 1.0 - minmax_cross(bundle, prompt);
    out.self_component = overlap(bundle.self_attn.row(pa), bundle.self_attn.row(pb));
    out.total = out.cross_component + out.self_component;
    detail::minmax_cross_backward(bundle, prompt, -1.0, grad.d_cross);
    if (pa == pb) {
      for (int q = 0; q < p; ++q) grad.d_self.at(pa, q) += 1.0;
    } else {
      detail::overlap_backward(bundle.self_attn.row(pa), bundle.self_attn.row(pb), 1.0,
                               grad.d_self.row(pa), grad.d_self.row(pb));
    }
    return {out, std::move(grad)};
  }

  if (kind == ScorerKind::selfcross) {
    detail::require_two_subjects(prompt);
    std::vector<detail::TokenMapWork> works;
    std::vector<std::vector<double>> d_raw(2), d_norm(2);
    std::vector<double> totals(2);
    for (int s = 0; s < 2; ++s)
      works.push_back(detail::token_map_work(bundle, prompt.subjects[static_cast<std::size_t>(s)].noun_tokens, cfg));
    for (int s = 0; s < 2; ++s) {
      auto& d = d_raw[static_cast<std::size_t>(s)];
      d.assign(static_cast<std::size_t>(p), 0.0);
      for (int i = 0; i < p; ++i) {
        const double w = works[static_cast<std::size_t>(s)].map[static_cast<std::size_t>(i)];
        if (w == 0.0) continue;
        const auto row = bundle.self_attn.row(i);
        for (int q = 0; q < p; ++q) d[static_cast<std::size_t>(q)] += w * row[static_cast<std::size_t>(q)];
      }
      totals[static_cast<std::size_t>(s)] = std::accumulate(d.begin(), d.end(), 0.0);
      auto& n = d_norm[static_cast<std::size_t>(s)];
      if (totals[static_cast<std::size_t>(s)] <= cfg.eps) {
        n.assign(static_cast<std::size_t>(p), 1.0 / p);
      } else {
        n = d;
        for (auto& x : n) x /= totals[static_cast<std::size_t>(s)];
      }
    }
    LossBreakdown out;
    out.cross_component = 1.0 - minmax_cross(bundle, prompt);
    out.self_component = overlap(d_norm[0], d_norm[1]);
    out.total = out.cross_component + out.self_component;
    detail::minmax_cross_backward(bundle, prompt, -1.0, grad.d_cross);

    std::vector<std::vector<double>> d_D(2, std::vector<double>(static_cast<std::size_t>(p), 0.0));
    detail::overlap_backward(d_norm[0], d_norm[1], 1.0, d_D[0], d_D[1]);
    for (int s = 0; s < 2; ++s) {
      if (totals[static_cast<std::size_t>(s)] <= cfg.eps) continue;  // constant fallback
      // normalize backward
      double dot = 0.0;
      for (int q = 0; q < p; ++q) dot += d_D[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)] * d_norm[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)];
      std::vector<double> d_d(static_cast<std::size_t>(p));
      for (int q = 0; q < p; ++q)
        d_d[static_cast<std::size_t>(q)] = (d_D[static_cast<std::size_t>(s)][static_cast<std::size_t>(q)] - dot) / totals[static_cast<std::size_t>(s)];
      // d = sum_i map[i] * self_row(i): fan out to map and to self rows
      std::vector<double> d_map(static_cast<std::size_t>(p), 0.0);
      for (int i = 0; i < p; ++i) {
        const auto row = bundle.self_attn.row(i);
        const double w = works[static_cast<std::size_t>(s)].map[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (int q = 0; q < p; ++q) {
          acc += d_d[static_cast<std::size_t>(q)] * row[static_cast<std::size_t>(q)];
          grad.d_self.at(i, q) += w * d_d[static_cast<std::size_t>(q)];
        }
        d_map[static_cast<std::size_t>(i)] = acc;
      }
      detail::token_map_backward(bundle, prompt.subjects[static_cast<std::size_t>(s)].noun_tokens, cfg,
                                 works[static_cast<std::size_t>(s)], d_map, grad.d_cross);
    }
    return {out, std::move(grad)};
  }

  // conform
  detail::require_two_subjects(prompt);
  std::vector<detail::TokenMapWork> works;
  std::vector<int> token_of, group;
  for (int s = 0; s < static_cast<int>(prompt.subjects.size()); ++s) {
    const auto& subj = prompt.subjects[static_cast<std::size_t>(s)];
    for (const auto* list : {&subj.noun_tokens, &subj.attribute_tokens}) {
      for (int tok : *list) {
        const int single[1] = {tok};
        works.push_back(detail::token_map_work(bundle, single, cfg));
        token_of.push_back(tok);
        group.push_back(s);
      }
    }
  }
  const int k = static_cast<int>(works.size());
  std::vector<double> norms(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double s = 0.0;
    for (int q = 0; q < p; ++q) {
      const double x = works[static_cast<std::size_t>(i)].map[static_cast<std::size_t>(q)];
      s += x * x;
    }
    norms[static_cast<std::size_t>(i)] = std::max(std::sqrt(s), cfg.eps);
  }
  Mat sim(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double dot = 0.0;
      for (int q = 0; q < p; ++q)
        dot += works[static_cast<std::size_t>(i)].map[static_cast<std::size_t>(q)] * works[static_cast<std::size_t>(j)].map[static_cast<std::size_t>(q)];
      sim.at(i, j) = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
    }
  const double tau = cfg.infonce_temperature;
  double total = 0.0;
  int anchors = 0;
  Mat d_sim(k, k);
  for (int a = 0; a < k; ++a) {
    double z_pos = 0.0, z_all = 0.0;
    bool has_pos = false;
    for (int j = 0; j < k; ++j) {
      if (j == a) continue;
      const double w = std::exp(sim.at(a, j) / tau);
      z_all += w;
      if (group[static_cast<std::size_t>(j)] == group[static_cast<std::size_t>(a)]) {
        z_pos += w;
        has_pos = true;
      }
    }
    if (!has_pos) continue;
    total += -std::log(z_pos / z_all);
    ++anchors;
    for (int j = 0; j < k; ++j) {
      if (j == a) continue;
      const double w = std::exp(sim.at(a, j) / tau);
      double g = w / z_all;
      if (group[static_cast<std::size_t>(j)] == group[static_cast<std::size_t>(a)]) g -= w / z_pos;
      d_sim.at(a, j) += g / tau;
    }
  }
  if (anchors == 0)
    throw ValidationError("conform_loss: no anchor has a positive pair, prompt \"" + prompt.text + "\"");
  const double inv_anchors = 1.0 / anchors;
  for (auto& x : d_sim.v) x *= inv_anchors;

  // cosine backward into per-feature map gradients
  std::vector<std::vector<double>> d_maps(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(p), 0.0));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double g = d_sim.at(i, j);
      if (g == 0.0 || i == j) continue;
      const double ni = norms[static_cast<std::size_t>(i)], nj = norms[static_cast<std::size_t>(j)];
      const double s = sim.at(i, j);
      for (int q = 0; q < p; ++q) {
        const double fi = works[static_cast<std::size_t>(i)].map[static_cast<std::size_t>(q)];
        const double fj = works[static_cast<std::size_t>(j)].map[static_cast<std::size_t>(q)];
        d_maps[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] += g * (fj / (ni * nj) - s * fi / (ni * ni));
        d_maps[static_cast<std::size_t>(j)][static_cast<std::size_t>(q)] += g * (fi / (ni * nj) - s * fj / (nj * nj));
      }
    }
  for (int i = 0; i < k; ++i) {
    const int single[1] = {token_of[static_cast<std::size_t>(i)]};
    detail::token_map_backward(bundle, single, cfg, works[static_cast<std::size_t>(i)], d_maps[static_cast<std::size_t>(i)], grad.d_cross);
  }
  LossBreakdown out;
  out.cross_component = total * inv_anchors;
  out.self_component = 0.0;
  out.total = out.cross_component + out.self_component;
  return {out, std::move(grad)};
}

}  // namespace bon
