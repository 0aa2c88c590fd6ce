#pragma once

// The contract every diffusion source must satisfy, a deterministic
// differentiable synthetic surrogate for desk-scale runs, and a stub adapter
// for real latent-diffusion pipelines.
//
// Loss-calculation accounting: attention_for and loss_gradient each count as
// exactly one evaluation on the backend's instrumented counter. A gradient
// obtained by finite differences (fd_loss_gradient) goes through
// attention_for and is therefore charged 2*dim evaluations automatically.
// Internal surrogate machinery (quality calibration, image generation) never
// touches the counter.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bon/attn_scorers.hpp"
#include "bon/domain.hpp"
#include "bon/errors.hpp"
#include "bon/rng.hpp"
#include "bon/stats.hpp"

namespace bon {

struct BackendDescriptor {
  int noise_dim = 0;
  int grid_h = 0;
  int grid_w = 0;
  bool supports_gradient = false;
  std::string backbone_id;

  int patches() const { return grid_h * grid_w; }
  void validate() const {
    if (noise_dim <= 0 || grid_h <= 0 || grid_w <= 0)
      throw ValidationError("backend descriptor: dimensions must be positive");
  }
};

/// Output of generate(): for the surrogate, a token carrying the noise hash
/// and the hidden quality; for a real adapter, a reference to an image file.
struct ImageHandle {
  std::string backbone_id;
  std::uint64_t content_hash = 0;
  bool has_quality = false;
  double quality = 0.0;
  std::string uri;  // real adapters only
};

struct LossGradient {
  LossBreakdown loss;
  std::vector<double> gradient;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  /// Token count the backend's text pipeline would assign to this prompt.
  virtual int token_count(const PromptSpec& prompt) const { return prompt.token_count(); }

  /// Attention maps for one noise/prompt pair. Counts one evaluation.
  virtual AttentionBundle attention_for(std::span<const double> noise, const PromptSpec& prompt) const = 0;

  /// Loss and its gradient with respect to the noise, in one evaluation.
  virtual LossGradient loss_gradient(std::span<const double> noise, const PromptSpec& prompt, ScorerKind scorer,
                                     const ScorerConfig& cfg) const {
    (void)noise;
    (void)prompt;
    (void)scorer;
    (void)cfg;
    throw CapabilityError("backend '" + descriptor().backbone_id + "' does not provide gradients");
  }

  /// Denoise the given initial noise into an image (or a surrogate token).
  virtual ImageHandle generate(std::span<const double> noise, const PromptSpec& prompt) const = 0;

  /// Hidden ground-truth alignment score; surrogate backends only.
  virtual double true_quality(std::span<const double> noise, const PromptSpec& prompt) const {
    (void)noise;
    (void)prompt;
    throw CapabilityError("backend '" + descriptor().backbone_id + "' has no ground-truth quality signal");
  }

  std::uint64_t evals() const { return eval_count_.load(std::memory_order_relaxed); }
  void reset_evals() const { eval_count_.store(0, std::memory_order_relaxed); }

 protected:
  void note_eval() const { eval_count_.fetch_add(1, std::memory_order_relaxed); }
  void check_noise_dim(std::span<const double> noise) const {
    if (static_cast<int>(noise.size()) != descriptor().noise_dim)
      throw ValidationError("noise dimension " + std::to_string(noise.size()) + " does not match backend dimension " +
                            std::to_string(descriptor().noise_dim));
  }

 private:
  mutable std::atomic<std::uint64_t> eval_count_{0};
};

/// Forward convenience: one counted evaluation of a scorer at `noise`.
inline LossBreakdown evaluate_loss(const Backend& backend, std::span<const double> noise, const PromptSpec& prompt,
                                   ScorerKind scorer, const ScorerConfig& cfg = {}) {
  return score_bundle(scorer, backend.attention_for(noise, prompt), prompt, cfg);
}

/// Central-difference gradient for backends without analytic gradients.
/// Costs (and is charged) exactly 2*dim evaluations through attention_for.
inline std::vector<double> fd_loss_gradient(const Backend& backend, std::span<const double> noise,
                                            const PromptSpec& prompt, ScorerKind scorer, const ScorerConfig& cfg = {},
                                            double step = 1e-6) {
  std::vector<double> z(noise.begin(), noise.end());
  std::vector<double> grad(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double saved = z[k];
    const double h = step * std::max(1.0, std::abs(saved));
    z[k] = saved + h;
    const double up = evaluate_loss(backend, z, prompt, scorer, cfg).total;
    z[k] = saved - h;
    const double down = evaluate_loss(backend, z, prompt, scorer, cfg).total;
    z[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Synthetic surrogate

/// Configuration of the synthetic backend. Attention is a row-softmax of
/// fixed prompt-keyed affine maps of the noise; quality is the standardized
/// negated loss mixed with independent hash noise at correlation
/// `proxy_correlation`.
struct SurrogateConfig {
  int noise_dim = 16;
  int grid_h = 4;
  int grid_w = 4;
  double proxy_correlation = 0.6;
  double quality_noise_scale = 1.0;
  std::uint64_t projection_seed = 42;
  double logit_scale = 24.0;  // sharpness of the synthetic attention
  double bias_scale = 1.0;    // noise-independent logit offsets
  int calibration_draws = 1024;
  ScorerKind quality_scorer = ScorerKind::selfcross;
  bool gradients = true;
  std::string backbone_id = "surrogate";
  ScorerConfig scorer_cfg;  // used when evaluating the quality scorer

  void validate() const {
    if (noise_dim <= 0 || grid_h <= 0 || grid_w <= 0) throw ValidationError("surrogate config: bad dimensions");
    if (std::abs(proxy_correlation) > 1.0) throw ValidationError("surrogate config: |proxy correlation| > 1");
    if (!(quality_noise_scale > 0.0)) throw ValidationError("surrogate config: quality noise scale must be positive");
    if (calibration_draws < 2) throw ValidationError("surrogate config: need at least 2 calibration draws");
    if (!(logit_scale > 0.0)) throw ValidationError("surrogate config: logit scale must be positive");
  }
};

/// Result of the build-time Monte Carlo calibration of the surrogate.
struct SurrogateManifest {
  std::string backbone_id;
  double proxy_correlation = 0.0;  // configured rho
  double rho_hat = 0.0;            // measured corr(quality, -loss)
  int samples = 0;
  std::uint64_t estimation_seed = 0;
  std::uint64_t projection_seed = 0;
};

class SurrogateBackend final : public Backend {
 public:
  explicit SurrogateBackend(SurrogateConfig cfg = {}) : cfg_(std::move(cfg)) {
    cfg_.validate();
    desc_ = BackendDescriptor{cfg_.noise_dim, cfg_.grid_h, cfg_.grid_w, cfg_.gradients, cfg_.backbone_id};
  }

  const SurrogateConfig& config() const { return cfg_; }
  const BackendDescriptor& descriptor() const override { return desc_; }

  AttentionBundle attention_for(std::span<const double> noise, const PromptSpec& prompt) const override {
    check_noise_dim(noise);
    note_eval();
    return forward(noise, prompt);
  }

  LossGradient loss_gradient(std::span<const double> noise, const PromptSpec& prompt, ScorerKind scorer,
                             const ScorerConfig& cfg) const override {
    if (!cfg_.gradients)
      throw CapabilityError("backend '" + cfg_.backbone_id + "' does not provide gradients");
    check_noise_dim(noise);
    note_eval();
    const Projection& proj = projection(prompt);
    const AttentionBundle bundle = forward_with(proj, noise, prompt);
    auto [loss, bundle_grad] = loss_with_bundle_grad(scorer, bundle, prompt, cfg);

    const int p = desc_.patches();
    const int t = bundle.tokens();
    std::vector<double> grad(static_cast<std::size_t>(cfg_.noise_dim), 0.0);
    // softmax-row backward, then the affine map's transpose
    for (int r = 0; r < p; ++r) {
      const auto s = bundle.cross.row(r);
      const auto g = bundle_grad.d_cross.row(r);
      double dot = 0.0;
      for (int c = 0; c < t; ++c) dot += g[static_cast<std::size_t>(c)] * s[static_cast<std::size_t>(c)];
      for (int c = 0; c < t; ++c) {
        const double dl = s[static_cast<std::size_t>(c)] * (g[static_cast<std::size_t>(c)] - dot);
        if (dl == 0.0) continue;
        const auto w = proj.cross_w.row(r * proj.tokens + c);
        for (int k = 0; k < cfg_.noise_dim; ++k) grad[static_cast<std::size_t>(k)] += dl * w[static_cast<std::size_t>(k)];
      }
    }
    for (int r = 0; r < p; ++r) {
      const auto s = bundle.self_attn.row(r);
      const auto g = bundle_grad.d_self.row(r);
      double dot = 0.0;
      for (int c = 0; c < p; ++c) dot += g[static_cast<std::size_t>(c)] * s[static_cast<std::size_t>(c)];
      for (int c = 0; c < p; ++c) {
        const double dl = s[static_cast<std::size_t>(c)] * (g[static_cast<std::size_t>(c)] - dot);
        if (dl == 0.0) continue;
        const auto w = proj.self_w.row(r * p + c);
        for (int k = 0; k < cfg_.noise_dim; ++k) grad[static_cast<std::size_t>(k)] += dl * w[static_cast<std::size_t>(k)];
      }
    }
    return {loss, std::move(grad)};
  }

  double true_quality(std::span<const double> noise, const PromptSpec& prompt) const override {
    check_noise_dim(noise);
    const auto [mu, sigma] = loss_moments(prompt);
    const double loss = score_bundle(cfg_.quality_scorer, forward(noise, prompt), prompt, cfg_.scorer_cfg).total;
    const double standardized = (mu - loss) / sigma;
    const double g = independent_noise(noise, prompt);
    const double rho = cfg_.proxy_correlation;
    return rho * standardized + std::sqrt(1.0 - rho * rho) * cfg_.quality_noise_scale * g;
  }

  ImageHandle generate(std::span<const double> noise, const PromptSpec& prompt) const override {
    check_noise_dim(noise);
    ImageHandle handle;
    handle.backbone_id = cfg_.backbone_id;
    handle.content_hash = rng::mix2(rng::hash_doubles(noise), prompt.key_hash());
    handle.has_quality = true;
    handle.quality = true_quality(noise, prompt);
    return handle;
  }

  /// Monte Carlo verification of corr(quality, -loss) over standard-normal
  /// noise; the result belongs in the surrogate's manifest file.
  SurrogateManifest calibrate(std::span<const PromptSpec> prompts, int samples_per_prompt,
                              std::uint64_t estimation_seed) const {
    if (prompts.empty()) throw ValidationError("calibrate: no prompts");
    std::vector<double> qualities, neg_losses;
    for (const auto& prompt : prompts) {
      const std::uint64_t stream = rng::mix3(estimation_seed, prompt.key_hash(), 0x5CA1Eull);
      for (int i = 0; i < samples_per_prompt; ++i) {
        std::vector<double> z(static_cast<std::size_t>(cfg_.noise_dim));
        for (int k = 0; k < cfg_.noise_dim; ++k)
          z[static_cast<std::size_t>(k)] = rng::normal_at(stream, static_cast<std::uint64_t>(i) * cfg_.noise_dim + k);
        const double loss = score_bundle(cfg_.quality_scorer, forward(z, prompt), prompt, cfg_.scorer_cfg).total;
        const auto [mu, sigma] = loss_moments(prompt);
        // same standardization as true_quality, spelled out to reuse forward()
        const double g = independent_noise(z, prompt);
        const double rho = cfg_.proxy_correlation;
        qualities.push_back(rho * (mu - loss) / sigma + std::sqrt(1.0 - rho * rho) * cfg_.quality_noise_scale * g);
        neg_losses.push_back(-loss);
      }
    }
    SurrogateManifest m;
    m.backbone_id = cfg_.backbone_id;
    m.proxy_correlation = cfg_.proxy_correlation;
    m.rho_hat = stats::pearson(qualities, neg_losses);
    m.samples = static_cast<int>(qualities.size());
    m.estimation_seed = estimation_seed;
    m.projection_seed = cfg_.projection_seed;
    return m;
  }

 private:
  struct Projection {
    int tokens = 0;
    Mat cross_w;                 // (P*T) x dim
    std::vector<double> cross_b;  // P*T
    Mat self_w;                  // (P*P) x dim, symmetric in the patch pair
    std::vector<double> self_b;   // P*P, symmetric
  };

  const Projection& projection(const PromptSpec& prompt) const {
    const std::uint64_t key = rng::mix2(cfg_.projection_seed, prompt.key_hash());
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = projections_.find(key);
      if (it != projections_.end()) return *it->second;
    }
    auto proj = std::make_unique<Projection>(build_projection(prompt, key));
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto [it, inserted] = projections_.emplace(key, std::move(proj));
    return *it->second;
  }

  Projection build_projection(const PromptSpec& prompt, std::uint64_t key) const {
    const int p = desc_.patches();
    const int t = token_count(prompt);
    const int dim = cfg_.noise_dim;
    const double w_scale = cfg_.logit_scale / std::sqrt(static_cast<double>(dim));
    Projection proj;
    proj.tokens = t;
    proj.cross_w = Mat(p * t, dim);
    proj.cross_b.resize(static_cast<std::size_t>(p) * t);
    const std::uint64_t ck = rng::mix2(key, 0xC505ull);
    std::uint64_t counter = 0;
    for (auto& x : proj.cross_w.v) x = w_scale * rng::normal_at(ck, counter++);
    for (auto& x : proj.cross_b) x = cfg_.bias_scale * rng::normal_at(ck, counter++);
    // self logits: one parameter vector per unordered patch pair, mirrored
    proj.self_w = Mat(p * p, dim);
    proj.self_b.resize(static_cast<std::size_t>(p) * p);
    const std::uint64_t sk = rng::mix2(key, 0x5E1Full);
    counter = 0;
    for (int a = 0; a < p; ++a) {
      for (int b = a; b < p; ++b) {
        const std::size_t ab = static_cast<std::size_t>(a) * p + b;
        const std::size_t ba = static_cast<std::size_t>(b) * p + a;
        for (int k = 0; k < dim; ++k) {
          const double w = w_scale * rng::normal_at(sk, counter++);
          proj.self_w.v[ab * dim + k] = w;
          proj.self_w.v[ba * dim + k] = w;
        }
        const double bias = cfg_.bias_scale * rng::normal_at(sk, counter++);
        proj.self_b[ab] = bias;
        proj.self_b[ba] = bias;
      }
    }
    return proj;
  }

  static void softmax_rows(Mat& logits) {
    for (int r = 0; r < logits.rows; ++r) {
      auto row = logits.row(r);
      double mx = row[0];
      for (double x : row) mx = std::max(mx, x);
      double sum = 0.0;
      for (auto& x : row) {
        x = std::exp(x - mx);
        sum += x;
      }
      for (auto& x : row) x /= sum;
    }
  }

  AttentionBundle forward_with(const Projection& proj, std::span<const double> noise, const PromptSpec&) const {
    const int p = desc_.patches();
    const int t = proj.tokens;
    const int dim = cfg_.noise_dim;
    AttentionBundle bundle;
    bundle.grid_h = cfg_.grid_h;
    bundle.grid_w = cfg_.grid_w;
    bundle.cross = Mat(p, t);
    for (int j = 0; j < p * t; ++j) {
      const auto w = proj.cross_w.row(j);
      double acc = proj.cross_b[static_cast<std::size_t>(j)];
      for (int k = 0; k < dim; ++k) acc += w[static_cast<std::size_t>(k)] * noise[static_cast<std::size_t>(k)];
      bundle.cross.v[static_cast<std::size_t>(j)] = acc;
    }
    softmax_rows(bundle.cross);
    bundle.self_attn = Mat(p, p);
    for (int j = 0; j < p * p; ++j) {
      const auto w = proj.self_w.row(j);
      double acc = proj.self_b[static_cast<std::size_t>(j)];
      for (int k = 0; k < dim; ++k) acc += w[static_cast<std::size_t>(k)] * noise[static_cast<std::size_t>(k)];
      bundle.self_attn.v[static_cast<std::size_t>(j)] = acc;
    }
    softmax_rows(bundle.self_attn);
    return bundle;
  }

  AttentionBundle forward(std::span<const double> noise, const PromptSpec& prompt) const {
    return forward_with(projection(prompt), noise, prompt);
  }

  /// Standard-normal draw that is a pure function of the noise bits; over
  /// random noises it is statistically independent of any smooth loss.
  double independent_noise(std::span<const double> noise, const PromptSpec& prompt) const {
    const std::uint64_t h = rng::mix3(rng::hash_doubles(noise), prompt.key_hash(),
                                      rng::mix2(cfg_.projection_seed, 0x9A11ull));
    return rng::normal_at(h, 0);
  }

  /// Mean and standard deviation of the quality scorer's loss over standard
  /// normal noise, estimated once per prompt from a dedicated stream.
  std::pair<double, double> loss_moments(const PromptSpec& prompt) const {
    const std::uint64_t key = rng::mix2(cfg_.projection_seed, prompt.key_hash());
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = moments_.find(key);
      if (it != moments_.end()) return it->second;
    }
    const Projection& proj = projection(prompt);
    const std::uint64_t stream = rng::mix2(key, 0xCA11Bull);
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(cfg_.calibration_draws));
    std::vector<double> z(static_cast<std::size_t>(cfg_.noise_dim));
    for (int i = 0; i < cfg_.calibration_draws; ++i) {
      for (int k = 0; k < cfg_.noise_dim; ++k)
        z[static_cast<std::size_t>(k)] = rng::normal_at(stream, static_cast<std::uint64_t>(i) * cfg_.noise_dim + k);
      losses.push_back(score_bundle(cfg_.quality_scorer, forward_with(proj, z, prompt), prompt, cfg_.scorer_cfg).total);
    }
    const double mu = stats::mean(losses);
    const double sigma = std::max(stats::stdev(losses), 1e-12);
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto [it, inserted] = moments_.emplace(key, std::make_pair(mu, sigma));
    return it->second;
  }

  SurrogateConfig cfg_;
  BackendDescriptor desc_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, std::unique_ptr<Projection>> projections_;
  mutable std::unordered_map<std::uint64_t, std::pair<double, double>> moments_;
};

// ---------------------------------------------------------------------------
// Real-pipeline adapter (stub)

/// Selects which attention signals a real adapter should export. Which
/// layer/timestep combination works best is a property of the concrete
/// pipeline; these defaults only name the convention.
struct AdapterOptions {
  std::string backbone_id = "sd-adapter";
  int noise_dim = 16384;  // 4 x 64 x 64 latent
  int grid_h = 16;
  int grid_w = 16;
  std::string attention_layer = "mid+up";  // which UNet blocks to average
  int timestep = 0;                        // denoising step the maps are read at
  int max_concurrency = 1;                 // instances must be called serially
};

/// Contract for wiring a real latent-diffusion pipeline into the toolkit.
///
/// An implementation must, per call: encode the prompt, run the pipeline far
/// enough to read cross/self attention at `attention_layer`/`timestep`,
/// average heads, reshape to the declared patch grid, and row-normalize.
/// generate() must be deterministic given (noise, prompt). Gradient support
/// is optional; without it the engine falls back to finite differences and
/// charges 2*dim evaluations per step. This build ships the contract only —
/// every operation reports the missing pipeline.
class RealPipelineAdapter final : public Backend {
 public:
  explicit RealPipelineAdapter(AdapterOptions opts = {}) : opts_(std::move(opts)) {
    desc_ = BackendDescriptor{opts_.noise_dim, opts_.grid_h, opts_.grid_w, false, opts_.backbone_id};
    desc_.validate();
  }

  const AdapterOptions& options() const { return opts_; }
  const BackendDescriptor& descriptor() const override { return desc_; }

  AttentionBundle attention_for(std::span<const double>, const PromptSpec&) const override {
    throw BackendError("real pipeline adapter '" + opts_.backbone_id + "' is not wired to a diffusion model in this build");
  }

  ImageHandle generate(std::span<const double>, const PromptSpec&) const override {
    throw BackendError("real pipeline adapter '" + opts_.backbone_id + "' is not wired to a diffusion model in this build");
  }

 private:
  AdapterOptions opts_;
  BackendDescriptor desc_;
};

}  // namespace bon
