#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "anomforge/rng.hpp"
#include "anomforge/volume.hpp"

namespace anomforge {

// Linear beta schedule with alpha_t = 1 - beta_t and alpha_bar_t the running
// product. Steps are 1-based: t in [1, T].
class NoiseSchedule {
  public:
    NoiseSchedule(std::vector<double> beta);

    std::size_t steps() const { return beta_.size(); }
    double beta(std::size_t t) const { return beta_.at(t - 1); }
    double alpha(std::size_t t) const { return alpha_.at(t - 1); }
    // alpha_bar(0) is 1 by convention.
    double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }

    // beta~_t = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t); zero at t = 1.
    double posterior_variance(std::size_t t) const;

    const std::vector<double>& betas() const { return beta_; }
    const std::vector<double>& alphas() const { return alpha_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }

    void check_step(std::size_t t, std::size_t lo = 1) const;

  private:
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

inline constexpr std::size_t kDefaultSteps = 1000;
inline constexpr double kDefaultBeta1 = 0.0015;
inline constexpr double kDefaultBetaT = 0.0195;
inline constexpr std::size_t kDefaultInferenceStep = 250;
inline constexpr std::size_t kDefaultConditionDim = 1280;

NoiseSchedule linear_schedule(std::size_t steps = kDefaultSteps, double beta_1 = kDefaultBeta1,
                              double beta_T = kDefaultBetaT);

struct LatentTensor {
    // (c, h, w, d); channel-major, then h fastest within a channel.
    std::array<std::size_t, 4> shape{1, 1, 1, 1};
    std::vector<double> values;

    LatentTensor() = default;
    LatentTensor(std::array<std::size_t, 4> shape, double fill = 0.0);
    LatentTensor(std::array<std::size_t, 4> shape, std::vector<double> values);

    std::size_t size() const { return values.size(); }
    bool same_shape(const LatentTensor& o) const { return shape == o.shape; }
    static LatentTensor scalar(double v) { return LatentTensor({1, 1, 1, 1}, std::vector<double>{v}); }
};

struct ConditionVector {
    std::vector<double> values;

    static ConditionVector zeros(std::size_t d = kDefaultConditionDim) { return {std::vector<double>(d, 0.0)}; }
};

class LatentCodec {
  public:
    virtual ~LatentCodec() = default;
    virtual LatentTensor encode(const Volume3D& x) const = 0;
    virtual Volume3D decode(const LatentTensor& z, const Spacing& spacing) const = 0;
};

// One channel, latent dims equal image dims; decode(encode(x)) == x.
class IdentityCodec final : public LatentCodec {
  public:
    LatentTensor encode(const Volume3D& x) const override;
    Volume3D decode(const LatentTensor& z, const Spacing& spacing) const override;
};

class Denoiser {
  public:
    virtual ~Denoiser() = default;
    // Predicted noise, same shape as z_t.
    virtual LatentTensor predict(const LatentTensor& z_t, const ConditionVector& c, std::size_t t) const = 0;
    // Optional learned-variance head: per-coordinate interpolation weight
    // v in [0, 1], Sigma = exp(v log beta_t + (1 - v) log beta~_t).
    virtual std::optional<LatentTensor> predict_variance(const LatentTensor& /*z_t*/, const ConditionVector& /*c*/,
                                                         std::size_t /*t*/) const {
        return std::nullopt;
    }
};

class ConditionEncoder {
  public:
    virtual ~ConditionEncoder() = default;
    virtual ConditionVector encode(const LatentTensor& z_p) const = 0;
};

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
LatentTensor forward_sample(const LatentTensor& z0, std::size_t t, const LatentTensor& eps, const NoiseSchedule& s);

// One forward transition q(z_t | z_{t-1}) = N(sqrt(alpha_t) z_{t-1}, beta_t).
LatentTensor forward_transition(const LatentTensor& z_prev, std::size_t t, const LatentTensor& eps,
                                const NoiseSchedule& s);

struct PosteriorGaussian {
    LatentTensor mean;
    double variance = 0.0;
};

// q(z_{t-1} | z_t, z0) for t in [2, T].
PosteriorGaussian posterior_mean_var(const LatentTensor& z_t, const LatentTensor& z0, std::size_t t,
                                     const NoiseSchedule& s);

struct ReverseGaussian {
    LatentTensor mean;
    LatentTensor variance;  // per coordinate
};

// p_theta(z_{t-1} | z_t): mean from the epsilon parameterization, variance
// beta~_t (clipped to beta~_2 at t = 1) or the denoiser's variance head.
ReverseGaussian reverse_distribution(const LatentTensor& z_t, std::size_t t, const Denoiser& den,
                                     const ConditionVector& c, const NoiseSchedule& s);

// Draws z_{t-1}; no noise is added at t = 1.
LatentTensor reverse_step(const LatentTensor& z_t, std::size_t t, const Denoiser& den, const ConditionVector& c,
                          const NoiseSchedule& s, Rng& rng);

// Mean over coordinates of (eps - den(z_t, c, t))^2.
double simple_loss(const Denoiser& den, const LatentTensor& z0, const ConditionVector& c, std::size_t t,
                   const LatentTensor& eps, const NoiseSchedule& s);

// Unconditional objective: the same loss with a zero condition vector.
double simple_loss(const Denoiser& den, const LatentTensor& z0, std::size_t t, const LatentTensor& eps,
                   const NoiseSchedule& s);

// KL(N(mq, vq) || N(mp, vp)) summed over coordinates. Variances must be > 0.
double gaussian_kl(const LatentTensor& mean_q, const LatentTensor& var_q, const LatentTensor& mean_p,
                   const LatentTensor& var_p);

double gaussian_log_density(const LatentTensor& x, const LatentTensor& mean, const LatentTensor& var);

struct ElboTerms {
    std::vector<double> kl;  // kl[t - 2] for t = 2..T
    double decode_log_likelihood = 0.0;

    double kl_sum() const;
    // log p(z0 | z1) - sum KL.
    double bound() const { return decode_log_likelihood - kl_sum(); }
};

// Single-sample estimate: z_t drawn from q(z_t | z0) with a fresh eps per t.
ElboTerms elbo_terms(const LatentTensor& z0, const Denoiser& den, const ConditionVector& c, const NoiseSchedule& s,
                     Rng& rng);

// Evaluates the terms along a supplied trajectory, trajectory[t - 1] = z_t for
// t = 1..T.
ElboTerms elbo_terms(const LatentTensor& z0, const std::vector<LatentTensor>& trajectory, const Denoiser& den,
                     const ConditionVector& c, const NoiseSchedule& s);

// Encode, condition on the same input, noise to t_int, run every reverse step
// down to 1, decode.
Volume3D partial_reconstruct(const Volume3D& x, const LatentCodec& codec, const Denoiser& den,
                             const ConditionEncoder& ce, std::size_t t_int, const NoiseSchedule& s, Rng& rng);

// Bayes-optimal denoiser for z0 ~ N(mu, var) coordinatewise. mu/var of size 1
// broadcast over every coordinate.
class GaussianOracleDenoiser final : public Denoiser {
  public:
    GaussianOracleDenoiser(std::vector<double> mu, std::vector<double> var, const NoiseSchedule& s);
    LatentTensor predict(const LatentTensor& z_t, const ConditionVector& c, std::size_t t) const override;
    // E[z0 | z_t] = mu + a var (z_t - a mu) / (a^2 var + 1 - a^2), a = sqrt(alpha_bar_t).
    double posterior_mean(double z_t, std::size_t t, std::size_t coord = 0) const;

  private:
    std::vector<double> mu_;
    std::vector<double> var_;
    NoiseSchedule schedule_;
};

std::unique_ptr<Denoiser> gaussian_oracle_denoiser(std::vector<double> mu, std::vector<double> var,
                                                   const NoiseSchedule& s);

// Returns the exact noise relative to a fixed clean latent:
// (z_t - sqrt(alpha_bar_t) anchor) / sqrt(1 - alpha_bar_t).
class IdentityEpsDenoiser final : public Denoiser {
  public:
    IdentityEpsDenoiser(LatentTensor anchor, const NoiseSchedule& s);
    LatentTensor predict(const LatentTensor& z_t, const ConditionVector& c, std::size_t t) const override;

  private:
    LatentTensor anchor_;
    NoiseSchedule schedule_;
};

class ZeroDenoiser final : public Denoiser {
  public:
    LatentTensor predict(const LatentTensor& z_t, const ConditionVector& c, std::size_t t) const override;
};

// Adaptive average pooling of every channel to pool_dims, flattened
// channel-major then x-fastest, zero-padded to length d.
class PooledConditionEncoder final : public ConditionEncoder {
  public:
    PooledConditionEncoder(std::array<std::size_t, 3> pool_dims, std::size_t d = kDefaultConditionDim);
    ConditionVector encode(const LatentTensor& z_p) const override;

  private:
    std::array<std::size_t, 3> pool_;
    std::size_t d_;
};

std::unique_ptr<ConditionEncoder> pooled_condition_encoder(std::array<std::size_t, 3> pool_dims,
                                                           std::size_t d = kDefaultConditionDim);

}  // namespace anomforge
