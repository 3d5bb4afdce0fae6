#include "anomforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace anomforge {

namespace {

void require_same_shape(const LatentTensor& a, const LatentTensor& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string("latent shape mismatch: ") + what);
}

std::size_t shape_count(const std::array<std::size_t, 4>& s) { return s[0] * s[1] * s[2] * s[3]; }

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> beta) : beta_(std::move(beta)) {
    if (beta_.empty()) throw std::invalid_argument("NoiseSchedule: at least one step required");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < beta_.size(); ++i) {
        if (!(beta_[i] > 0.0 && beta_[i] < 1.0)) throw std::invalid_argument("NoiseSchedule: beta must lie in (0, 1)");
        alpha_[i] = 1.0 - beta_[i];
        prod *= alpha_[i];
        alpha_bar_[i] = prod;
    }
}

double NoiseSchedule::posterior_variance(std::size_t t) const {
    check_step(t);
    return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

void NoiseSchedule::check_step(std::size_t t, std::size_t lo) const {
    if (t < lo || t > steps()) {
        throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                                std::to_string(steps()) + "]");
    }
}

NoiseSchedule linear_schedule(std::size_t steps, double beta_1, double beta_T) {
    if (steps < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
    if (!(beta_1 > 0.0 && beta_1 <= beta_T && beta_T < 1.0)) {
        throw std::invalid_argument("linear_schedule: require 0 < beta_1 <= beta_T < 1");
    }
    std::vector<double> beta(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        // std::lerp is exact at both endpoints and monotone in between.
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        beta[i] = std::lerp(beta_1, beta_T, frac);
    }
    return NoiseSchedule(std::move(beta));
}

LatentTensor::LatentTensor(std::array<std::size_t, 4> s, double fill) : shape(s), values(shape_count(s), fill) {}

LatentTensor::LatentTensor(std::array<std::size_t, 4> s, std::vector<double> v) : shape(s), values(std::move(v)) {
    if (values.size() != shape_count(shape)) throw std::invalid_argument("LatentTensor: value count mismatch");
}

LatentTensor IdentityCodec::encode(const Volume3D& x) const {
    const Dims& d = x.dims();
    return LatentTensor({1, d.nx, d.ny, d.nz}, std::vector<double>(x.values().begin(), x.values().end()));
}

Volume3D IdentityCodec::decode(const LatentTensor& z, const Spacing& spacing) const {
    if (z.shape[0] != 1) throw std::invalid_argument("IdentityCodec: expected a single channel");
    return Volume3D(Dims{z.shape[1], z.shape[2], z.shape[3]}, spacing, z.values);
}

LatentTensor forward_sample(const LatentTensor& z0, std::size_t t, const LatentTensor& eps, const NoiseSchedule& s) {
    s.check_step(t);
    require_same_shape(z0, eps, "forward_sample eps");
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    LatentTensor out(z0.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * z0.values[i] + b * eps.values[i];
    return out;
}

LatentTensor forward_transition(const LatentTensor& z_prev, std::size_t t, const LatentTensor& eps,
                                const NoiseSchedule& s) {
    s.check_step(t);
    require_same_shape(z_prev, eps, "forward_transition eps");
    const double a = std::sqrt(s.alpha(t));
    const double b = std::sqrt(s.beta(t));
    LatentTensor out(z_prev.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * z_prev.values[i] + b * eps.values[i];
    return out;
}

PosteriorGaussian posterior_mean_var(const LatentTensor& z_t, const LatentTensor& z0, std::size_t t,
                                     const NoiseSchedule& s) {
    s.check_step(t, 2);
    require_same_shape(z_t, z0, "posterior_mean_var");
    const double abar_t = s.alpha_bar(t);
    const double abar_prev = s.alpha_bar(t - 1);
    const double c0 = std::sqrt(abar_prev) * s.beta(t) / (1.0 - abar_t);
    const double ct = std::sqrt(s.alpha(t)) * (1.0 - abar_prev) / (1.0 - abar_t);
    PosteriorGaussian out{LatentTensor(z_t.shape), s.posterior_variance(t)};
    for (std::size_t i = 0; i < z_t.size(); ++i) out.mean.values[i] = c0 * z0.values[i] + ct * z_t.values[i];
    return out;
}

namespace {

// beta~_t, with t = 1 (where it vanishes) clipped to beta~_2.
double clipped_posterior_variance(std::size_t t, const NoiseSchedule& s) {
    if (t >= 2) return s.posterior_variance(t);
    return s.steps() >= 2 ? s.posterior_variance(2) : s.beta(1);
}

}  // namespace

ReverseGaussian reverse_distribution(const LatentTensor& z_t, std::size_t t, const Denoiser& den,
                                     const ConditionVector& c, const NoiseSchedule& s) {
    s.check_step(t);
    const LatentTensor eps_hat = den.predict(z_t, c, t);
    require_same_shape(z_t, eps_hat, "denoiser output");
    const double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
    ReverseGaussian out{LatentTensor(z_t.shape), LatentTensor(z_t.shape)};
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        out.mean.values[i] = inv_sqrt_alpha * (z_t.values[i] - coef * eps_hat.values[i]);
    }

    const double log_small = std::log(clipped_posterior_variance(t, s));
    const double log_large = std::log(s.beta(t));
    if (auto head = den.predict_variance(z_t, c, t)) {
        require_same_shape(z_t, *head, "variance head output");
        for (std::size_t i = 0; i < z_t.size(); ++i) {
            const double v = std::clamp(head->values[i], 0.0, 1.0);
            out.variance.values[i] = std::exp(v * log_large + (1.0 - v) * log_small);
        }
    } else {
        const double fixed = t >= 2 ? s.posterior_variance(t) : std::exp(log_small);
        std::fill(out.variance.values.begin(), out.variance.values.end(), fixed);
    }
    return out;
}

LatentTensor reverse_step(const LatentTensor& z_t, std::size_t t, const Denoiser& den, const ConditionVector& c,
                          const NoiseSchedule& s, Rng& rng) {
    ReverseGaussian g = reverse_distribution(z_t, t, den, c, s);
    if (t == 1) return std::move(g.mean);
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        g.mean.values[i] += std::sqrt(g.variance.values[i]) * rng.normal();
    }
    return std::move(g.mean);
}

double simple_loss(const Denoiser& den, const LatentTensor& z0, const ConditionVector& c, std::size_t t,
                   const LatentTensor& eps, const NoiseSchedule& s) {
    const LatentTensor z_t = forward_sample(z0, t, eps, s);
    const LatentTensor pred = den.predict(z_t, c, t);
    require_same_shape(eps, pred, "denoiser output");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double e = eps.values[i] - pred.values[i];
        acc += e * e;
    }
    return acc / static_cast<double>(eps.size());
}

double simple_loss(const Denoiser& den, const LatentTensor& z0, std::size_t t, const LatentTensor& eps,
                   const NoiseSchedule& s) {
    return simple_loss(den, z0, ConditionVector::zeros(), t, eps, s);
}

double gaussian_kl(const LatentTensor& mean_q, const LatentTensor& var_q, const LatentTensor& mean_p,
                   const LatentTensor& var_p) {
    require_same_shape(mean_q, var_q, "kl q");
    require_same_shape(mean_q, mean_p, "kl means");
    require_same_shape(mean_q, var_p, "kl p");
    double kl = 0.0;
    for (std::size_t i = 0; i < mean_q.size(); ++i) {
        const double vq = var_q.values[i];
        const double vp = var_p.values[i];
        if (!(vq > 0.0) || !(vp > 0.0)) throw std::invalid_argument("gaussian_kl: variances must be positive");
        const double dm = mean_q.values[i] - mean_p.values[i];
        kl += 0.5 * (std::log(vp / vq) + (vq + dm * dm) / vp - 1.0);
    }
    return kl;
}

double gaussian_log_density(const LatentTensor& x, const LatentTensor& mean, const LatentTensor& var) {
    require_same_shape(x, mean, "log density mean");
    require_same_shape(x, var, "log density var");
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = var.values[i];
        if (!(v > 0.0)) throw std::invalid_argument("gaussian_log_density: variance must be positive");
        const double d = x.values[i] - mean.values[i];
        ll += -0.5 * (std::log(2.0 * std::numbers::pi * v) + d * d / v);
    }
    return ll;
}

double ElboTerms::kl_sum() const { return std::accumulate(kl.begin(), kl.end(), 0.0); }

ElboTerms elbo_terms(const LatentTensor& z0, const std::vector<LatentTensor>& trajectory, const Denoiser& den,
                     const ConditionVector& c, const NoiseSchedule& s) {
    if (trajectory.size() != s.steps()) throw std::invalid_argument("elbo_terms: trajectory must hold z_1..z_T");
    ElboTerms out;
    out.kl.reserve(s.steps() > 0 ? s.steps() - 1 : 0);
    for (std::size_t t = 2; t <= s.steps(); ++t) {
        const LatentTensor& z_t = trajectory[t - 1];
        const PosteriorGaussian q = posterior_mean_var(z_t, z0, t, s);
        const ReverseGaussian p = reverse_distribution(z_t, t, den, c, s);
        out.kl.push_back(gaussian_kl(q.mean, LatentTensor(z0.shape, q.variance), p.mean, p.variance));
    }
    const ReverseGaussian p1 = reverse_distribution(trajectory[0], 1, den, c, s);
    out.decode_log_likelihood = gaussian_log_density(z0, p1.mean, p1.variance);
    return out;
}

ElboTerms elbo_terms(const LatentTensor& z0, const Denoiser& den, const ConditionVector& c, const NoiseSchedule& s,
                     Rng& rng) {
    std::vector<LatentTensor> traj;
    traj.reserve(s.steps());
    LatentTensor eps(z0.shape);
    for (std::size_t t = 1; t <= s.steps(); ++t) {
        for (double& e : eps.values) e = rng.normal();
        traj.push_back(forward_sample(z0, t, eps, s));
    }
    return elbo_terms(z0, traj, den, c, s);
}

Volume3D partial_reconstruct(const Volume3D& x, const LatentCodec& codec, const Denoiser& den,
                             const ConditionEncoder& ce, std::size_t t_int, const NoiseSchedule& s, Rng& rng) {
    if (t_int > s.steps()) throw std::out_of_range("partial_reconstruct: T_int exceeds T");
    const LatentTensor z_p = codec.encode(x);
    if (t_int == 0) return codec.decode(z_p, x.spacing());
    const ConditionVector c = ce.encode(z_p);
    LatentTensor eps(z_p.shape);
    for (double& e : eps.values) e = rng.normal();
    LatentTensor z = forward_sample(z_p, t_int, eps, s);
    for (std::size_t t = t_int; t >= 1; --t) z = reverse_step(z, t, den, c, s, rng);
    return codec.decode(z, x.spacing());
}

GaussianOracleDenoiser::GaussianOracleDenoiser(std::vector<double> mu, std::vector<double> var, const NoiseSchedule& s)
    : mu_(std::move(mu)), var_(std::move(var)), schedule_(s) {
    if (mu_.empty() || mu_.size() != var_.size()) throw std::invalid_argument("gaussian oracle: mu/var size mismatch");
    for (double v : var_) {
        if (!(v > 0.0)) throw std::invalid_argument("gaussian oracle: var must be > 0");
    }
}

double GaussianOracleDenoiser::posterior_mean(double z_t, std::size_t t, std::size_t coord) const {
    const std::size_t k = mu_.size() == 1 ? 0 : coord;
    const double abar = schedule_.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double gain = a * var_[k] / (abar * var_[k] + (1.0 - abar));
    return mu_[k] + gain * (z_t - a * mu_[k]);
}

LatentTensor GaussianOracleDenoiser::predict(const LatentTensor& z_t, const ConditionVector&, std::size_t t) const {
    schedule_.check_step(t);
    if (mu_.size() != 1 && mu_.size() != z_t.size()) throw std::invalid_argument("gaussian oracle: size mismatch");
    const double a = std::sqrt(schedule_.alpha_bar(t));
    const double b = std::sqrt(1.0 - schedule_.alpha_bar(t));
    LatentTensor out(z_t.shape);
    for (std::size_t i = 0; i < z_t.size(); ++i) {
        out.values[i] = (z_t.values[i] - a * posterior_mean(z_t.values[i], t, i)) / b;
    }
    return out;
}

std::unique_ptr<Denoiser> gaussian_oracle_denoiser(std::vector<double> mu, std::vector<double> var,
                                                   const NoiseSchedule& s) {
    return std::make_unique<GaussianOracleDenoiser>(std::move(mu), std::move(var), s);
}

IdentityEpsDenoiser::IdentityEpsDenoiser(LatentTensor anchor, const NoiseSchedule& s)
    : anchor_(std::move(anchor)), schedule_(s) {}

LatentTensor IdentityEpsDenoiser::predict(const LatentTensor& z_t, const ConditionVector&, std::size_t t) const {
    schedule_.check_step(t);
    require_same_shape(z_t, anchor_, "identity-eps anchor");
    const double a = std::sqrt(schedule_.alpha_bar(t));
    const double b = std::sqrt(1.0 - schedule_.alpha_bar(t));
    LatentTensor out(z_t.shape);
    for (std::size_t i = 0; i < z_t.size(); ++i) out.values[i] = (z_t.values[i] - a * anchor_.values[i]) / b;
    return out;
}

LatentTensor ZeroDenoiser::predict(const LatentTensor& z_t, const ConditionVector&, std::size_t) const {
    return LatentTensor(z_t.shape, 0.0);
}

PooledConditionEncoder::PooledConditionEncoder(std::array<std::size_t, 3> pool_dims, std::size_t d)
    : pool_(pool_dims), d_(d) {
    if (pool_[0] == 0 || pool_[1] == 0 || pool_[2] == 0) throw std::invalid_argument("pool dims must be positive");
    if (pool_[0] * pool_[1] * pool_[2] > d_) throw std::invalid_argument("pool dims exceed condition length");
}

ConditionVector PooledConditionEncoder::encode(const LatentTensor& zp) const {
    const std::size_t channels = zp.shape[0];
    const std::size_t h = zp.shape[1], w = zp.shape[2], dd = zp.shape[3];
    const std::size_t cells = pool_[0] * pool_[1] * pool_[2];
    if (channels * cells > d_) throw std::invalid_argument("pooled condition exceeds condition length");
    ConditionVector out{std::vector<double>(d_, 0.0)};
    // Adaptive pooling bins: [floor(i n / p), ceil((i + 1) n / p)).
    auto lo = [](std::size_t i, std::size_t n, std::size_t p) { return i * n / p; };
    auto hi = [](std::size_t i, std::size_t n, std::size_t p) { return ((i + 1) * n + p - 1) / p; };
    std::size_t k = 0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const std::size_t base = ch * h * w * dd;
        for (std::size_t pz = 0; pz < pool_[2]; ++pz) {
            for (std::size_t py = 0; py < pool_[1]; ++py) {
                for (std::size_t px = 0; px < pool_[0]; ++px) {
                    double sum = 0.0;
                    std::size_t n = 0;
                    for (std::size_t z = lo(pz, dd, pool_[2]); z < hi(pz, dd, pool_[2]); ++z) {
                        for (std::size_t y = lo(py, w, pool_[1]); y < hi(py, w, pool_[1]); ++y) {
                            for (std::size_t x = lo(px, h, pool_[0]); x < hi(px, h, pool_[0]); ++x) {
                                sum += zp.values[base + x + h * (y + w * z)];
                                ++n;
                            }
                        }
                    }
                    out.values[k++] = n ? sum / static_cast<double>(n) : 0.0;
                }
            }
        }
    }
    return out;
}

std::unique_ptr<ConditionEncoder> pooled_condition_encoder(std::array<std::size_t, 3> pool_dims, std::size_t d) {
    return std::make_unique<PooledConditionEncoder>(pool_dims, d);
}

}  // namespace anomforge
