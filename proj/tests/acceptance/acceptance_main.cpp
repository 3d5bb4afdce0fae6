#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "anomforge/detector.hpp"
#include "anomforge/diffusion.hpp"
#include "anomforge/encoder.hpp"
#include "anomforge/filters.hpp"
#include "anomforge/fluid.hpp"
#include "anomforge/metrics.hpp"
#include "anomforge/phantom.hpp"
#include "anomforge/cli.hpp"
#include "metrics_oracle.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace anomforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    const char* name;
    double time_limit_s;  // <= 0: none
    std::function<Outcome()> check;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

Outcome schedule_exactness() {
    const NoiseSchedule s = linear_schedule(1000, 0.0015, 0.0195);
    bool ok = s.steps() == 1000 && s.beta(1) == 0.0015 && s.beta(1000) == 0.0195;
    for (std::size_t t = 2; t <= 1000; ++t) ok = ok && s.beta(t) > s.beta(t - 1) && s.alpha_bar(t) < s.alpha_bar(t - 1);
    return {ok, fmt("beta_1=%.17g beta_1000=%.17g", s.beta(1), s.beta(1000))};
}

Outcome pde_conservation() {
    const Phantom ph = make_phantom(PhantomSpec{Dims{64, 64, 64}, 0.4, 0.8, 0.15, 21, 1});
    PotentialParams pp;
    pp.seed = 77;
    const PotentialSet pot = make_potentials(pp, ph.volume.dims());
    const Dims dims = ph.volume.dims();
    VelocityField zero{{Volume3D(dims), Volume3D(dims), Volume3D(dims)}};
    const DiffusivityField d = diffusivity(pot.phi);
    const LesionSeed seed = make_lesion_seed(erode(ph.brain, 8), 6.0, 5);
    Volume3D p = seed_probability(seed, ph.brain);
    const double dt = cfl_dt(zero, d, Spacing{}, 1e9);
    auto total = [](const Volume3D& v) {
        long double s = 0;
        for (double x : v.values()) s += x;
        return s;
    };
    const long double s0 = total(p);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        p = step(p, zero, d, dt, ph.brain);
        worst = std::max(worst, double(std::fabs(total(p) - s0) / s0));
    }
    return {worst <= 1e-6, fmt("max relative drift %.3e over 1000 steps (dt=%.4f)", worst, dt)};
}

Outcome boundedness_sweep() {
    const Phantom ph = make_phantom(PhantomSpec{Dims{32, 32, 32}, 0.4, 0.8, 0.15, 3, 1});
    const BinaryMask3D allowed = erode(ph.brain, 4);
    double lo = 1.0, hi = 0.0, excursion = 0.0;
    bool inside = true;
    for (std::uint64_t s = 0; s < 100; ++s) {
        PotentialParams pp;
        pp.seed = 1000 + s;
        const PotentialSet pot = make_potentials(pp, ph.volume.dims());
        const Volume3D p0 = seed_probability(make_lesion_seed(allowed, 4.0, s), ph.brain);
        const IntegrationReport r =
            integrate(p0, curl_velocity(pot.psi), diffusivity(pot.phi), IntegrationParams{4.0}, ph.brain);
        excursion = std::max(excursion, r.max_clamp_excursion);
        for (std::size_t i = 0; i < r.p.size(); ++i) {
            lo = std::min(lo, r.p[i]);
            hi = std::max(hi, r.p[i]);
            if (r.p[i] != 0.0 && !ph.brain[i]) inside = false;
        }
    }
    const bool ok = lo >= 0.0 && hi <= 1.0 && inside && excursion <= 1e-12;
    return {ok, fmt("min %.3g max %.6g pre-clamp excursion %.3e", lo, hi, excursion) +
                    (inside ? ", support inside mask" : ", support LEAKED")};
}

Outcome incompressibility() {
    const Dims dims{32, 32, 32};
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        PotentialParams pp;
        pp.seed = 500 + s;
        const Volume3D div = divergence(curl_velocity(make_potentials(pp, dims).psi));
        for (std::size_t z = 2; z + 2 < dims.nz; ++z)
            for (std::size_t y = 2; y + 2 < dims.ny; ++y)
                for (std::size_t x = 2; x + 2 < dims.nx; ++x) worst = std::max(worst, std::fabs(div.at(x, y, z)));
    }
    return {worst <= 1e-10, fmt("max interior |div v| %.3e over 20 potentials", worst)};
}

Outcome analytic_curl() {
    const Dims dims{12, 10, 8};
    std::array<Volume3D, 3> psi{Volume3D(dims), Volume3D(dims), Volume3D(dims)};
    for (std::size_t z = 0; z < dims.nz; ++z)
        for (std::size_t y = 0; y < dims.ny; ++y)
            for (std::size_t x = 0; x < dims.nx; ++x) psi[2].at(x, y, z) = double(y);
    const VelocityField v = curl_velocity(psi);
    double err = 0.0;
    for (std::size_t z = 1; z + 1 < dims.nz; ++z)
        for (std::size_t y = 1; y + 1 < dims.ny; ++y)
            for (std::size_t x = 1; x + 1 < dims.nx; ++x) {
                err = std::max(err, std::fabs(v.component[0].at(x, y, z) - 1.0));
                err = std::max(err, std::fabs(v.component[1].at(x, y, z)));
                err = std::max(err, std::fabs(v.component[2].at(x, y, z)));
            }
    return {err <= 4.0 * 2.220446049250313e-16, fmt("max interior deviation from (1,0,0): %.3e", err)};
}

Outcome gaussian_oracle() {
    const NoiseSchedule s = linear_schedule(1000, 0.0015, 0.0195);
    const double mu = 0.3, var = 0.05 * 0.05;
    const std::size_t t_int = 250, n = 10000;
    const GaussianOracleDenoiser oracle({mu}, {var}, s);
    const IdentityCodec codec;
    const PooledConditionEncoder ce({1, 1, 1}, 1);

    // Exact moments of the implemented chain: z_{t-1} = A_t z_t + B_t + noise.
    double m = std::sqrt(s.alpha_bar(t_int)) * mu;
    double v = s.alpha_bar(t_int) * var + (1.0 - s.alpha_bar(t_int));
    for (std::size_t t = t_int; t >= 1; --t) {
        const double abar = s.alpha_bar(t), a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
        const double g = a * var / (abar * var + 1.0 - abar);
        const double c = s.beta(t) / b, ra = std::sqrt(s.alpha(t));
        const double A = (1.0 - c * (1.0 - a * g) / b) / ra;
        const double B = c * (1.0 - a * g) * a * mu / (b * ra);
        m = A * m + B;
        v = A * A * v + (t >= 2 ? s.beta(t) * (1.0 - s.alpha_bar(t - 1)) / (1.0 - abar) : 0.0);
    }

    Rng prior(2718), chain(31415);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const Volume3D x(Dims{1, 1, 1}, {}, mu + std::sqrt(var) * prior.normal());
        const double r = partial_reconstruct(x, codec, oracle, ce, t_int, s, chain)[0];
        sum += r;
        sum2 += r * r;
    }
    const double mean = sum / double(n);
    const double sv = (sum2 - double(n) * mean * mean) / double(n - 1);
    const double em = std::fabs(mean / m - 1.0), ev = std::fabs(sv / v - 1.0);
    return {em <= 0.02 && ev <= 0.02,
            fmt("mean %.5f vs %.5f (%.2f%%), ", mean, m, 100 * em) +
                fmt("variance %.4e vs %.4e (%.2f%%); prior variance %.4e", sv, v, 100 * ev, var)};
}

Outcome forward_marginal() {
    const NoiseSchedule s = linear_schedule(1000, 0.0015, 0.0195);
    const std::size_t n = 10000;
    const double var0 = 0.25;
    Rng rng(1618);
    LatentTensor z0({1, n, 1, 1}), eps({1, n, 1, 1});
    for (double& x : z0.values) x = 0.5 + std::sqrt(var0) * rng.normal();
    double sz = 0.0, sz2 = 0.0;
    for (double x : z0.values) {
        sz += x;
        sz2 += x * x;
    }
    const double var_z0 = (sz2 - sz * sz / double(n)) / double(n - 1);
    bool ok = true;
    std::string detail;
    for (std::size_t t : {100u, 500u, 900u}) {
        for (double& e : eps.values) e = rng.normal();
        const LatentTensor zt = forward_sample(z0, t, eps, s);
        double a = 0.0, a2 = 0.0;
        for (double x : zt.values) {
            a += x;
            a2 += x * x;
        }
        const double got = (a2 - a * a / double(n)) / double(n - 1);
        const double expect = s.alpha_bar(t) * var_z0 + (1.0 - s.alpha_bar(t));
        const double rel = std::fabs(got / expect - 1.0);
        ok = ok && rel <= 0.03;
        detail += fmt("t=%g %.2f%% ", double(t), 100 * rel);
    }
    return {ok, detail};
}

Outcome metric_oracle() {
    Rng rng(4242);
    std::size_t mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 2 + rng.below(15);
        std::vector<double> sc(n);
        std::vector<bool> y(n);
        const bool coarse = k % 3 != 0;
        for (std::size_t i = 0; i < n; ++i) {
            sc[i] = coarse ? double(rng.below(6)) / 5.0 : rng.uniform();
            y[i] = rng.bernoulli(0.35);
        }
        const std::size_t pos = rng.below(n);
        y[pos] = true;
        y[(pos + 1 + rng.below(n - 1)) % n] = false;
        const testing::BruteScores b = testing::brute_metrics(sc, y);
        const DiceResult d = max_dice(sc, y);
        const bool same = pixel_auc(sc, y) == b.auc && average_precision(sc, y) == b.ap && d.dice_max == b.dice &&
                          d.best_threshold == b.threshold && false_positive_rate(sc, y, d.best_threshold) == b.fpr;
        mismatches += !same;
    }
    return {mismatches == 0, fmt("%g of 1000 pairs differ", double(mismatches))};
}

Outcome anomaly_map_pipeline() {
    const Phantom ph = make_phantom(PhantomSpec{Dims{64, 64, 64}, 0.4, 0.8, 0.15, 8, 1});
    const LesionSeed seed = make_lesion_seed(erode(ph.brain, 8), 6.0, 8);
    PotentialParams pp;
    pp.seed = 8;
    const PseudoPathology pat = make_pseudo_pathology(ph.volume, seed, pp, IntegrationParams{}, DeltaParams{}, 8,
                                                      PathologyMasks{std::nullopt, ph.brain});
    const AnomalyMapResult r = anomaly_map(pat.x_p, ph.volume, ph.brain, SsimDissimilarity());
    const BinaryMask3D gt = threshold_mask(pat.p_final, 0.5);
    double in = 0.0, out = 0.0;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < r.map.size(); ++i) {
        if (!r.eroded_brain[i]) continue;
        if (gt[i]) {
            in += r.map[i];
            ++n_in;
        } else {
            out += r.map[i];
            ++n_out;
        }
    }
    const double ratio = (in / double(n_in)) / (out / double(n_out));
    const double dice = max_dice(r.map, gt, r.eroded_brain).dice_max;
    return {ratio >= 5.0 && dice >= 0.5, fmt("inside/outside ratio %.2f, max Dice %.4f", ratio, dice)};
}

nlohmann::json pipeline_config() {
    return {{"volume", {{"count", 3}}}, {"variants_per_sample", 2}};
}

Outcome cli_determinism() {
    testing::TempDir a("acc_det_a"), b("acc_det_b");
    const fs::path cfg = a / "config.json";
    testing::spit(cfg, pipeline_config().dump());
    const bool ran = testing::run_pipeline(a.path, cfg, "2024", "1").ok() && testing::run_pipeline(b.path, cfg, "2024", "3").ok();
    if (!ran) return {false, "pipeline exited nonzero"};
    for (const testing::TempDir* d : {&a, &b}) {
        if (testing::cli({"simulate", "--config", cfg.string(), "--seed", "2024", "--out", (d->path / "si").string(),
                          "--manifest", (d->path / "ph" / "manifest.csv").string(), "--snapshot-every", "2"}) != 0)
            return {false, "simulate exited nonzero"};
    }
    auto ta = testing::tree_bytes(a.path), tb = testing::tree_bytes(b.path);
    ta.erase("config.json");
    std::size_t nifti = 0, differ = 0;
    for (const auto& [name, bytes] : ta) {
        if (name.ends_with(".nii")) ++nifti;
        const auto it = tb.find(name);
        if (it == tb.end() || it->second != bytes) ++differ;
    }
    const bool ok = differ == 0 && ta.size() == tb.size() && nifti > 0;
    return {ok, fmt("%g files (%g NIfTI) compared, %g differ", double(ta.size()), double(nifti), double(differ))};
}

Outcome corruption_fraction() {
    testing::TempDir dir("acc_frac");
    const fs::path cfg = dir / "config.json";
    testing::spit(cfg, nlohmann::json{{"volume", {{"dims", {32, 32, 32}}, {"count", 10}, {"lesion_radius", 3}, {"lesion_margin", 4}}},
                                      {"variants_per_sample", 1},
                                      {"corruption_fraction", 0.8}}
                           .dump());
    if (testing::cli({"phantom", "--config", cfg.string(), "--seed", "99", "--out", (dir / "ph").string()}) != 0)
        return {false, "phantom exited nonzero"};
    std::vector<std::string> runs;
    std::size_t corrupted = 0;
    for (const char* sub : {"co1", "co2"}) {
        if (testing::cli({"corrupt", "--config", cfg.string(), "--seed", "99", "--out", (dir / sub).string(),
                          "--manifest", (dir / "ph" / "manifest.csv").string()}) != 0)
            return {false, "corrupt exited nonzero"};
        const cli::CsvTable t = cli::read_csv(dir / sub / "corrupt_manifest.csv");
        std::set<std::string> ids;
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            if (t.get(r, "corrupted") == "1") ids.insert(t.get(r, "id"));
        corrupted = ids.size();
        if (corrupted != 8) break;
        runs.push_back(testing::slurp(dir / sub / "corrupt_manifest.csv"));
    }
    const bool same = runs.size() == 2 && runs[0] == runs[1];
    return {corrupted == 8 && same, fmt("%g of 10 corrupted", double(corrupted)) + (same ? ", rerun identical" : ", rerun differs")};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"schedule exactness", 1.0, schedule_exactness},
        {"PDE conservation", 60.0, pde_conservation},
        {"boundedness sweep", 120.0, boundedness_sweep},
        {"discrete incompressibility", 0.0, incompressibility},
        {"analytic curl", 0.0, analytic_curl},
        {"Gaussian-oracle diffusion", 120.0, gaussian_oracle},
        {"forward-marginal consistency", 0.0, forward_marginal},
        {"metric oracle equivalence", 0.0, metric_oracle},
        {"anomaly map pipeline", 60.0, anomaly_map_pipeline},
        {"end-to-end determinism", 0.0, cli_determinism},
        {"corruption fraction", 0.0, corruption_fraction},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.time_limit_s > 0.0 && secs >= c.time_limit_s) {
            o.pass = false;
            o.detail += fmt(" [over time limit %.0f s]", c.time_limit_s);
        }
        failed += !o.pass;
        std::printf("%s  %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
