#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "anomforge/cli.hpp"
#include "anomforge/diffusion.hpp"
#include "anomforge/filters.hpp"
#include "anomforge/nifti.hpp"
#include "anomforge/parallel.hpp"
#include "anomforge/phantom.hpp"
#include "anomforge/rng.hpp"

namespace fs = std::filesystem;

namespace anomforge::cli {

using nlohmann::json;

namespace {

enum Stream : std::uint64_t {
    kPhantomStream = 1,
    kLesionStream = 2,
    kCorruptStream = 3,
    kSimulateStream = 4,
    kReconstructStream = 5,
};

struct Context {
    std::string command;
    RunConfig cfg;
    fs::path out;
    unsigned workers = 1;
    std::optional<fs::path> manifest;
};

std::string num(double v) { return json(v).dump(); }

std::string pad3(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return buf;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) throw std::runtime_error("empty path in manifest");
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
}

// Manifests store paths relative to their own directory.
std::string rel_to(const fs::path& target, const fs::path& dir) {
    return fs::relative(fs::absolute(target), fs::absolute(dir)).generic_string();
}

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

json provenance(const Context& ctx, const std::string& id) {
    return {{"tool", "anomforge"}, {"version", kVersion}, {"command", ctx.command}, {"id", id},
            {"master_seed", ctx.cfg.seed}};
}

BinaryMask3D read_mask(const fs::path& p) { return threshold_mask(read_nifti(p), 0.5); }

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first failing
// job in index order is rethrown.
template <class Fn>
void run_jobs(std::size_t n, unsigned workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < std::min<std::size_t>(workers, n); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) guarded(i);
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

const fs::path& require_manifest(const Context& ctx) {
    if (!ctx.manifest) throw ConfigError(ctx.command + ": --manifest is required");
    return *ctx.manifest;
}

IntegrationParams integration_params(const IntegrateSection& s, double t_max) {
    IntegrationParams ip;
    ip.t_max = t_max;
    if (!s.auto_dt) ip.dt = s.dt;
    ip.safety = s.safety;
    return ip;
}

double draw_t_max(const IntegrateSection& s, Rng& rng) { return s.sample_t_max ? rng.uniform(0.0, s.t_max) : s.t_max; }

int cmd_phantom(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    CsvTable manifest{{"id", "healthy_path", "lesion_path", "brain_path", "wm_path"}, {}};
    manifest.rows.resize(c.volume.count);
    run_jobs(c.volume.count, ctx.workers, [&](std::size_t i) {
        const std::string id = "phantom_" + pad3(i);
        PhantomSpec spec;
        spec.dims = c.volume.dims;
        spec.gray = c.volume.gray;
        spec.white = c.volume.white;
        spec.ventricle = c.volume.ventricle;
        spec.smoothness = c.volume.smoothness;
        spec.seed = job_seed(c.seed, id, 0, kPhantomStream);
        const Phantom ph = make_phantom(spec);
        const std::uint64_t lesion_seed = job_seed(c.seed, id, 0, kLesionStream);
        const LesionSeed ls = make_lesion_seed(erode(ph.brain, c.volume.lesion_margin), c.volume.lesion_radius,
                                               lesion_seed);

        const std::string h = id + "_healthy.nii", l = id + "_lesion.nii", b = id + "_brain.nii", w = id + "_wm.nii";
        atomic_write_nifti(ph.volume, ctx.out / h);
        atomic_write_nifti(to_volume(ls.lesion_mask), ctx.out / l);
        atomic_write_nifti(to_volume(ph.brain), ctx.out / b);
        atomic_write_nifti(to_volume(ph.wm_mask), ctx.out / w);

        json side = provenance(ctx, id);
        side["seeds"] = {{"phantom", spec.seed}, {"lesion", lesion_seed}};
        side["params"] = {{"dims", {spec.dims.nx, spec.dims.ny, spec.dims.nz}},
                          {"gray", spec.gray},
                          {"white", spec.white},
                          {"ventricle", spec.ventricle},
                          {"smoothness", spec.smoothness},
                          {"lesion_radius", c.volume.lesion_radius},
                          {"lesion_margin", c.volume.lesion_margin}};
        side["voxels"] = {{"brain", ph.brain.count()}, {"wm", ph.wm_mask.count()}, {"lesion", ls.lesion_mask.count()}};
        side["outputs"] = {{"healthy", h}, {"lesion", l}, {"brain", b}, {"wm", w}};
        write_json(ctx.out / (id + "_phantom.json"), side);
        manifest.rows[i] = {id, h, l, b, w};
    });
    atomic_write(ctx.out / "manifest.csv", format_csv(manifest));
    return 0;
}

int cmd_corrupt(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const fs::path& mpath = require_manifest(ctx);
    const fs::path base = mpath.parent_path();
    const CsvTable in = read_csv(mpath);

    std::vector<std::string> ids;
    for (std::size_t r = 0; r < in.rows.size(); ++r) ids.push_back(in.get(r, "id"));
    const auto chosen = select_for_corruption(ids, c.seed, c.corruption_fraction);

    struct Job {
        std::size_t row;
        std::size_t variant;
        bool corrupt;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < in.rows.size(); ++r) {
        const bool sel = std::binary_search(chosen.begin(), chosen.end(), ids[r]);
        if (!sel) {
            jobs.push_back({r, 0, false});
            continue;
        }
        for (std::size_t k = 0; k < c.variants_per_sample; ++k) jobs.push_back({r, k, true});
    }
    if (c.delta.mu_w_source == "wm_mask" && !in.has("wm_path")) {
        throw ConfigError("delta.mu_w_source = wm_mask needs a wm_path manifest column");
    }

    CsvTable out{{"id", "variant", "corrupted", "image_path", "prob_path", "healthy_path", "brain_path"}, {}};
    out.rows.resize(jobs.size());
    run_jobs(jobs.size(), ctx.workers, [&](std::size_t j) {
        const Job& job = jobs[j];
        const std::string& id = ids[job.row];
        const fs::path healthy = resolve(base, in.get(job.row, "healthy_path"));
        const fs::path brain_p = resolve(base, in.get(job.row, "brain_path"));
        const std::string healthy_rel = rel_to(healthy, ctx.out), brain_rel = rel_to(brain_p, ctx.out);
        if (!job.corrupt) {
            out.rows[j] = {id, "0", "0", healthy_rel, "", healthy_rel, brain_rel};
            return;
        }

        const Volume3D x_h = read_nifti(healthy);
        PathologyMasks masks;
        masks.brain = read_mask(brain_p);
        if (c.delta.mu_w_source == "wm_mask") masks.wm_mask = read_mask(resolve(base, in.get(job.row, "wm_path")));
        const BinaryMask3D lesion = read_mask(resolve(base, in.get(job.row, "lesion_path")));

        const std::uint64_t s = job_seed(c.seed, id, job.variant, kCorruptStream);
        Rng rng(s);
        const double t_max = draw_t_max(c.integrate, rng);
        Offset3 jitter{0, 0, 0};
        if (c.delta.max_jitter > 0) {
            const auto m = static_cast<std::ptrdiff_t>(c.delta.max_jitter);
            for (auto& o : jitter) o = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(2 * m + 1))) - m;
        }
        const DeltaParams dp{c.delta.flip_probability, c.delta.clamp};
        const PseudoPathology pp = make_pseudo_pathology(x_h, LesionSeed{lesion, jitter}, c.perlin,
                                                         integration_params(c.integrate, t_max), dp, s, masks);

        const std::string stem = id + "_v" + std::to_string(job.variant);
        const std::string img = stem + "_image.nii", prob = stem + "_prob.nii";
        atomic_write_nifti(pp.x_p, ctx.out / img);
        atomic_write_nifti(pp.p_final, ctx.out / prob);

        json side = provenance(ctx, id);
        side["variant"] = job.variant;
        side["seeds"] = {{"job", s}, {"potentials", pathology_potential_seed(c.perlin.seed, s)}};
        side["sampled"] = {{"t_max", t_max},
                           {"jitter", jitter},
                           {"flipped", pp.flipped},
                           {"mu_w", pp.mu_w},
                           {"steps", pp.steps},
                           {"dt", pp.dt},
                           {"max_clamp_excursion", pp.max_clamp_excursion}};
        side["params"] = {{"perlin", to_json(c)["perlin"]},
                          {"integrate", to_json(c)["integrate"]},
                          {"delta", to_json(c)["delta"]}};
        side["inputs"] = {{"healthy", healthy_rel}, {"brain", brain_rel}};
        side["outputs"] = {{"image", img}, {"prob", prob}};
        write_json(ctx.out / (stem + "_corrupt.json"), side);
        out.rows[j] = {id, std::to_string(job.variant), "1", img, prob, healthy_rel, brain_rel};
    });
    atomic_write(ctx.out / "corrupt_manifest.csv", format_csv(out));
    return 0;
}

int cmd_simulate(const Context& ctx, std::size_t every) {
    const RunConfig& c = ctx.cfg;
    const fs::path& mpath = require_manifest(ctx);
    const fs::path base = mpath.parent_path();
    const CsvTable in = read_csv(mpath);

    CsvTable out{{"id", "p_final_path"}, {}};
    out.rows.resize(in.rows.size());
    run_jobs(in.rows.size(), ctx.workers, [&](std::size_t r) {
        const std::string id = in.get(r, "id");
        const BinaryMask3D brain = read_mask(resolve(base, in.get(r, "brain_path")));
        const BinaryMask3D lesion = read_mask(resolve(base, in.get(r, "lesion_path")));
        const std::uint64_t s = job_seed(c.seed, id, 0, kSimulateStream);
        Rng rng(s);
        const double t_max = draw_t_max(c.integrate, rng);

        const Volume3D p0 = seed_probability(LesionSeed{lesion, {0, 0, 0}}, brain);
        PotentialParams pp = c.perlin;
        pp.seed = pathology_potential_seed(c.perlin.seed, s);
        const PotentialSet pot = make_potentials(pp, brain.dims());

        json snapshots = json::array();
        StepObserver obs;
        if (every > 0) {
            obs = [&](std::size_t k, double t, const Volume3D& p) {
                if (k % every != 0) return;
                char buf[32];
                std::snprintf(buf, sizeof buf, "_p_step%06zu.nii", k);
                const std::string name = id + buf;
                atomic_write_nifti(p, ctx.out / name);
                snapshots.push_back({{"step", k}, {"t", t}, {"path", name}});
            };
        }
        const IntegrationReport rep = integrate(p0, curl_velocity(pot.psi), diffusivity(pot.phi),
                                                integration_params(c.integrate, t_max), brain, obs);
        const std::string fin = id + "_p_final.nii";
        atomic_write_nifti(rep.p, ctx.out / fin);

        json side = provenance(ctx, id);
        side["seeds"] = {{"job", s}, {"potentials", pp.seed}};
        side["sampled"] = {{"t_max", t_max}, {"steps", rep.steps}, {"dt", rep.dt},
                           {"max_clamp_excursion", rep.max_clamp_excursion}};
        side["params"] = {{"perlin", to_json(c)["perlin"]}, {"integrate", to_json(c)["integrate"]},
                          {"snapshot_every", every}};
        side["snapshots"] = snapshots;
        side["outputs"] = {{"p_final", fin}};
        write_json(ctx.out / (id + "_simulate.json"), side);
        out.rows[r] = {id, fin};
    });
    atomic_write(ctx.out / "simulate_manifest.csv", format_csv(out));
    return 0;
}

std::unique_ptr<Denoiser> make_denoiser(const DiffusionSection& d, const LatentTensor& anchor,
                                        const NoiseSchedule& s) {
    if (d.denoiser == "identity-eps") return std::make_unique<IdentityEpsDenoiser>(anchor, s);
    if (d.denoiser == "zero") return std::make_unique<ZeroDenoiser>();
    if (d.denoiser == "gaussian-oracle") {
        return gaussian_oracle_denoiser(anchor.values, std::vector<double>(anchor.size(), d.oracle_var), s);
    }
    throw ConfigError("unknown diffusion.denoiser: " + d.denoiser);
}

int cmd_reconstruct(const Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const fs::path& mpath = require_manifest(ctx);
    const fs::path base = mpath.parent_path();
    const CsvTable in = read_csv(mpath);
    const NoiseSchedule sched = linear_schedule(c.diffusion.T, c.diffusion.beta_1, c.diffusion.beta_T);
    const bool has_healthy = in.has("healthy_path");
    const std::uint64_t master = hash_values(c.seed, {c.diffusion.seed});

    CsvTable out{in.header, {}};
    out.header.push_back("recon_path");
    out.rows.resize(in.rows.size());
    run_jobs(in.rows.size(), ctx.workers, [&](std::size_t r) {
        const std::string id = in.get(r, "id");
        const std::size_t variant = in.has("variant") ? std::stoul(in.get(r, "variant")) : 0;
        const Volume3D x = read_nifti(resolve(base, in.get(r, "image_path")));
        const bool anchored = has_healthy && !in.get(r, "healthy_path").empty();
        IdentityCodec codec;
        const LatentTensor anchor =
            codec.encode(anchored ? read_nifti(resolve(base, in.get(r, "healthy_path"))) : x);
        const auto den = make_denoiser(c.diffusion, anchor, sched);
        const PooledConditionEncoder ce(c.diffusion.condition_pool, c.diffusion.condition_dim);
        const std::uint64_t s = job_seed(master, id, variant, kReconstructStream);
        Rng rng(s);
        const Volume3D rec = partial_reconstruct(x, codec, *den, ce, c.diffusion.T_int, sched, rng);

        const std::string name = id + "_v" + std::to_string(variant) + "_recon.nii";
        atomic_write_nifti(rec, ctx.out / name);
        json side = provenance(ctx, id);
        side["variant"] = variant;
        side["seeds"] = {{"job", s}};
        side["params"] = to_json(c)["diffusion"];
        side["anchor"] = anchored ? "healthy_path" : "image_path";
        side["outputs"] = {{"recon", name}};
        write_json(ctx.out / (id + "_v" + std::to_string(variant) + "_reconstruct.json"), side);

        std::vector<std::string> row;
        for (std::size_t k = 0; k < in.header.size(); ++k) {
            const std::string& cell = in.rows[r][k];
            const bool is_path = in.header[k].size() > 5 && in.header[k].ends_with("_path");
            row.push_back(is_path && !cell.empty() ? rel_to(resolve(base, cell), ctx.out) : cell);
        }
        row.push_back(name);
        out.rows[r] = std::move(row);
    });
    atomic_write(ctx.out / "recon_manifest.csv", format_csv(out));
    return 0;
}

struct DetectInputs {
    std::string id;
    fs::path original, recon;
    std::optional<fs::path> brain, prob;
};

std::vector<std::string> detect_one(const Context& ctx, const DetectInputs& in) {
    const RunConfig& c = ctx.cfg;
    const Volume3D x0 = read_nifti(in.original);
    const Volume3D xrec = read_nifti(in.recon);
    require_same_dims(x0.dims(), xrec.dims(), "detect original/reconstruction");
    const BinaryMask3D brain = in.brain ? read_mask(*in.brain) : brain_mask(x0, 0.0);
    const auto sim = make_similarity(c.detect.similarity);
    DetectParams dp;
    dp.shift.max_shift = c.detect.max_shift;
    dp.median_kernel = c.detect.median_kernel;
    dp.erosion_iters = c.detect.erosion_iters;
    const AnomalyMapResult res = anomaly_map(x0, xrec, brain, *sim, dp);
    const BinaryMask3D gt = in.prob ? threshold_mask(read_nifti(*in.prob), c.detect.gt_threshold) : BinaryMask3D(x0.dims());

    const std::string m = in.id + "_map.nii", g = in.id + "_gt.nii", e = in.id + "_evalmask.nii";
    atomic_write_nifti(res.map, ctx.out / m);
    atomic_write_nifti(to_volume(gt), ctx.out / g);
    atomic_write_nifti(to_volume(res.eroded_brain), ctx.out / e);
    json side = provenance(ctx, in.id);
    side["sampled"] = {{"shift", res.shift}};
    side["similarity"] = {{"name", sim->name()},
                          {"weight", res.similarity_weight},
                          {"note", "1-SSIM stands in for the LPIPS perceptual term"}};
    side["params"] = to_json(c)["detect"];
    side["outputs"] = {{"map", m}, {"gt", g}, {"mask", e}};
    write_json(ctx.out / (in.id + "_detect.json"), side);
    return {in.id, m, g, e};
}

int cmd_detect(const Context& ctx, const std::string& original, const std::string& recon, const std::string& mask,
               const std::string& prob, const std::string& id) {
    CsvTable out{{"id", "map_path", "gt_path", "mask_path"}, {}};
    if (!ctx.manifest) {
        if (original.empty() || recon.empty()) throw ConfigError("detect: give --manifest or --original and --recon");
        DetectInputs di{id, original, recon, std::nullopt, std::nullopt};
        if (!mask.empty()) di.brain = mask;
        if (!prob.empty()) di.prob = prob;
        out.rows.push_back(detect_one(ctx, di));
    } else {
        const fs::path base = ctx.manifest->parent_path();
        const CsvTable in = read_csv(*ctx.manifest);
        out.rows.resize(in.rows.size());
        run_jobs(in.rows.size(), ctx.workers, [&](std::size_t r) {
            DetectInputs di;
            di.id = in.get(r, "id") + (in.has("variant") ? "_v" + in.get(r, "variant") : "");
            di.original = resolve(base, in.get(r, "image_path"));
            di.recon = resolve(base, in.get(r, "recon_path"));
            if (in.has("brain_path") && !in.get(r, "brain_path").empty()) di.brain = resolve(base, in.get(r, "brain_path"));
            if (in.has("prob_path") && !in.get(r, "prob_path").empty()) di.prob = resolve(base, in.get(r, "prob_path"));
            out.rows[r] = detect_one(ctx, di);
        });
    }
    atomic_write(ctx.out / "detect_manifest.csv", format_csv(out));
    return 0;
}

int cmd_evaluate(const Context& ctx, const std::string& map_dir, const std::string& gt_dir,
                 const std::string& mask_dir) {
    struct Pair {
        std::string id;
        fs::path map, gt;
        std::optional<fs::path> mask;
    };
    std::vector<Pair> pairs;
    if (ctx.manifest) {
        const fs::path base = ctx.manifest->parent_path();
        const CsvTable in = read_csv(*ctx.manifest);
        for (std::size_t r = 0; r < in.rows.size(); ++r) {
            Pair p;
            p.map = resolve(base, in.get(r, "map_path"));
            p.gt = resolve(base, in.get(r, "gt_path"));
            if (in.has("mask_path") && !in.get(r, "mask_path").empty()) p.mask = resolve(base, in.get(r, "mask_path"));
            p.id = in.has("id") ? in.get(r, "id") : p.map.stem().string();
            pairs.push_back(std::move(p));
        }
    } else {
        if (map_dir.empty() || gt_dir.empty()) throw ConfigError("evaluate: give --manifest or --map-dir and --gt-dir");
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(map_dir)) {
            const std::string n = e.path().filename().string();
            if (e.is_regular_file() && (n.ends_with(".nii") || n.ends_with(".nii.gz")) && fs::exists(fs::path(gt_dir) / n)) {
                names.push_back(n);
            }
        }
        std::sort(names.begin(), names.end());
        if (names.empty()) throw std::runtime_error("evaluate: no map/gt file pairs found");
        for (const auto& n : names) {
            Pair p{n.substr(0, n.find('.')), fs::path(map_dir) / n, fs::path(gt_dir) / n, std::nullopt};
            if (!mask_dir.empty()) p.mask = fs::path(mask_dir) / n;
            pairs.push_back(std::move(p));
        }
    }

    std::vector<SampleResult> results(pairs.size());
    run_jobs(pairs.size(), ctx.workers, [&](std::size_t i) {
        const Pair& p = pairs[i];
        const Volume3D map = read_nifti(p.map);
        const BinaryMask3D gt = read_mask(p.gt);
        const BinaryMask3D mask = p.mask ? read_mask(*p.mask) : BinaryMask3D(map.dims(), true);
        results[i] = score_sample(p.id, map, gt, mask, ctx.cfg.metrics);
    });
    const MetricsReport rep = aggregate(results);

    CsvTable per{{"id", "Dice", "AP_pix", "AUC_pix", "FPR", "threshold", "included", "exclusion_reason"}, {}};
    json excluded = json::array();
    for (const auto& s : rep.samples) {
        if (s.score) {
            per.rows.push_back({s.id, num(s.score->dice_max), num(s.score->ap), num(s.score->auc), num(s.score->fpr),
                                num(s.score->best_threshold), "1", ""});
        } else {
            per.rows.push_back({s.id, "", "", "", "", "", "0", s.exclusion_reason});
            excluded.push_back({{"id", s.id}, {"reason", s.exclusion_reason}});
        }
    }
    atomic_write(ctx.out / "per_sample.csv", format_csv(per));

    json agg;
    auto field = [&](double SampleScore::*m) { return rep.mean ? json((*rep.mean).*m) : json(nullptr); };
    agg["Dice"] = field(&SampleScore::dice_max);
    agg["AP_pix"] = field(&SampleScore::ap);
    agg["AUC_pix"] = field(&SampleScore::auc);
    agg["FPR"] = field(&SampleScore::fpr);
    agg["n_included"] = rep.included;
    agg["n_excluded"] = rep.excluded;
    agg["excluded"] = excluded;
    agg["metrics"] = to_json(ctx.cfg)["metrics"];
    write_json(ctx.out / "aggregate.json", agg);
    return 0;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return parse_config(json::object());
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

void print_error(const std::string& command, const std::string& type, const std::string& message) {
    json e = {{"error", {{"command", command}, {"type", type}, {"message", message}}}};
    std::cerr << e.dump() << std::endl;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"anomforge: synthetic anomaly encoding and diffusion-based detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    struct Common {
        std::string config, out, manifest;
        std::optional<std::uint64_t> seed;
        unsigned workers = 1;
    } common;
    auto add_common = [&](CLI::App* sub, bool needs_manifest) {
        sub->add_option("--config", common.config, "JSON run configuration")->envname("ANOMFORGE_CONFIG");
        sub->add_option("--seed", common.seed, "master seed (overrides config)")->envname("ANOMFORGE_SEED");
        sub->add_option("--out", common.out, "output directory")->envname("ANOMFORGE_OUT")->required();
        sub->add_option("--workers", common.workers, "parallel jobs")->envname("ANOMFORGE_WORKERS")
            ->check(CLI::PositiveNumber);
        auto* m = sub->add_option("--manifest", common.manifest, "input manifest CSV")->envname("ANOMFORGE_MANIFEST");
        if (needs_manifest) m->required();
    };

    auto* phantom = app.add_subcommand("phantom", "generate phantoms, lesion seeds and masks");
    add_common(phantom, false);
    auto* corrupt = app.add_subcommand("corrupt", "encode pseudo-pathologies into a share of a manifest");
    add_common(corrupt, true);
    auto* simulate = app.add_subcommand("simulate", "randomize lesion probability fields");
    add_common(simulate, true);
    std::size_t every = 0;
    simulate->add_option("--snapshot-every", every, "write P every N steps (0: final only)");
    auto* reconstruct = app.add_subcommand("reconstruct", "partial-noising pseudo-healthy reconstruction");
    add_common(reconstruct, true);
    auto* detect = app.add_subcommand("detect", "anomaly maps from input/reconstruction pairs");
    add_common(detect, false);
    std::string original, recon, mask, prob, id = "sample";
    detect->add_option("--original", original, "input NIfTI (single-pair mode)");
    detect->add_option("--recon", recon, "reconstruction NIfTI (single-pair mode)");
    detect->add_option("--mask", mask, "brain mask NIfTI (single-pair mode)");
    detect->add_option("--prob", prob, "P_final NIfTI for the ground truth (single-pair mode)");
    detect->add_option("--id", id, "sample id (single-pair mode)");
    auto* evaluate = app.add_subcommand("evaluate", "voxel-level metrics");
    add_common(evaluate, false);
    std::string map_dir, gt_dir, mask_dir;
    evaluate->add_option("--map-dir", map_dir, "directory of anomaly maps");
    evaluate->add_option("--gt-dir", gt_dir, "directory of ground-truth masks with matching names");
    evaluate->add_option("--mask-dir", mask_dir, "optional evaluation masks with matching names");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    std::string command = "anomforge";
    try {
        app.parse(rev);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error(command, "usage", e.what());
        return 2;
    }

    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    try {
        Context ctx;
        ctx.command = command;
        ctx.cfg = load_config(common.config);
        if (common.seed) ctx.cfg.seed = *common.seed;
        ctx.out = common.out;
        ctx.workers = common.workers;
        if (!common.manifest.empty()) ctx.manifest = fs::path(common.manifest);
        fs::create_directories(ctx.out);
        write_json(ctx.out / "resolved_config.json", to_json(ctx.cfg));
        if (ctx.workers > 1) set_internal_threads(1);

        if (command == "phantom") return cmd_phantom(ctx);
        if (command == "corrupt") return cmd_corrupt(ctx);
        if (command == "simulate") return cmd_simulate(ctx, every);
        if (command == "reconstruct") return cmd_reconstruct(ctx);
        if (command == "detect") return cmd_detect(ctx, original, recon, mask, prob, id);
        if (command == "evaluate") return cmd_evaluate(ctx, map_dir, gt_dir, mask_dir);
        throw std::logic_error("unhandled subcommand " + command);
    } catch (const ConfigError& e) {
        print_error(command, "config", e.what());
    } catch (const NiftiError& e) {
        print_error(command, "input", e.what());
    } catch (const fs::filesystem_error& e) {
        print_error(command, "io", e.what());
    } catch (const std::invalid_argument& e) {
        print_error(command, "invalid_argument", e.what());
    } catch (const std::exception& e) {
        print_error(command, "runtime", e.what());
    }
    return 1;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

}  // namespace anomforge::cli
