#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "anomforge/cli.hpp"
#include "anomforge/nifti.hpp"
#include "anomforge/rng.hpp"

namespace anomforge::cli {

using nlohmann::json;

namespace {

bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

class Section {
  public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected a JSON object");
    }

    template <class T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        const json& v = *it;
        auto fail = [&](const char* want) { throw ConfigError(path(key) + ": expected " + want); };
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail("a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail("a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) fail("a number");
            out = v.get<double>();
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (v.is_null()) {
                out.reset();
            } else {
                if (!v.is_number()) fail("a number or null");
                out = v.get<double>();
            }
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!non_negative_integer(v)) fail("a non-negative integer");
            out = v.get<T>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail("an integer");
            out = v.get<T>();
        } else {
            // fixed-length arrays of unsigned integers
            if (!v.is_array() || v.size() != out.size()) fail("an array of 3 non-negative integers");
            for (std::size_t k = 0; k < out.size(); ++k) {
                if (!non_negative_integer(v[k])) fail("an array of 3 non-negative integers");
                out[k] = v[k].get<typename T::value_type>();
            }
        }
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown config key: " + path(k));
        }
    }

    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

RunConfig parse_config(const json& j) {
    RunConfig c;
    Section root(j, "");
    root.read("seed", c.seed);
    root.read("corruption_fraction", c.corruption_fraction);
    root.read("variants_per_sample", c.variants_per_sample);

    if (const json* s = root.child("volume")) {
        Section sec(*s, "volume");
        std::array<std::size_t, 3> dims{c.volume.dims.nx, c.volume.dims.ny, c.volume.dims.nz};
        sec.read("dims", dims);
        c.volume.dims = {dims[0], dims[1], dims[2]};
        sec.read("gray", c.volume.gray);
        sec.read("white", c.volume.white);
        sec.read("ventricle", c.volume.ventricle);
        sec.read("smoothness", c.volume.smoothness);
        sec.read("count", c.volume.count);
        sec.read("lesion_radius", c.volume.lesion_radius);
        sec.read("lesion_margin", c.volume.lesion_margin);
        sec.finish();
    }
    if (const json* s = root.child("perlin")) {
        Section sec(*s, "perlin");
        sec.read("seed", c.perlin.seed);
        sec.read("octaves", c.perlin.octaves);
        sec.read("base_frequency", c.perlin.base_frequency);
        sec.read("persistence", c.perlin.persistence);
        sec.read("amplitude_v", c.perlin.amplitude_v);
        sec.read("amplitude_d", c.perlin.amplitude_d);
        sec.finish();
    }
    if (const json* s = root.child("integrate")) {
        Section sec(*s, "integrate");
        sec.read("t_max", c.integrate.t_max);
        sec.read("sample_t_max", c.integrate.sample_t_max);
        sec.read("auto_dt", c.integrate.auto_dt);
        sec.read("dt", c.integrate.dt);
        sec.read("safety", c.integrate.safety);
        sec.finish();
    }
    if (const json* s = root.child("delta")) {
        Section sec(*s, "delta");
        sec.read("flip_probability", c.delta.flip_probability);
        sec.read("clamp", c.delta.clamp);
        sec.read("max_jitter", c.delta.max_jitter);
        sec.read("mu_w_source", c.delta.mu_w_source);
        sec.finish();
    }
    if (const json* s = root.child("diffusion")) {
        Section sec(*s, "diffusion");
        sec.read("T", c.diffusion.T);
        sec.read("beta_1", c.diffusion.beta_1);
        sec.read("beta_T", c.diffusion.beta_T);
        sec.read("T_int", c.diffusion.T_int);
        sec.read("seed", c.diffusion.seed);
        sec.read("denoiser", c.diffusion.denoiser);
        sec.read("condition_encoder", c.diffusion.condition_encoder);
        sec.read("condition_pool", c.diffusion.condition_pool);
        sec.read("condition_dim", c.diffusion.condition_dim);
        sec.read("oracle_var", c.diffusion.oracle_var);
        sec.finish();
    }
    if (const json* s = root.child("detect")) {
        Section sec(*s, "detect");
        sec.read("max_shift", c.detect.max_shift);
        sec.read("median_kernel", c.detect.median_kernel);
        sec.read("erosion_iters", c.detect.erosion_iters);
        sec.read("similarity", c.detect.similarity);
        sec.read("gt_threshold", c.detect.gt_threshold);
        sec.finish();
    }
    if (const json* s = root.child("metrics")) {
        Section sec(*s, "metrics");
        sec.read("n_thresholds", c.metrics.n_thresholds);
        sec.read("max_distinct", c.metrics.max_distinct);
        sec.finish();
    }
    root.finish();

    require(c.corruption_fraction >= 0.0 && c.corruption_fraction <= 1.0, "corruption_fraction must lie in [0, 1]");
    require(c.variants_per_sample >= 1, "variants_per_sample must be >= 1");
    require(c.volume.dims.nx >= 16 && c.volume.dims.ny >= 16 && c.volume.dims.nz >= 16,
            "volume.dims must be >= 16 per axis");
    for (double v : {c.volume.gray, c.volume.white, c.volume.ventricle}) {
        require(v >= 0.0 && v <= 1.0, "volume intensities must lie in [0, 1]");
    }
    require(c.volume.smoothness >= 0, "volume.smoothness must be >= 0");
    require(c.volume.lesion_radius >= 1.0, "volume.lesion_radius must be >= 1");
    require(c.perlin.octaves >= 1, "perlin.octaves must be >= 1");
    require(c.perlin.base_frequency > 0.0, "perlin.base_frequency must be > 0");
    require(c.perlin.amplitude_v >= 0.0 && c.perlin.amplitude_d >= 0.0, "perlin amplitudes must be >= 0");
    require(c.integrate.t_max >= 0.0 && std::isfinite(c.integrate.t_max), "integrate.t_max must be >= 0");
    require(c.integrate.safety > 0.0 && c.integrate.safety <= 1.0, "integrate.safety must lie in (0, 1]");
    require(c.integrate.auto_dt || c.integrate.dt.has_value(), "integrate.dt is required when auto_dt is false");
    require(!c.integrate.dt || *c.integrate.dt > 0.0, "integrate.dt must be > 0");
    require(c.delta.flip_probability >= 0.0 && c.delta.flip_probability <= 1.0,
            "delta.flip_probability must lie in [0, 1]");
    require(c.delta.mu_w_source == "heuristic" || c.delta.mu_w_source == "wm_mask",
            "delta.mu_w_source must be \"heuristic\" or \"wm_mask\"");
    require(c.diffusion.T >= 1 && c.diffusion.T_int <= c.diffusion.T, "diffusion.T_int must lie in [0, T]");
    require(c.diffusion.beta_1 > 0.0 && c.diffusion.beta_T < 1.0 && c.diffusion.beta_1 <= c.diffusion.beta_T,
            "diffusion betas must satisfy 0 < beta_1 <= beta_T < 1");
    require(c.diffusion.denoiser == "identity-eps" || c.diffusion.denoiser == "gaussian-oracle" ||
                c.diffusion.denoiser == "zero",
            "unknown diffusion.denoiser: " + c.diffusion.denoiser);
    require(c.diffusion.condition_encoder == "pooled",
            "unknown diffusion.condition_encoder: " + c.diffusion.condition_encoder);
    require(c.diffusion.oracle_var > 0.0, "diffusion.oracle_var must be > 0");
    const auto& pool = c.diffusion.condition_pool;
    require(pool[0] >= 1 && pool[1] >= 1 && pool[2] >= 1 && pool[0] * pool[1] * pool[2] <= c.diffusion.condition_dim,
            "diffusion.condition_pool must be positive with product <= condition_dim");
    require(c.detect.median_kernel >= 1 && c.detect.median_kernel % 2 == 1, "detect.median_kernel must be odd");
    require(c.detect.similarity == "1-ssim" || c.detect.similarity == "ssim" || c.detect.similarity == "constant",
            "unknown detect.similarity: " + c.detect.similarity);
    require(c.metrics.n_thresholds >= 1, "metrics.n_thresholds must be >= 1");
    return c;
}

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["corruption_fraction"] = c.corruption_fraction;
    j["variants_per_sample"] = c.variants_per_sample;
    j["volume"] = {{"dims", {c.volume.dims.nx, c.volume.dims.ny, c.volume.dims.nz}},
                   {"gray", c.volume.gray},
                   {"white", c.volume.white},
                   {"ventricle", c.volume.ventricle},
                   {"smoothness", c.volume.smoothness},
                   {"count", c.volume.count},
                   {"lesion_radius", c.volume.lesion_radius},
                   {"lesion_margin", c.volume.lesion_margin}};
    j["perlin"] = {{"seed", c.perlin.seed},
                   {"octaves", c.perlin.octaves},
                   {"base_frequency", c.perlin.base_frequency},
                   {"persistence", c.perlin.persistence},
                   {"amplitude_v", c.perlin.amplitude_v},
                   {"amplitude_d", c.perlin.amplitude_d}};
    j["integrate"] = {{"t_max", c.integrate.t_max},
                      {"sample_t_max", c.integrate.sample_t_max},
                      {"auto_dt", c.integrate.auto_dt},
                      {"dt", c.integrate.dt ? json(*c.integrate.dt) : json(nullptr)},
                      {"safety", c.integrate.safety}};
    j["delta"] = {{"flip_probability", c.delta.flip_probability},
                  {"clamp", c.delta.clamp},
                  {"max_jitter", c.delta.max_jitter},
                  {"mu_w_source", c.delta.mu_w_source}};
    j["diffusion"] = {{"T", c.diffusion.T},
                      {"beta_1", c.diffusion.beta_1},
                      {"beta_T", c.diffusion.beta_T},
                      {"T_int", c.diffusion.T_int},
                      {"seed", c.diffusion.seed},
                      {"denoiser", c.diffusion.denoiser},
                      {"condition_encoder", c.diffusion.condition_encoder},
                      {"condition_pool", c.diffusion.condition_pool},
                      {"condition_dim", c.diffusion.condition_dim},
                      {"oracle_var", c.diffusion.oracle_var}};
    j["detect"] = {{"max_shift", c.detect.max_shift},
                   {"median_kernel", c.detect.median_kernel},
                   {"erosion_iters", c.detect.erosion_iters},
                   {"similarity", c.detect.similarity},
                   {"gt_threshold", c.detect.gt_threshold}};
    j["metrics"] = {{"n_thresholds", c.metrics.n_thresholds}, {"max_distinct", c.metrics.max_distinct}};
    return j;
}

std::uint64_t job_seed(std::uint64_t master, const std::string& id, std::uint64_t variant, std::uint64_t stream) {
    return hash_values(master, {hash_string(id), variant, stream});
}

std::vector<std::string> select_for_corruption(const std::vector<std::string>& ids, std::uint64_t seed,
                                               double fraction) {
    if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("corruption fraction must lie in [0, 1]");
    std::vector<std::pair<std::uint64_t, std::string>> keyed;
    for (const auto& id : ids) keyed.emplace_back(hash_values(seed, {hash_string(id), 0xc0}), id);
    std::sort(keyed.begin(), keyed.end());
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < take; ++i) out.push_back(keyed[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("manifest lacks column: " + name);
    return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

const std::string& CsvTable::get(std::size_t row, const std::string& name) const { return rows.at(row).at(column(name)); }

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw std::runtime_error("manifest row has " + std::to_string(cells.size()) + " cells, header has " +
                                     std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (first) throw std::runtime_error("empty manifest: " + path.string());
    return t;
}

std::string format_csv(const CsvTable& t) {
    auto join = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) s += ',';
            s += cells[i];
        }
        return s + '\n';
    };
    std::string out = join(t.header);
    for (const auto& r : t.rows) out += join(r);
    return out;
}

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
    return path.parent_path() / (".tmp." + path.filename().string());
}

}  // namespace

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void atomic_write_nifti(const Volume3D& vol, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = temp_sibling(path);
    write_nifti(vol, tmp);
    std::filesystem::rename(tmp, path);
}

}  // namespace anomforge::cli
