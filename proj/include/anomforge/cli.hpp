#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "anomforge/detector.hpp"
#include "anomforge/encoder.hpp"
#include "anomforge/fluid.hpp"
#include "anomforge/metrics.hpp"

#include <json.hpp>

namespace anomforge::cli {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct VolumeSection {
    Dims dims{64, 64, 64};
    double gray = 0.4;
    double white = 0.8;
    double ventricle = 0.15;
    int smoothness = 1;
    std::size_t count = 10;      // phantoms emitted by `phantom`
    double lesion_radius = 6.0;
    unsigned lesion_margin = 8;  // lesion centre must fit in erode(brain, margin)
};

struct IntegrateSection {
    double t_max = 4.0;          // upper bound of the per-volume draw, or the fixed value
    bool sample_t_max = true;    // t_max ~ U[0, t_max] per variant
    bool auto_dt = true;
    std::optional<double> dt;
    double safety = 0.9;
};

struct DeltaSection {
    double flip_probability = 0.2;
    bool clamp = true;
    unsigned max_jitter = 2;     // per-axis integer jitter drawn from [-max_jitter, max_jitter]
    std::string mu_w_source = "heuristic";  // or "wm_mask"
};

struct DiffusionSection {
    std::size_t T = 1000;
    double beta_1 = 0.0015;
    double beta_T = 0.0195;
    std::size_t T_int = 250;
    std::uint64_t seed = 0;
    std::string denoiser = "identity-eps";  // identity-eps | gaussian-oracle | zero
    std::string condition_encoder = "pooled";
    std::array<std::size_t, 3> condition_pool{8, 8, 8};
    std::size_t condition_dim = 1280;
    double oracle_var = 1e-4;
};

struct DetectSection {
    unsigned max_shift = 2;
    int median_kernel = 5;
    unsigned erosion_iters = 6;
    std::string similarity = "1-ssim";
    double gt_threshold = 0.5;
};

struct RunConfig {
    std::uint64_t seed = 0;
    double corruption_fraction = 0.8;
    std::size_t variants_per_sample = 8;
    VolumeSection volume;
    PotentialParams perlin;
    IntegrateSection integrate;
    DeltaSection delta;
    DiffusionSection diffusion;
    DetectSection detect;
    ThresholdParams metrics;
};

// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

// The corrupted subset: ids ordered by hash(seed, id), first
// round(fraction * n) taken. Independent of input order.
std::vector<std::string> select_for_corruption(const std::vector<std::string>& ids, std::uint64_t seed,
                                               double fraction);

std::uint64_t job_seed(std::uint64_t master, const std::string& id, std::uint64_t variant, std::uint64_t stream);

// Minimal CSV with a header row; no quoting.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    const std::string& get(std::size_t row, const std::string& name) const;
    bool has(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& t);

// Writes to a temporary sibling then renames over the destination.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);
void atomic_write_nifti(const Volume3D& vol, const std::filesystem::path& path);

// Entry point shared by the executable and in-process tests. Returns the exit
// status; failures print a JSON error object to stderr.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace anomforge::cli
