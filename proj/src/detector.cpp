#include "anomforge/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "anomforge/filters.hpp"
#include "anomforge/parallel.hpp"

namespace anomforge {

double mean_ssim(const Volume3D& a, const Volume3D& b, const BinaryMask3D& mask, const SsimParams& p) {
    require_same_dims(a.dims(), b.dims(), "ssim inputs");
    require_same_dims(a.dims(), mask.dims(), "ssim mask");
    if (p.window < 1 || p.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
    const std::size_t n = mask.count();
    if (n == 0) throw std::invalid_argument("ssim: empty mask");

    const auto taps = gaussian_kernel(p.sigma, p.window / 2);
    Volume3D aa(a.dims(), a.spacing()), bb(a.dims(), a.spacing()), ab(a.dims(), a.spacing());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const Volume3D mu_a = separable_filter(a, taps);
    const Volume3D mu_b = separable_filter(b, taps);
    const Volume3D e_aa = separable_filter(aa, taps);
    const Volume3D e_bb = separable_filter(bb, taps);
    const Volume3D e_ab = separable_filter(ab, taps);

    const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
    const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!mask[i]) continue;
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = std::max(0.0, e_aa[i] - ma * ma);
        const double vb = std::max(0.0, e_bb[i] - mb * mb);
        const double cov = e_ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return sum / static_cast<double>(n);
}

double default_similarity(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& mask, const SsimParams& p) {
    return std::clamp(1.0 - mean_ssim(x0, xrec, mask, p), 0.0, 1.0);
}

double SsimDissimilarity::evaluate(const Volume3D& a, const Volume3D& b, const BinaryMask3D& mask) const {
    return default_similarity(a, b, mask, params_);
}

ConstantSimilarity::ConstantSimilarity(double value) : value_(value) {
    if (value < 0.0 || value > 1.0) throw std::invalid_argument("constant similarity must lie in [0, 1]");
}

std::unique_ptr<SimilarityFunctional> make_similarity(const std::string& name) {
    if (name == "ssim" || name == "1-ssim") return std::make_unique<SsimDissimilarity>();
    if (name == "constant") return std::make_unique<ConstantSimilarity>(1.0);
    throw std::invalid_argument("unknown similarity functional: " + name);
}

AlignmentResult shift_align(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& mask,
                            const ShiftSearchParams& p) {
    require_same_dims(x0.dims(), xrec.dims(), "shift_align inputs");
    require_same_dims(x0.dims(), mask.dims(), "shift_align mask");
    const Dims& d = x0.dims();
    if (p.max_shift > std::min({d.nx, d.ny, d.nz}) / 4) {
        throw std::invalid_argument("shift_align: max_shift exceeds a quarter of the smallest dimension");
    }

    const auto m = static_cast<std::ptrdiff_t>(p.max_shift);
    std::vector<Offset3> shifts;
    for (std::ptrdiff_t sx = -m; sx <= m; ++sx)
        for (std::ptrdiff_t sy = -m; sy <= m; ++sy)
            for (std::ptrdiff_t sz = -m; sz <= m; ++sz) shifts.push_back({sx, sy, sz});
    auto l1 = [](const Offset3& s) { return std::abs(s[0]) + std::abs(s[1]) + std::abs(s[2]); };
    std::stable_sort(shifts.begin(), shifts.end(), [&](const Offset3& a, const Offset3& b) {
        if (l1(a) != l1(b)) return l1(a) < l1(b);
        return a < b;
    });

    std::vector<std::size_t> in_mask;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) in_mask.push_back(i);
    }

    std::vector<double> cost(shifts.size(), 0.0);
    const auto nx = static_cast<std::ptrdiff_t>(d.nx);
    const auto ny = static_cast<std::ptrdiff_t>(d.ny);
    parallel_for(0, shifts.size(), [&](std::size_t k) {
        const Offset3& s = shifts[k];
        double acc = 0.0;
        for (std::size_t i : in_mask) {
            const auto ii = static_cast<std::ptrdiff_t>(i);
            const std::ptrdiff_t x = ii % nx, y = (ii / nx) % ny, z = ii / (nx * ny);
            const std::ptrdiff_t sx = x - s[0], sy = y - s[1], sz = z - s[2];
            const double r = xrec.in_bounds(sx, sy, sz) ? xrec[static_cast<std::size_t>(sx + nx * (sy + ny * sz))] : 0.0;
            acc += std::fabs(x0[i] - r);
        }
        cost[k] = in_mask.empty() ? 0.0 : acc / static_cast<double>(in_mask.size());
    });

    std::size_t best = 0;
    for (std::size_t k = 1; k < shifts.size(); ++k) {
        if (cost[k] < cost[best]) best = k;
    }
    return {translate(xrec, shifts[best]), shifts[best], cost[best]};
}

AnomalyMapResult anomaly_map(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& brain,
                             const SimilarityFunctional& sim, const DetectParams& p) {
    require_same_dims(x0.dims(), xrec.dims(), "anomaly_map inputs");
    require_same_dims(x0.dims(), brain.dims(), "anomaly_map brain");
    AlignmentResult al = shift_align(x0, xrec, brain, p.shift);
    const double weight = brain.empty() ? 0.0 : sim.evaluate(x0, al.aligned, brain);

    Volume3D residual(x0.dims(), x0.spacing());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = std::fabs(x0[i] - al.aligned[i]) * weight;

    Volume3D map = median_filter(minmax_normalize_masked(residual, brain), p.median_kernel);
    BinaryMask3D eroded = erode(brain, p.erosion_iters);
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!eroded[i]) map[i] = 0.0;
    }
    return {std::move(map), al.shift, weight, std::move(eroded)};
}

}  // namespace anomforge
