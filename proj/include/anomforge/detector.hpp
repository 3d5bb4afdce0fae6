#pragma once

#include <memory>
#include <string>

#include "anomforge/volume.hpp"

namespace anomforge {

struct ShiftSearchParams {
    unsigned max_shift = 2;
};

// Whole-volume dissimilarity in [0, 1]; evaluate(x, x, mask) == 0.
class SimilarityFunctional {
  public:
    virtual ~SimilarityFunctional() = default;
    virtual double evaluate(const Volume3D& a, const Volume3D& b, const BinaryMask3D& mask) const = 0;
    virtual std::string name() const = 0;
};

struct SsimParams {
    int window = 7;         // Gaussian window edge length
    double sigma = 1.5;
    double data_range = 1.0;
    double k1 = 0.01;
    double k2 = 0.03;
};

// Mean local SSIM over mask voxels. Local statistics use a separable Gaussian
// window with edge replication.
double mean_ssim(const Volume3D& a, const Volume3D& b, const BinaryMask3D& mask, const SsimParams& p = {});

// 1 - mean SSIM, clamped to [0, 1].
double default_similarity(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& mask,
                          const SsimParams& p = {});

class SsimDissimilarity final : public SimilarityFunctional {
  public:
    explicit SsimDissimilarity(SsimParams p = {}) : params_(p) {}
    double evaluate(const Volume3D& a, const Volume3D& b, const BinaryMask3D& mask) const override;
    std::string name() const override { return "1-ssim"; }

  private:
    SsimParams params_;
};

// Always returns the same weight; with 1.0 the map is the plain residual.
class ConstantSimilarity final : public SimilarityFunctional {
  public:
    explicit ConstantSimilarity(double value = 1.0);
    double evaluate(const Volume3D&, const Volume3D&, const BinaryMask3D&) const override { return value_; }
    std::string name() const override { return "constant"; }

  private:
    double value_;
};

std::unique_ptr<SimilarityFunctional> make_similarity(const std::string& name);

struct AlignmentResult {
    Volume3D aligned;
    Offset3 shift{0, 0, 0};
    double cost = 0.0;  // in-mask mean absolute difference at the chosen shift
};

// Exhaustive search over integer translations of xrec within +/- max_shift.
// aligned = translate(xrec, shift), vacated voxels zero. Ties go to the
// smaller L1 norm, then lexicographic (x, y, z) order.
AlignmentResult shift_align(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& mask,
                            const ShiftSearchParams& p = {});

struct DetectParams {
    ShiftSearchParams shift;
    int median_kernel = 5;
    unsigned erosion_iters = 6;
};

struct AnomalyMapResult {
    Volume3D map;  // values in [0, 1], zero outside the eroded brain
    Offset3 shift{0, 0, 0};
    double similarity_weight = 0.0;
    BinaryMask3D eroded_brain;
};

// shift_align -> |x0 - aligned| * weight -> min-max over brain -> median
// filter -> zero outside erode(brain, erosion_iters).
AnomalyMapResult anomaly_map(const Volume3D& x0, const Volume3D& xrec, const BinaryMask3D& brain,
                             const SimilarityFunctional& sim, const DetectParams& p = {});

}  // namespace anomforge
