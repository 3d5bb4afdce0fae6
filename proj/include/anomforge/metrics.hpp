#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "anomforge/volume.hpp"

namespace anomforge {

// Raised when the ground truth lacks the positives/negatives a metric needs.
class DegenerateSample : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SampleScore {
    double dice_max = 0.0;
    double ap = 0.0;
    double auc = 0.0;
    double fpr = 0.0;
    double best_threshold = 0.0;
};

struct ThresholdParams {
    std::size_t n_thresholds = 256;  // uniform grid over [0, 1] inclusive
    std::size_t max_distinct = 4096; // distinct map values added when at most this many
};

struct DiceResult {
    double dice_max = 0.0;
    double best_threshold = 0.0;
};

// Scores and labels restricted to the evaluation mask, in voxel order.
struct ScoredVoxels {
    std::vector<double> scores;
    std::vector<bool> labels;

    std::size_t positives() const;
    std::size_t negatives() const { return labels.size() - positives(); }
};

ScoredVoxels gather(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask);

// Mann-Whitney AUC with midranks.
double pixel_auc(std::span<const double> scores, const std::vector<bool>& labels);
// Sum over tie groups (descending) of precision * delta-recall.
double average_precision(std::span<const double> scores, const std::vector<bool>& labels);
// Prediction is score > threshold. Ties in Dice keep the lowest threshold.
DiceResult max_dice(std::span<const double> scores, const std::vector<bool>& labels, const ThresholdParams& p = {});
// FP / (FP + TN) after binarizing at threshold.
double false_positive_rate(std::span<const double> scores, const std::vector<bool>& labels, double threshold);

double pixel_auc(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask);
double average_precision(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask);
DiceResult max_dice(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                    const ThresholdParams& p = {});
double fpr_at_max_dice(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                       const ThresholdParams& p = {});

// Thresholds considered by max_dice, ascending and de-duplicated.
std::vector<double> candidate_thresholds(std::span<const double> scores, const ThresholdParams& p = {});

struct SampleResult {
    std::string id;
    std::optional<SampleScore> score;
    std::string exclusion_reason;  // set when score is empty
};

SampleResult score_sample(std::string id, const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                          const ThresholdParams& p = {});

struct MetricsReport {
    std::vector<SampleResult> samples;
    std::size_t included = 0;
    std::size_t excluded = 0;
    std::optional<SampleScore> mean;  // empty when nothing was included; best_threshold is averaged too
};

// Arithmetic means over included samples. Throws on empty input.
MetricsReport aggregate(std::vector<SampleResult> samples);

}  // namespace anomforge
