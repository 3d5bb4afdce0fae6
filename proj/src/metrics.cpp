#include "anomforge/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace anomforge {

namespace {

void check_sizes(std::span<const double> scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("metrics: score/label count mismatch");
}

std::size_t count_pos(const std::vector<bool>& labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    return idx;
}

}  // namespace

std::size_t ScoredVoxels::positives() const { return count_pos(labels); }

ScoredVoxels gather(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask) {
    require_same_dims(map.dims(), gt.dims(), "metrics gt");
    require_same_dims(map.dims(), eval_mask.dims(), "metrics eval mask");
    ScoredVoxels out;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!eval_mask[i]) continue;
        out.scores.push_back(map[i]);
        out.labels.push_back(gt[i]);
    }
    return out;
}

double pixel_auc(std::span<const double> scores, const std::vector<bool>& labels) {
    check_sizes(scores, labels);
    const std::size_t np = count_pos(labels);
    const std::size_t nn = labels.size() - np;
    if (np == 0 || nn == 0) throw DegenerateSample("AUC needs at least one positive and one negative voxel");

    // Doubled midranks keep the statistic integral: U2 = 2 * U.
    const auto idx = order_by_score(scores, false);
    std::int64_t rank2_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const auto doubled_midrank = static_cast<std::int64_t>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]]) rank2_pos += doubled_midrank;
        }
        i = j;
    }
    const auto npi = static_cast<std::int64_t>(np);
    const std::int64_t u2 = rank2_pos - npi * (npi + 1);
    return static_cast<double>(u2) / static_cast<double>(2 * npi * static_cast<std::int64_t>(nn));
}

double average_precision(std::span<const double> scores, const std::vector<bool>& labels) {
    check_sizes(scores, labels);
    const std::size_t np = count_pos(labels);
    if (np == 0) throw DegenerateSample("AP needs at least one positive voxel");
    const auto idx = order_by_score(scores, true);
    std::size_t tp = 0, fp = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        std::size_t pos_group = 0;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            if (labels[idx[j]]) ++pos_group;
            ++j;
        }
        tp += pos_group;
        fp += (j - i) - pos_group;
        if (pos_group > 0) {
            ap += (static_cast<double>(tp) / static_cast<double>(tp + fp)) * static_cast<double>(pos_group);
        }
        i = j;
    }
    return ap / static_cast<double>(np);
}

std::vector<double> candidate_thresholds(std::span<const double> scores, const ThresholdParams& p) {
    std::vector<double> thr;
    if (p.n_thresholds == 1) {
        thr.push_back(0.0);
    } else {
        for (std::size_t k = 0; k < p.n_thresholds; ++k) {
            thr.push_back(static_cast<double>(k) / static_cast<double>(p.n_thresholds - 1));
        }
    }
    std::vector<double> distinct(scores.begin(), scores.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() <= p.max_distinct) thr.insert(thr.end(), distinct.begin(), distinct.end());
    std::sort(thr.begin(), thr.end());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
    return thr;
}

DiceResult max_dice(std::span<const double> scores, const std::vector<bool>& labels, const ThresholdParams& p) {
    check_sizes(scores, labels);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
    if (pos.empty()) throw DegenerateSample("Dice needs at least one positive voxel");
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    auto above = [](const std::vector<double>& v, double t) {
        return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), t));
    };

    DiceResult best{-1.0, 0.0};
    for (double t : candidate_thresholds(scores, p)) {
        const std::size_t tp = above(pos, t);
        const std::size_t fp = above(neg, t);
        const std::size_t fn = pos.size() - tp;
        const double dice = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
        if (dice > best.dice_max) best = {dice, t};
    }
    return best;
}

double false_positive_rate(std::span<const double> scores, const std::vector<bool>& labels, double threshold) {
    check_sizes(scores, labels);
    std::size_t fp = 0, nn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i]) continue;
        ++nn;
        if (scores[i] > threshold) ++fp;
    }
    if (nn == 0) throw DegenerateSample("FPR needs at least one negative voxel");
    return static_cast<double>(fp) / static_cast<double>(nn);
}

double pixel_auc(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask) {
    const auto sv = gather(map, gt, eval_mask);
    return pixel_auc(sv.scores, sv.labels);
}

double average_precision(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask) {
    const auto sv = gather(map, gt, eval_mask);
    return average_precision(sv.scores, sv.labels);
}

DiceResult max_dice(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                    const ThresholdParams& p) {
    const auto sv = gather(map, gt, eval_mask);
    return max_dice(sv.scores, sv.labels, p);
}

double fpr_at_max_dice(const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                       const ThresholdParams& p) {
    const auto sv = gather(map, gt, eval_mask);
    return false_positive_rate(sv.scores, sv.labels, max_dice(sv.scores, sv.labels, p).best_threshold);
}

SampleResult score_sample(std::string id, const Volume3D& map, const BinaryMask3D& gt, const BinaryMask3D& eval_mask,
                          const ThresholdParams& p) {
    SampleResult out{std::move(id), std::nullopt, {}};
    const auto sv = gather(map, gt, eval_mask);
    const std::size_t np = sv.positives();
    if (np == 0) {
        out.exclusion_reason = "empty ground truth within evaluation mask";
        return out;
    }
    if (np == sv.labels.size()) {
        out.exclusion_reason = "no negative voxels within evaluation mask";
        return out;
    }
    SampleScore s;
    const DiceResult dice = max_dice(sv.scores, sv.labels, p);
    s.dice_max = dice.dice_max;
    s.best_threshold = dice.best_threshold;
    s.ap = average_precision(sv.scores, sv.labels);
    s.auc = pixel_auc(sv.scores, sv.labels);
    s.fpr = false_positive_rate(sv.scores, sv.labels, dice.best_threshold);
    out.score = s;
    return out;
}

MetricsReport aggregate(std::vector<SampleResult> samples) {
    if (samples.empty()) throw std::invalid_argument("aggregate: no samples");
    MetricsReport rep;
    SampleScore sum;
    for (const auto& s : samples) {
        if (!s.score) {
            ++rep.excluded;
            continue;
        }
        ++rep.included;
        sum.dice_max += s.score->dice_max;
        sum.ap += s.score->ap;
        sum.auc += s.score->auc;
        sum.fpr += s.score->fpr;
        sum.best_threshold += s.score->best_threshold;
    }
    if (rep.included > 0) {
        const auto n = static_cast<double>(rep.included);
        rep.mean = SampleScore{sum.dice_max / n, sum.ap / n, sum.auc / n, sum.fpr / n, sum.best_threshold / n};
    }
    rep.samples = std::move(samples);
    return rep;
}

}  // namespace anomforge
