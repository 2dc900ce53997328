#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/protocol.hpp"

namespace fairaudit {

enum class Metric { cosine, euclidean_as_similarity };

inline std::string to_string(Metric m) {
    return m == Metric::cosine ? "cosine" : "euclidean_as_similarity";
}

// Similarity scores aligned with a pair list. Orientation is uniform:
// higher = more likely the same person (euclidean distances are negated).
struct ScoredPairs {
    std::vector<double> scores;
    std::vector<bool> genuine;
    Metric metric = Metric::cosine;

    std::size_t size() const { return scores.size(); }
    std::size_t genuine_count() const {
        std::size_t c = 0;
        for (const bool g : genuine) c += g;
        return c;
    }
    std::size_t impostor_count() const { return size() - genuine_count(); }

    ScoredPairs subset(const std::vector<std::size_t>& idx) const {
        ScoredPairs out;
        out.metric = metric;
        out.scores.reserve(idx.size());
        out.genuine.reserve(idx.size());
        for (const std::size_t i : idx) {
            out.scores.push_back(scores[i]);
            out.genuine.push_back(genuine[i]);
        }
        return out;
    }
};

inline double cosine_similarity(const double* a, const double* b, std::size_t dim, double norm_a, double norm_b) {
    require_input(norm_a > 0.0 && norm_b > 0.0, "cosine similarity undefined for zero vector");
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k) dot += a[k] * b[k];
    return dot / (norm_a * norm_b);
}

inline double euclidean_distance(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

inline ScoredPairs score_pairs(const std::vector<VerificationPair>& pairs, const AnnotatedCohort& cohort,
                               Metric metric) {
    const EmbeddingSet& e = cohort.embeddings();
    std::vector<double> norms;
    if (metric == Metric::cosine) {
        norms.resize(e.count());
        for (std::size_t i = 0; i < e.count(); ++i) norms[i] = e.norm(i);
    }
    ScoredPairs out;
    out.metric = metric;
    out.scores.reserve(pairs.size());
    out.genuine.reserve(pairs.size());
    for (const auto& p : pairs) {
        const std::size_t ia = cohort.row_of(p.a);
        const std::size_t ib = cohort.row_of(p.b);
        double s;
        if (metric == Metric::cosine) {
            try {
                s = cosine_similarity(e.row(ia), e.row(ib), e.dim(), norms[ia], norms[ib]);
            } catch (const input_error&) {
                throw input_error("cosine similarity undefined for zero vector in pair (" + p.a + ", " + p.b + ")");
            }
        } else {
            s = -euclidean_distance(e.row(ia), e.row(ib), e.dim());
        }
        require_invariant(std::isfinite(s), "non-finite score for pair (" + p.a + ", " + p.b + ")");
        out.scores.push_back(s);
        out.genuine.push_back(p.genuine);
    }
    return out;
}

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total()); }

    bool operator==(const ConfusionCounts& o) const {
        return tp == o.tp && fp == o.fp && tn == o.tn && fn == o.fn;
    }
};

// Decision rule: predict "same person" iff score >= threshold.
inline ConfusionCounts predict(const ScoredPairs& sp, double threshold) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const bool positive = sp.scores[i] >= threshold;
        if (sp.genuine[i])
            positive ? ++c.tp : ++c.fn;
        else
            positive ? ++c.fp : ++c.tn;
    }
    return c;
}

// Empirical ROC; thresholds descend and tied scores collapse into one step.
// First point is (0,0) at threshold +inf, last is (1,1) at the minimum score.
struct RocCurve {
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;

    std::size_t size() const { return thresholds.size(); }
};

inline RocCurve roc(const ScoredPairs& sp) {
    const std::size_t n_gen = sp.genuine_count();
    const std::size_t n_imp = sp.size() - n_gen;
    require_input(n_gen > 0 && n_imp > 0, "roc requires at least one genuine and one impostor pair");

    std::vector<std::size_t> order(sp.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&sp](std::size_t a, std::size_t b) { return sp.scores[a] > sp.scores[b]; });

    RocCurve curve;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);

    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = sp.scores[order[i]];
        while (i < order.size() && sp.scores[order[i]] == s) {
            sp.genuine[order[i]] ? ++tp : ++fp;
            ++i;
        }
        curve.thresholds.push_back(s);
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_imp));
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_gen));
    }
    return curve;
}

// Conservative step convention: the TPR at the largest empirical FPR that
// does not exceed the target. No interpolation.
inline double tpr_at_fpr(const RocCurve& curve, double target_fpr) {
    require_input(target_fpr > 0.0 && target_fpr < 1.0, "target FPR must lie in (0,1)");
    double best = 0.0;
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve.fpr[i] <= target_fpr) best = std::max(best, curve.tpr[i]);
    return best;
}

// Threshold of the ROC operating point selected by tpr_at_fpr.
inline double threshold_at_fpr(const RocCurve& curve, double target_fpr) {
    require_input(target_fpr > 0.0 && target_fpr < 1.0, "target FPR must lie in (0,1)");
    double thr = curve.thresholds.front();
    for (std::size_t i = 0; i < curve.size(); ++i)
        if (curve.fpr[i] <= target_fpr) thr = curve.thresholds[i];
    return thr;
}

struct BestThreshold {
    double threshold = 0.0;
    double accuracy = 0.0;
};

// Exact empirical-accuracy optimum: scans midpoints between consecutive
// sorted unique scores plus the +/-inf sentinels.
inline BestThreshold best_threshold(const ScoredPairs& sp) {
    require_input(sp.size() > 0, "best_threshold requires at least one pair");
    std::vector<std::size_t> order(sp.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&sp](std::size_t a, std::size_t b) { return sp.scores[a] > sp.scores[b]; });

    const std::size_t n_gen = sp.genuine_count();
    const std::size_t n_imp = sp.size() - n_gen;
    const double total = static_cast<double>(sp.size());

    // Cut above the maximum: nothing predicted positive.
    BestThreshold best{std::numeric_limits<double>::infinity(), static_cast<double>(n_imp) / total};

    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = sp.scores[order[i]];
        while (i < order.size() && sp.scores[order[i]] == s) {
            sp.genuine[order[i]] ? ++tp : ++fp;
            ++i;
        }
        const double acc = static_cast<double>(tp + (n_imp - fp)) / total;
        if (acc > best.accuracy) {
            double thr;
            if (i < order.size())
                thr = (s + sp.scores[order[i]]) / 2.0;  // midpoint to the next unique score
            else
                thr = -std::numeric_limits<double>::infinity();  // everything predicted positive
            best = {thr, acc};
        }
    }
    return best;
}

struct KFoldAccuracy {
    double mean = 0.0;
    double stddev = 0.0;  // population std across folds
    std::vector<double> per_fold;
    std::vector<double> per_fold_threshold;
};

// LFW-style protocol: for each fold, the threshold is fit on the complement
// folds by exact accuracy maximization, then applied to the held-out fold.
inline KFoldAccuracy kfold_accuracy(const ScoredPairs& sp, const std::vector<int>& folds) {
    require_input(folds.size() == sp.size(), "fold assignment must align with scores");
    std::set<int> fold_ids(folds.begin(), folds.end());
    require_input(fold_ids.size() >= 2, "kfold_accuracy requires at least 2 folds");

    KFoldAccuracy out;
    for (const int f : fold_ids) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < folds.size(); ++i)
            (folds[i] == f ? test_idx : train_idx).push_back(i);

        const ScoredPairs test = sp.subset(test_idx);
        require_input(test.genuine_count() > 0 && test.impostor_count() > 0,
                      "fold " + std::to_string(f) + " does not contain both classes");
        const ScoredPairs train = sp.subset(train_idx);
        require_input(train.genuine_count() > 0 && train.impostor_count() > 0,
                      "complement of fold " + std::to_string(f) + " does not contain both classes");

        const BestThreshold bt = best_threshold(train);
        out.per_fold.push_back(predict(test, bt.threshold).accuracy());
        out.per_fold_threshold.push_back(bt.threshold);
    }

    const double k = static_cast<double>(out.per_fold.size());
    double sum = 0.0;
    for (const double a : out.per_fold) sum += a;
    out.mean = sum / k;
    double m2 = 0.0;
    for (const double a : out.per_fold) m2 += (a - out.mean) * (a - out.mean);
    out.stddev = std::sqrt(m2 / k);
    return out;
}

// One-vs-rest annotator validation: FPR_c = FP_c / (FP_c + TN_c) per class
// within each group. A group whose ground truth contains only class c has no
// negatives for c; the rate is undefined, not zero.
struct AnnotatorSample {
    std::string sample_id;
    std::string group;
    std::string true_label;
    std::string pred_label;
};

struct AnnotatorFprCell {
    std::optional<double> fpr;
    std::size_t false_positives = 0;
    std::size_t true_negatives = 0;
};

using AnnotatorFprTable = std::map<std::string, std::map<std::string, AnnotatorFprCell>>;

inline AnnotatorFprTable annotator_fpr(const std::vector<std::string>& pred, const std::vector<std::string>& truth,
                                       const std::vector<std::string>& groups) {
    require_input(pred.size() == truth.size() && truth.size() == groups.size(),
                  "annotator_fpr requires aligned pred/truth/group lists");
    require_input(!pred.empty(), "annotator_fpr requires at least one sample");

    std::set<std::string> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());

    AnnotatorFprTable table;
    std::set<std::string> group_names(groups.begin(), groups.end());
    for (const auto& g : group_names) {
        for (const auto& c : classes) {
            AnnotatorFprCell cell;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (groups[i] != g || truth[i] == c) continue;
                if (pred[i] == c)
                    ++cell.false_positives;
                else
                    ++cell.true_negatives;
            }
            const std::size_t denom = cell.false_positives + cell.true_negatives;
            if (denom > 0)
                cell.fpr = static_cast<double>(cell.false_positives) / static_cast<double>(denom);
            table[g][c] = cell;
        }
    }
    return table;
}

// Validation CSV: `sample_id,group,true_label,pred_label`.
inline std::vector<AnnotatorSample> load_annotator_samples(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require_input(!lines.empty(), path + ": malformed header: empty file");
    require_input(csv::split(lines[0]) ==
                      std::vector<std::string>({"sample_id", "group", "true_label", "pred_label"}),
                  path + ": malformed header: expected 'sample_id,group,true_label,pred_label'");
    std::vector<AnnotatorSample> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto fields = csv::split(lines[r]);
        require_input(fields.size() == 4,
                      path + ": row " + std::to_string(r) + ": expected 4 fields, got " + std::to_string(fields.size()));
        out.push_back({fields[0], fields[1], fields[2], fields[3]});
    }
    return out;
}

} // namespace fairaudit
