#pragma once

// Brute-force reference implementations written straight from the metric
// definitions. This header deliberately shares no helpers with the main
// metric code paths: scans are exhaustive O(n^2) threshold enumerations and
// exist solely so the optimized paths can be checked for exact agreement.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/protocol.hpp"
#include "fairaudit/types.hpp"

namespace fairaudit::oracle {

inline constexpr std::size_t kOraclePairCap = 2000;

struct OracleCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct OracleRocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

inline OracleCounts oracle_confusion(const std::vector<double>& scores, const std::vector<bool>& genuine,
                                     double threshold) {
    OracleCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] >= threshold) {
            if (genuine[i])
                ++c.tp;
            else
                ++c.fp;
        } else {
            if (genuine[i])
                ++c.fn;
            else
                ++c.tn;
        }
    }
    return c;
}

// Every distinct score is a candidate threshold; each candidate is evaluated
// by a full pass over all pairs.
inline std::vector<OracleRocPoint> oracle_roc(const std::vector<double>& scores,
                                              const std::vector<bool>& genuine) {
    require_input(scores.size() <= kOraclePairCap, "oracle size cap exceeded");
    std::size_t n_gen = 0;
    for (const bool g : genuine) n_gen += g;
    const std::size_t n_imp = scores.size() - n_gen;
    require_input(n_gen > 0 && n_imp > 0, "oracle roc needs both classes");

    std::vector<double> candidates(scores);
    std::sort(candidates.begin(), candidates.end(), std::greater<>());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<OracleRocPoint> points;
    points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (const double t : candidates) {
        const OracleCounts c = oracle_confusion(scores, genuine, t);
        points.push_back({t, static_cast<double>(c.fp) / static_cast<double>(n_imp),
                          static_cast<double>(c.tp) / static_cast<double>(n_gen)});
    }
    return points;
}

// Maximize TPR subject to empirical FPR <= target over all candidate cuts.
inline double oracle_tpr_at_fpr(const std::vector<double>& scores, const std::vector<bool>& genuine,
                                double target_fpr) {
    double best = 0.0;
    for (const OracleRocPoint& pt : oracle_roc(scores, genuine))
        if (pt.fpr <= target_fpr && pt.tpr > best) best = pt.tpr;
    return best;
}

// Best achievable empirical accuracy over all cuts, by full rescans.
inline double oracle_best_accuracy(const std::vector<double>& scores, const std::vector<bool>& genuine) {
    require_input(scores.size() <= kOraclePairCap, "oracle size cap exceeded");
    require_input(!scores.empty(), "oracle accuracy needs at least one pair");
    const double total = static_cast<double>(scores.size());

    std::vector<double> candidates(scores);
    candidates.push_back(std::numeric_limits<double>::infinity());
    double best = 0.0;
    for (const double t : candidates) {
        const OracleCounts c = oracle_confusion(scores, genuine, t);
        best = std::max(best, static_cast<double>(c.tp + c.tn) / total);
    }
    return best;
}

// Average precision straight from the definition: the mean of precision at
// each relevant rank.
inline double oracle_average_precision(const std::vector<bool>& ranked_relevance) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
        if (ranked_relevance[k]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    require_input(hits > 0, "oracle AP needs a relevant document");
    return sum / static_cast<double>(hits);
}

// Direct per-pair scoring from the metric definitions.
inline std::vector<double> oracle_scores(const std::vector<VerificationPair>& pairs,
                                         const AnnotatedCohort& cohort, bool cosine) {
    const EmbeddingSet& e = cohort.embeddings();
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        const double* a = e.row(e.row_of(p.a));
        const double* b = e.row(e.row_of(p.b));
        if (cosine) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t k = 0; k < e.dim(); ++k) {
                dot += a[k] * b[k];
                na += a[k] * a[k];
                nb += b[k] * b[k];
            }
            out.push_back(dot / (std::sqrt(na) * std::sqrt(nb)));
        } else {
            double s = 0.0;
            for (std::size_t k = 0; k < e.dim(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            out.push_back(-std::sqrt(s));
        }
    }
    return out;
}

struct OracleBundle {
    std::vector<OracleRocPoint> roc;
    std::map<double, double> tpr_at_fpr;  // target -> tpr
    double best_accuracy = 0.0;
    std::map<std::string, OracleCounts> slice_confusion;  // selector key -> counts at threshold
    double slice_threshold = 0.0;
};

// Reference metric bundle for fixtures within the cap. The slice split
// qualifies a pair when both endpoints match the selector, mirroring the
// audited protocol's membership rule.
inline OracleBundle oracle_metrics(const AnnotatedCohort& cohort, const std::vector<VerificationPair>& pairs,
                                   bool cosine, const std::vector<double>& fpr_targets,
                                   const std::vector<SubgroupSelector>& selectors, double slice_fpr_target) {
    require_input(pairs.size() <= kOraclePairCap,
                  "oracle size cap exceeded: " + std::to_string(pairs.size()) + " pairs");
    OracleBundle bundle;
    const std::vector<double> scores = oracle_scores(pairs, cohort, cosine);
    std::vector<bool> genuine;
    genuine.reserve(pairs.size());
    for (const auto& p : pairs) genuine.push_back(p.genuine);

    bundle.roc = oracle_roc(scores, genuine);
    for (const double t : fpr_targets) bundle.tpr_at_fpr[t] = oracle_tpr_at_fpr(scores, genuine, t);
    bundle.best_accuracy = oracle_best_accuracy(scores, genuine);

    // Threshold for slice confusion: the cut whose FPR is the largest one
    // not exceeding the target, found by exhaustive scan.
    std::size_t n_imp = 0;
    for (const bool g : genuine) n_imp += !g;
    double best_thr = std::numeric_limits<double>::infinity();
    double best_fpr = -1.0;
    for (const OracleRocPoint& pt : bundle.roc) {
        if (pt.fpr <= slice_fpr_target && pt.fpr >= best_fpr) {
            best_fpr = pt.fpr;
            best_thr = pt.threshold;
        }
    }
    bundle.slice_threshold = best_thr;

    for (const auto& sel : selectors) {
        OracleCounts counts;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const SampleAnnotation& aa = cohort.annotation_of(pairs[i].a);
            const SampleAnnotation& ab = cohort.annotation_of(pairs[i].b);
            const bool inside = sel.matches(aa) && sel.matches(ab);
            if (!inside) continue;
            if (scores[i] >= best_thr) {
                if (genuine[i])
                    ++counts.tp;
                else
                    ++counts.fp;
            } else {
                if (genuine[i])
                    ++counts.fn;
                else
                    ++counts.tn;
            }
        }
        bundle.slice_confusion[sel.key()] = counts;
    }
    return bundle;
}

} // namespace fairaudit::oracle
