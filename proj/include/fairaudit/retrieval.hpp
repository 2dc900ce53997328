#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/types.hpp"
#include "fairaudit/verification.hpp"

namespace fairaudit {

// AP over a ranked relevance list: mean over relevant ranks k of
// precision@k. Requires at least one relevant document.
inline double average_precision(const std::vector<bool>& ranked_relevance) {
    std::size_t relevant = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
        if (!ranked_relevance[k]) continue;
        ++relevant;
        sum += static_cast<double>(relevant) / static_cast<double>(k + 1);
    }
    require_input(relevant > 0, "average_precision requires at least one relevant document");
    return sum / static_cast<double>(relevant);
}

struct SliceRetrieval {
    SubgroupSelector selector;
    std::optional<double> mean_ap;       // undefined for an empty slice
    std::optional<double> tpr_at_fpr;    // retrieval TPR at the given FPR target
    std::size_t queries = 0;             // queries contributing to mAP
    std::size_t skipped_queries = 0;     // slice members whose identity has no other sample
    std::size_t trials = 0;              // query-document verification trials
    std::size_t genuine_trials = 0;
};

// Materialized all-vs-all rankings: every sample queries the full cohort
// minus itself, documents sorted by descending similarity with ties broken
// by ascending sample id, relevance meaning same identity.
struct RetrievalRun {
    std::vector<std::size_t> queries;            // row index per query
    std::vector<std::vector<std::size_t>> ranked; // per query: count-1 document rows
    std::vector<std::vector<bool>> relevance;     // aligned with ranked
};

inline RetrievalRun retrieval_run(const AnnotatedCohort& cohort, Metric metric = Metric::cosine) {
    const EmbeddingSet& e = cohort.embeddings();
    const std::size_t n = e.count();
    require_input(n >= 2, "retrieval requires at least 2 samples");

    std::vector<double> norms(n);
    if (metric == Metric::cosine)
        for (std::size_t i = 0; i < n; ++i) norms[i] = e.norm(i);

    RetrievalRun run;
    run.queries.reserve(n);
    run.ranked.reserve(n);
    run.relevance.reserve(n);
    std::vector<double> sims(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t d = 0; d < n; ++d) {
            if (d == q) continue;
            sims[d] = metric == Metric::cosine
                          ? cosine_similarity(e.row(q), e.row(d), e.dim(), norms[q], norms[d])
                          : -euclidean_distance(e.row(q), e.row(d), e.dim());
        }
        std::vector<std::size_t> docs;
        docs.reserve(n - 1);
        for (std::size_t d = 0; d < n; ++d)
            if (d != q) docs.push_back(d);
        std::sort(docs.begin(), docs.end(), [&](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return e.id(a) < e.id(b);
        });
        std::vector<bool> rel;
        rel.reserve(docs.size());
        for (const std::size_t d : docs)
            rel.push_back(cohort.annotation(d).identity_id == cohort.annotation(q).identity_id);
        run.queries.push_back(q);
        run.ranked.push_back(std::move(docs));
        run.relevance.push_back(std::move(rel));
    }
    return run;
}

// All-vs-all retrieval restricted to slice queries: documents are always the
// full cohort (hence plenty of easy negatives), relevance is same identity,
// similarity ties break by ascending sample id. A query whose identity has no
// other sample has undefined AP; it is skipped and counted.
inline SliceRetrieval retrieval_for_slice(const AnnotatedCohort& cohort, const SubgroupSelector& sel,
                                          Metric metric = Metric::cosine, double fpr_target = 0.005) {
    const EmbeddingSet& e = cohort.embeddings();
    const std::size_t n = e.count();
    require_input(n >= 2, "retrieval requires at least 2 samples");

    std::vector<double> norms(n);
    if (metric == Metric::cosine)
        for (std::size_t i = 0; i < n; ++i) norms[i] = e.norm(i);

    SliceRetrieval out;
    out.selector = sel;

    double ap_sum = 0.0;
    ScoredPairs trials;
    trials.metric = metric;

    std::vector<std::size_t> docs;
    std::vector<double> sims(n);
    for (std::size_t q = 0; q < n; ++q) {
        if (!sel.matches(cohort.annotation(q))) continue;

        const std::string& q_identity = cohort.annotation(q).identity_id;
        bool has_relevant = false;
        for (std::size_t d = 0; d < n; ++d) {
            if (d == q) continue;
            sims[d] = metric == Metric::cosine
                          ? cosine_similarity(e.row(q), e.row(d), e.dim(), norms[q], norms[d])
                          : -euclidean_distance(e.row(q), e.row(d), e.dim());
            const bool genuine = cohort.annotation(d).identity_id == q_identity;
            has_relevant |= genuine;
            trials.scores.push_back(sims[d]);
            trials.genuine.push_back(genuine);
        }
        if (!has_relevant) {
            ++out.skipped_queries;
            continue;
        }

        docs.clear();
        for (std::size_t d = 0; d < n; ++d)
            if (d != q) docs.push_back(d);
        std::sort(docs.begin(), docs.end(), [&](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return e.id(a) < e.id(b);
        });

        std::vector<bool> relevance;
        relevance.reserve(docs.size());
        for (const std::size_t d : docs) relevance.push_back(cohort.annotation(d).identity_id == q_identity);
        ap_sum += average_precision(relevance);
        ++out.queries;
    }

    if (out.queries > 0) out.mean_ap = ap_sum / static_cast<double>(out.queries);
    out.trials = trials.size();
    out.genuine_trials = trials.genuine_count();
    if (out.genuine_trials > 0 && out.genuine_trials < out.trials)
        out.tpr_at_fpr = tpr_at_fpr(roc(trials), fpr_target);
    return out;
}

inline std::vector<SliceRetrieval> map_by_slice(const AnnotatedCohort& cohort,
                                                const std::vector<SubgroupSelector>& selectors,
                                                Metric metric = Metric::cosine, double fpr_target = 0.005) {
    std::vector<SliceRetrieval> out;
    out.reserve(selectors.size());
    for (const auto& sel : selectors) out.push_back(retrieval_for_slice(cohort, sel, metric, fpr_target));
    return out;
}

} // namespace fairaudit
