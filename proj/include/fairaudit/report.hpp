#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairaudit/csv.hpp"
#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/fairness.hpp"
#include "fairaudit/protocol.hpp"
#include "fairaudit/retrieval.hpp"
#include "fairaudit/similarity_stats.hpp"
#include "fairaudit/types.hpp"
#include "fairaudit/verification.hpp"
#include "fairaudit/version.hpp"

namespace fairaudit {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Report rows

struct DisparityCell {
    std::optional<double> relative;
    std::optional<double> absolute;
    std::string baseline;
    bool is_baseline = false;
};

struct SliceMetricsRow {
    SubgroupSelector selector;
    std::size_t pairs = 0;
    std::size_t genuine = 0;
    std::size_t impostor = 0;
    std::size_t folds_used = 0;
    std::optional<double> accuracy_mean;
    std::optional<double> accuracy_std;
    std::optional<double> tpr;
    std::optional<DisparityCell> accuracy_disparity;
    std::optional<DisparityCell> tpr_disparity;
    std::string scope_key;  // rows sharing a scope compete for the baseline
};

struct AgeGapRow {
    Race race = Race::Caucasian;
    int gap = 0;
    SliceMetricsRow metrics;  // selector unused; scope is the race
};

struct RetrievalRow {
    std::string attribute;  // "all", "race", "gender", "age"
    SubgroupSelector selector;
    std::size_t queries = 0;
    std::size_t skipped_queries = 0;
    std::size_t trials = 0;
    std::optional<double> mean_ap;
    std::optional<double> tpr;
    std::optional<DisparityCell> map_disparity;
    std::optional<DisparityCell> tpr_disparity;
};

struct SimilarityRow {
    std::string attribute;
    SubgroupSelector selector;
    std::optional<double> inter_mean, inter_std;
    std::optional<double> intra_mean, intra_std;
    std::size_t inter_count = 0;
    std::size_t intra_count = 0;
    bool subsampled = false;
};

struct SweepRow {
    FairnessRecord record;
    std::optional<DisparityCell> p_rule_disparity;  // within-race scope
    std::string scope_key;
};

struct AuditMetadata {
    std::string embeddings_path;
    std::string annotations_path;
    std::string pairs_path;
    Metric metric = Metric::cosine;
    bool normalized = true;
    JoinMode join_mode = JoinMode::strict;
    std::size_t dropped_embeddings = 0;
    std::size_t dropped_annotations = 0;
    std::size_t samples = 0;
    std::size_t identities = 0;
    std::size_t pairs = 0;
    std::size_t folds = 0;
    double fpr_target = 0.01;
    double retrieval_fpr_target = 0.005;
    PairPolicy policy = PairPolicy::Both;
    MistreatmentConvention convention = MistreatmentConvention::standard;
    IdentityPolicy identity_policy = IdentityPolicy::cross_identity_only;
    std::string threshold_policy;
    double global_threshold = 0.0;
    std::uint64_t seed = 0;
};

struct AuditReport {
    AuditMetadata metadata;
    SliceMetricsRow overall;
    std::vector<SliceMetricsRow> by_race;
    std::vector<SliceMetricsRow> race_gender;
    std::vector<SliceMetricsRow> race_age;
    std::vector<SliceMetricsRow> race_gender_age;
    std::vector<AgeGapRow> age_gap;
    std::vector<RetrievalRow> retrieval;
    std::vector<SimilarityRow> similarity;
    std::vector<SweepRow> sweep;
};

// ---------------------------------------------------------------------------
// Disparity assembly

// Relative + absolute disparity cells for one scope. The relative column is
// omitted when the baseline value is 0; undefined inputs stay undefined.
inline std::vector<std::optional<DisparityCell>> disparity_cells(
    const std::vector<std::string>& keys, const std::vector<std::optional<double>>& values,
    MetricOrientation orientation = MetricOrientation::higher_is_better) {
    std::optional<double> best;
    for (const auto& v : values)
        if (v && (!best || (orientation == MetricOrientation::higher_is_better ? *v > *best : *v < *best)))
            best = *v;
    std::vector<std::optional<Disparity>> rel;
    if (best && *best != 0.0) rel = relative_disparity(keys, values, DisparityMode::relative, orientation);
    const auto abs = relative_disparity(keys, values, DisparityMode::absolute, orientation);
    std::vector<std::optional<DisparityCell>> cells(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!abs[i]) continue;
        DisparityCell cell;
        cell.baseline = abs[i]->baseline;
        cell.is_baseline = abs[i]->is_baseline;
        cell.absolute = abs[i]->value;
        if (!rel.empty() && rel[i]) cell.relative = rel[i]->value;
        cells[i] = cell;
    }
    return cells;
}

// ---------------------------------------------------------------------------
// Audit configuration and orchestration

struct AuditConfig {
    std::string embeddings_path;
    std::string annotations_path;
    std::string pairs_path;
    Metric metric = Metric::cosine;
    bool normalize_embeddings = true;
    JoinMode join_mode = JoinMode::strict;
    double fpr_target = 0.01;
    double retrieval_fpr_target = 0.005;
    PairPolicy policy = PairPolicy::Both;
    MistreatmentConvention convention = MistreatmentConvention::standard;
    IdentityPolicy identity_policy = IdentityPolicy::cross_identity_only;
    std::optional<ThresholdPolicy> threshold_policy;  // defaults to FPR target
    IntersectionAttrs sweep_attrs{true, true, true};  // fairness-sweep grouping
    std::uint64_t seed = 0;
};

namespace detail {

// Binary embeddings start with the FAEM magic; anything else is CSV.
inline EmbeddingFormat sniff_embedding_format(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_input(in.good(), "cannot open file: " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    return std::memcmp(magic, "FAEM", 4) == 0 ? EmbeddingFormat::binary : EmbeddingFormat::csv;
}

struct StageGuard {
    const char* stage;
};

template <typename F>
auto run_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const input_error& e) {
        throw input_error(std::string("stage '") + stage + "': " + e.what());
    } catch (const invariant_error& e) {
        throw invariant_error(std::string("stage '") + stage + "': " + e.what());
    }
}

} // namespace detail

// Verification metrics restricted to one slice. Folds that lack either class
// inside the slice are dropped; the k-fold protocol then runs over the
// remaining folds when at least two survive.
inline SliceMetricsRow slice_metrics(const std::vector<VerificationPair>& pairs, const ScoredPairs& sp,
                                     const AnnotatedCohort& cohort, const SubgroupSelector& sel,
                                     double fpr_target) {
    SliceMetricsRow row;
    row.selector = sel;

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (pair_in_subgroup(pairs[i], cohort, sel)) idx.push_back(i);
    row.pairs = idx.size();
    if (idx.empty()) return row;

    ScoredPairs slice = sp.subset(idx);
    row.genuine = slice.genuine_count();
    row.impostor = slice.impostor_count();
    if (row.genuine == 0 || row.impostor == 0) return row;

    row.tpr = tpr_at_fpr(roc(slice), fpr_target);

    // Fold validity within the slice.
    std::map<int, std::pair<std::size_t, std::size_t>> fold_classes;
    for (const std::size_t i : idx) {
        auto& [gen, imp] = fold_classes[pairs[i].fold];
        pairs[i].genuine ? ++gen : ++imp;
    }
    std::set<int> valid_folds;
    for (const auto& [fold, counts] : fold_classes)
        if (counts.first > 0 && counts.second > 0) valid_folds.insert(fold);
    row.folds_used = valid_folds.size();
    if (valid_folds.size() < 2) return row;

    std::vector<std::size_t> kept;
    std::vector<int> folds;
    for (const std::size_t i : idx) {
        if (valid_folds.count(pairs[i].fold)) {
            kept.push_back(i);
            folds.push_back(pairs[i].fold);
        }
    }
    const KFoldAccuracy acc = kfold_accuracy(sp.subset(kept), folds);
    row.accuracy_mean = acc.mean;
    row.accuracy_std = acc.stddev;
    return row;
}

namespace detail {

inline void attach_slice_disparities(std::vector<SliceMetricsRow>& rows) {
    std::vector<std::string> scopes;
    for (const auto& r : rows)
        if (std::find(scopes.begin(), scopes.end(), r.scope_key) == scopes.end()) scopes.push_back(r.scope_key);
    for (const auto& scope : scopes) {
        std::vector<SliceMetricsRow*> group;
        std::vector<std::string> keys;
        std::vector<std::optional<double>> accs, tprs;
        for (auto& r : rows) {
            if (r.scope_key != scope) continue;
            group.push_back(&r);
            keys.push_back(r.selector.key());
            accs.push_back(r.accuracy_mean);
            tprs.push_back(r.tpr);
        }
        const auto acc_cells = disparity_cells(keys, accs);
        const auto tpr_cells = disparity_cells(keys, tprs);
        for (std::size_t i = 0; i < group.size(); ++i) {
            group[i]->accuracy_disparity = acc_cells[i];
            group[i]->tpr_disparity = tpr_cells[i];
        }
    }
}

} // namespace detail

// Full audit pipeline: score -> overall accuracy/TPR -> demographic slices ->
// age-gap buckets -> retrieval -> similarity statistics -> fairness sweep.
// Any stage failure aborts with the stage named; nothing is written here.
inline AuditReport run_audit(const AuditConfig& cfg) {
    AuditReport report;
    AuditMetadata& meta = report.metadata;
    meta.embeddings_path = cfg.embeddings_path;
    meta.annotations_path = cfg.annotations_path;
    meta.pairs_path = cfg.pairs_path;
    meta.metric = cfg.metric;
    meta.normalized = cfg.normalize_embeddings;
    meta.join_mode = cfg.join_mode;
    meta.fpr_target = cfg.fpr_target;
    meta.retrieval_fpr_target = cfg.retrieval_fpr_target;
    meta.policy = cfg.policy;
    meta.convention = cfg.convention;
    meta.identity_policy = cfg.identity_policy;
    meta.seed = cfg.seed;

    const ThresholdPolicy policy = cfg.threshold_policy.value_or(FprTargetPolicy{cfg.fpr_target});
    meta.threshold_policy = to_string(policy);

    // Load and join.
    AnnotatedCohort cohort = detail::run_stage("load", [&] {
        EmbeddingSet e = load_embeddings(cfg.embeddings_path, detail::sniff_embedding_format(cfg.embeddings_path));
        if (cfg.normalize_embeddings) e = normalize(e);
        const auto annotations = load_annotations(cfg.annotations_path);
        return join_cohort(e, annotations, cfg.join_mode);
    });
    meta.dropped_embeddings = cohort.dropped_embeddings;
    meta.dropped_annotations = cohort.dropped_annotations;
    meta.samples = cohort.size();
    {
        std::set<std::string> identities;
        for (std::size_t i = 0; i < cohort.size(); ++i) identities.insert(cohort.annotation(i).identity_id);
        meta.identities = identities.size();
    }

    const std::vector<VerificationPair> pairs =
        detail::run_stage("pairs", [&] { return load_pairs(cfg.pairs_path, cohort); });
    meta.pairs = pairs.size();
    {
        std::set<int> folds;
        for (const auto& p : pairs) folds.insert(p.fold);
        meta.folds = folds.size();
    }

    const ScoredPairs sp = detail::run_stage("score", [&] { return score_pairs(pairs, cohort, cfg.metric); });
    meta.global_threshold = detail::run_stage("threshold", [&] { return resolve_threshold(sp, policy); });

    // Overall verification metrics.
    report.overall = detail::run_stage("verify", [&] {
        SliceMetricsRow row = slice_metrics(pairs, sp, cohort, all_selector(cfg.policy), cfg.fpr_target);
        row.scope_key = "overall";
        return row;
    });

    // Demographic slices.
    auto make_slices = [&](const IntersectionAttrs& attrs, const char* stage,
                           auto scope_of) -> std::vector<SliceMetricsRow> {
        return detail::run_stage(stage, [&] {
            std::vector<SliceMetricsRow> rows;
            for (const auto& sel : enumerate_intersections(attrs, cfg.policy)) {
                SliceMetricsRow row = slice_metrics(pairs, sp, cohort, sel, cfg.fpr_target);
                row.scope_key = scope_of(sel);
                rows.push_back(std::move(row));
            }
            detail::attach_slice_disparities(rows);
            return rows;
        });
    };
    report.by_race = make_slices({true, false, false}, "slices:race", [](const SubgroupSelector&) {
        return std::string("race");
    });
    report.race_gender = make_slices({true, true, false}, "slices:race_gender", [](const SubgroupSelector& s) {
        return to_string(*s.race);
    });
    report.race_age = make_slices({true, false, true}, "slices:race_age", [](const SubgroupSelector& s) {
        return to_string(*s.race);
    });
    report.race_gender_age =
        make_slices({true, true, true}, "slices:race_gender_age", [](const SubgroupSelector& s) {
            return to_string(*s.race);
        });

    // Cross-age buckets per race.
    report.age_gap = detail::run_stage("age_gap", [&] {
        std::vector<AgeGapRow> rows;
        std::vector<int> gaps(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) gaps[i] = age_gap(pairs[i], cohort);
        for (int r = 0; r < kRaceCount; ++r) {
            SubgroupSelector race_sel;
            race_sel.race = static_cast<Race>(r);
            race_sel.policy = cfg.policy;
            for (int gap = 0; gap < kAgeBinCount; ++gap) {
                std::vector<VerificationPair> bucket_pairs;
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < pairs.size(); ++i)
                    if (gaps[i] == gap && pair_in_subgroup(pairs[i], cohort, race_sel)) idx.push_back(i);
                AgeGapRow row;
                row.race = static_cast<Race>(r);
                row.gap = gap;
                row.metrics.selector = race_sel;
                row.metrics.scope_key = to_string(static_cast<Race>(r));
                row.metrics.pairs = idx.size();
                if (!idx.empty()) {
                    ScoredPairs bucket = sp.subset(idx);
                    row.metrics.genuine = bucket.genuine_count();
                    row.metrics.impostor = bucket.impostor_count();
                    if (row.metrics.genuine > 0 && row.metrics.impostor > 0)
                        row.metrics.tpr = tpr_at_fpr(roc(bucket), cfg.fpr_target);
                    // Fold-protocol accuracy within the bucket.
                    std::map<int, std::pair<std::size_t, std::size_t>> fold_classes;
                    for (const std::size_t i : idx) {
                        auto& [gen, imp] = fold_classes[pairs[i].fold];
                        pairs[i].genuine ? ++gen : ++imp;
                    }
                    std::set<int> valid;
                    for (const auto& [fold, counts] : fold_classes)
                        if (counts.first > 0 && counts.second > 0) valid.insert(fold);
                    row.metrics.folds_used = valid.size();
                    if (valid.size() >= 2) {
                        std::vector<std::size_t> kept;
                        std::vector<int> folds;
                        for (const std::size_t i : idx)
                            if (valid.count(pairs[i].fold)) {
                                kept.push_back(i);
                                folds.push_back(pairs[i].fold);
                            }
                        const KFoldAccuracy acc = kfold_accuracy(sp.subset(kept), folds);
                        row.metrics.accuracy_mean = acc.mean;
                        row.metrics.accuracy_std = acc.stddev;
                    }
                }
                rows.push_back(std::move(row));
            }
        }
        // Disparity within each race across gaps. Baseline keys must
        // distinguish gaps, not the shared race selector.
        for (int r = 0; r < kRaceCount; ++r) {
            std::vector<SliceMetricsRow*> group;
            std::vector<std::string> keys;
            std::vector<std::optional<double>> accs, tprs;
            for (auto& row : rows) {
                if (row.race != static_cast<Race>(r)) continue;
                group.push_back(&row.metrics);
                keys.push_back("gap " + std::to_string(row.gap));
                accs.push_back(row.metrics.accuracy_mean);
                tprs.push_back(row.metrics.tpr);
            }
            const auto acc_cells = disparity_cells(keys, accs);
            const auto tpr_cells = disparity_cells(keys, tprs);
            for (std::size_t i = 0; i < group.size(); ++i) {
                group[i]->accuracy_disparity = acc_cells[i];
                group[i]->tpr_disparity = tpr_cells[i];
            }
        }
        return rows;
    });

    // Retrieval per attribute group.
    report.retrieval = detail::run_stage("retrieval", [&] {
        std::vector<RetrievalRow> rows;
        auto add_row = [&](const std::string& attribute, const SubgroupSelector& sel) {
            const SliceRetrieval r = retrieval_for_slice(cohort, sel, cfg.metric, cfg.retrieval_fpr_target);
            RetrievalRow row;
            row.attribute = attribute;
            row.selector = sel;
            row.queries = r.queries;
            row.skipped_queries = r.skipped_queries;
            row.trials = r.trials;
            row.mean_ap = r.mean_ap;
            row.tpr = r.tpr_at_fpr;
            rows.push_back(std::move(row));
        };
        add_row("all", all_selector(cfg.policy));
        for (const auto& sel : enumerate_intersections({true, false, false}, cfg.policy)) add_row("race", sel);
        for (const auto& sel : enumerate_intersections({false, true, false}, cfg.policy)) add_row("gender", sel);
        for (const auto& sel : enumerate_intersections({false, false, true}, cfg.policy)) add_row("age", sel);

        for (const std::string attr : {"race", "gender", "age"}) {
            std::vector<RetrievalRow*> group;
            std::vector<std::string> keys;
            std::vector<std::optional<double>> maps, tprs;
            for (auto& row : rows) {
                if (row.attribute != attr) continue;
                group.push_back(&row);
                keys.push_back(row.selector.key());
                maps.push_back(row.mean_ap);
                tprs.push_back(row.tpr);
            }
            const auto map_cells = disparity_cells(keys, maps);
            const auto tpr_cells = disparity_cells(keys, tprs);
            for (std::size_t i = 0; i < group.size(); ++i) {
                group[i]->map_disparity = map_cells[i];
                group[i]->tpr_disparity = tpr_cells[i];
            }
        }
        return rows;
    });

    // Inter/intra-group cosine statistics.
    report.similarity = detail::run_stage("similarity", [&] {
        std::vector<SimilarityRow> rows;
        SimilarityOptions opts;
        opts.identity_policy = cfg.identity_policy;
        opts.seed = cfg.seed;
        auto add_row = [&](const std::string& attribute, const SubgroupSelector& sel) {
            SimilarityRow row;
            row.attribute = attribute;
            row.selector = sel;
            try {
                const GroupSimilarityStats s = group_similarity(cohort, sel, opts);
                row.inter_mean = s.inter_mean;
                row.inter_std = s.inter_std;
                row.intra_mean = s.intra_mean;
                row.intra_std = s.intra_std;
                row.inter_count = s.inter_count;
                row.intra_count = s.intra_count;
                row.subsampled = s.subsampled;
            } catch (const input_error&) {
                // Degenerate group (fewer than 2 members or empty complement):
                // the row is emitted with undefined sentinels.
            }
            rows.push_back(std::move(row));
        };
        for (const auto& sel : enumerate_intersections({true, false, false}, cfg.policy)) add_row("race", sel);
        for (const auto& sel : enumerate_intersections({false, true, false}, cfg.policy)) add_row("gender", sel);
        for (const auto& sel : enumerate_intersections({false, false, true}, cfg.policy)) add_row("age", sel);
        return rows;
    });

    // Fairness sweep over the configured intersection grid.
    report.sweep = detail::run_stage("fairness_sweep", [&] {
        std::vector<SweepRow> rows;
        const auto selectors = enumerate_intersections(cfg.sweep_attrs, cfg.policy);
        const auto records = fairness_sweep(pairs, sp, cohort, selectors, policy, cfg.convention);
        rows.reserve(records.size());
        for (const auto& rec : records) {
            SweepRow row;
            row.record = rec;
            row.scope_key = rec.selector.race ? to_string(*rec.selector.race) : "all";
            rows.push_back(std::move(row));
        }
        // p%-rule disparity within each race block, as in the published table.
        std::set<std::string> scopes;
        for (const auto& row : rows) scopes.insert(row.scope_key);
        for (const auto& scope : scopes) {
            std::vector<SweepRow*> group;
            std::vector<std::string> keys;
            std::vector<std::optional<double>> values;
            for (auto& row : rows)
                if (row.scope_key == scope) {
                    group.push_back(&row);
                    keys.push_back(row.record.selector.key());
                    values.push_back(row.record.p_rule);
                }
            const auto cells = disparity_cells(keys, values);
            for (std::size_t i = 0; i < group.size(); ++i) group[i]->p_rule_disparity = cells[i];
        }
        return rows;
    });

    return report;
}

} // namespace fairaudit
