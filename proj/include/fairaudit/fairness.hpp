#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fairaudit/error.hpp"
#include "fairaudit/protocol.hpp"
#include "fairaudit/verification.hpp"

namespace fairaudit {

// Outcomes split by the protected-group indicator t: inside is t=1,
// outside is t=0. The two pair sets are disjoint and exhaust the input.
struct GroupOutcomes {
    ConfusionCounts inside;
    ConfusionCounts outside;
};

// standard: error rates conditioned on the ground truth (FPR, FNR), the
// convention of the disparate-mistreatment literature. as_written: rates
// conditioned on the prediction, exactly as the printed definitions read
// (false discovery and false omission rates). Both ship; reports label which
// one produced each record.
enum class MistreatmentConvention { standard, as_written };

inline std::string to_string(MistreatmentConvention c) {
    return c == MistreatmentConvention::standard ? "standard" : "as_written";
}

struct DisparateMistreatment {
    std::optional<double> dfpr;
    std::optional<double> dfnr;
    std::optional<double> d_m;  // |dfpr| + |dfnr|, undefined if either side is
};

namespace detail {

inline std::optional<double> rate(std::size_t num, std::size_t denom) {
    if (denom == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(denom);
}

inline std::optional<double> rate_difference(std::optional<double> in, std::optional<double> out) {
    if (!in || !out) return std::nullopt;
    return *in - *out;
}

} // namespace detail

inline DisparateMistreatment disparate_mistreatment(const GroupOutcomes& outcomes,
                                                    MistreatmentConvention convention) {
    const ConfusionCounts& in = outcomes.inside;
    const ConfusionCounts& out = outcomes.outside;

    std::optional<double> fpr_like_in, fpr_like_out, fnr_like_in, fnr_like_out;
    if (convention == MistreatmentConvention::standard) {
        fpr_like_in = detail::rate(in.fp, in.fp + in.tn);
        fpr_like_out = detail::rate(out.fp, out.fp + out.tn);
        fnr_like_in = detail::rate(in.fn, in.fn + in.tp);
        fnr_like_out = detail::rate(out.fn, out.fn + out.tp);
    } else {
        // P(y=0 | y_hat=1, t) and P(y=1 | y_hat=0, t).
        fpr_like_in = detail::rate(in.fp, in.fp + in.tp);
        fpr_like_out = detail::rate(out.fp, out.fp + out.tp);
        fnr_like_in = detail::rate(in.fn, in.fn + in.tn);
        fnr_like_out = detail::rate(out.fn, out.fn + out.tn);
    }

    DisparateMistreatment dm;
    dm.dfpr = detail::rate_difference(fpr_like_in, fpr_like_out);
    dm.dfnr = detail::rate_difference(fnr_like_in, fnr_like_out);
    if (dm.dfpr && dm.dfnr) dm.d_m = std::abs(*dm.dfpr) + std::abs(*dm.dfnr);
    return dm;
}

// p%-rule: min ratio of positive-prediction rates between t=1 and t=0.
// Both rates zero means no positive predictions on either side, hence no
// demonstrable disparity: 1.0 by convention. One zero rate gives 0.0.
// A side with no pairs at all leaves the rule undefined.
inline std::optional<double> p_rule(const GroupOutcomes& outcomes) {
    const std::size_t n_in = outcomes.inside.total();
    const std::size_t n_out = outcomes.outside.total();
    if (n_in == 0 || n_out == 0) return std::nullopt;
    const double r_in = static_cast<double>(outcomes.inside.tp + outcomes.inside.fp) / static_cast<double>(n_in);
    const double r_out = static_cast<double>(outcomes.outside.tp + outcomes.outside.fp) / static_cast<double>(n_out);
    if (r_in == 0.0 && r_out == 0.0) return 1.0;
    if (r_in == 0.0 || r_out == 0.0) return 0.0;
    return std::min(r_in / r_out, r_out / r_in);
}

enum class DisparityMode { relative, absolute };
enum class MetricOrientation { higher_is_better, lower_is_better };

struct Disparity {
    double value = 0.0;        // signed disparity vs the baseline
    std::string baseline;      // key of the baseline element
    bool is_baseline = false;  // baseline element carries exactly 0
};

// Disparity of each value against the best defined value in its scope.
// relative: (v - best) / best; absolute: v - best. Undefined inputs yield
// undefined outputs and never become the baseline. For higher_is_better the
// baseline is the maximum and all disparities are <= 0; for lower_is_better
// (cost-like metrics such as D_M) the baseline is the minimum.
inline std::vector<std::optional<Disparity>> relative_disparity(
    const std::vector<std::string>& keys, const std::vector<std::optional<double>>& values, DisparityMode mode,
    MetricOrientation orientation = MetricOrientation::higher_is_better) {
    require_input(keys.size() == values.size(), "relative_disparity requires aligned keys and values");
    require_input(!keys.empty(), "relative_disparity scope must be non-empty");

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i]) continue;
        if (!best) {
            best = i;
            continue;
        }
        const bool better = orientation == MetricOrientation::higher_is_better ? *values[i] > *values[*best]
                                                                               : *values[i] < *values[*best];
        if (better) best = i;
    }

    std::vector<std::optional<Disparity>> out(values.size());
    if (!best) return out;  // nothing defined in this scope
    const double vb = *values[*best];
    require_input(mode != DisparityMode::relative || vb != 0.0,
                  "relative disparity undefined: baseline value is 0 for '" + keys[*best] + "'");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!values[i]) continue;
        Disparity d;
        d.baseline = keys[*best];
        d.is_baseline = i == *best;
        d.value = d.is_baseline ? 0.0
                                : (mode == DisparityMode::relative ? (*values[i] - vb) / vb : *values[i] - vb);
        out[i] = d;
    }
    return out;
}

// Global threshold policies for the fairness sweep. The audited practice is
// one shared threshold for every subgroup; the default pins it at the
// operating point with overall FPR <= target.
struct FprTargetPolicy {
    double target = 0.01;
};
struct MaxAccuracyPolicy {};
struct FixedThresholdPolicy {
    double threshold = 0.0;
};
using ThresholdPolicy = std::variant<FprTargetPolicy, MaxAccuracyPolicy, FixedThresholdPolicy>;

inline double resolve_threshold(const ScoredPairs& sp, const ThresholdPolicy& policy) {
    if (const auto* fixed = std::get_if<FixedThresholdPolicy>(&policy)) return fixed->threshold;
    if (std::holds_alternative<MaxAccuracyPolicy>(policy)) return best_threshold(sp).threshold;
    return threshold_at_fpr(roc(sp), std::get<FprTargetPolicy>(policy).target);
}

inline std::string to_string(const ThresholdPolicy& policy) {
    if (const auto* fpr = std::get_if<FprTargetPolicy>(&policy))
        return "global threshold at overall FPR <= " + csv::format_full(fpr->target);
    if (std::holds_alternative<MaxAccuracyPolicy>(policy)) return "global max-accuracy threshold";
    return "fixed threshold " + csv::format_full(std::get<FixedThresholdPolicy>(policy).threshold);
}

struct FairnessRecord {
    SubgroupSelector selector;
    std::optional<double> dfpr;
    std::optional<double> dfnr;
    std::optional<double> d_m;
    std::optional<double> p_rule;
    MistreatmentConvention convention = MistreatmentConvention::standard;
    double threshold_used = 0.0;
    std::size_t inside_pairs = 0;
    std::size_t outside_pairs = 0;
};

inline GroupOutcomes split_outcomes(const std::vector<VerificationPair>& pairs, const ScoredPairs& sp,
                                    const AnnotatedCohort& cohort, const SubgroupSelector& sel,
                                    double threshold) {
    require_input(pairs.size() == sp.size(), "pairs and scores must align");
    GroupOutcomes g;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ConfusionCounts& side = pair_in_subgroup(pairs[i], cohort, sel) ? g.inside : g.outside;
        const bool positive = sp.scores[i] >= threshold;
        if (sp.genuine[i])
            positive ? ++side.tp : ++side.fn;
        else
            positive ? ++side.fp : ++side.tn;
    }
    return g;
}

// One record per selector under a single shared threshold. Selectors with no
// inside pairs still emit a record, carrying undefined sentinels.
inline std::vector<FairnessRecord> fairness_sweep(const std::vector<VerificationPair>& pairs,
                                                  const ScoredPairs& sp, const AnnotatedCohort& cohort,
                                                  const std::vector<SubgroupSelector>& selectors,
                                                  const ThresholdPolicy& policy,
                                                  MistreatmentConvention convention) {
    const double threshold = resolve_threshold(sp, policy);
    std::vector<FairnessRecord> out;
    out.reserve(selectors.size());
    for (const auto& sel : selectors) {
        const GroupOutcomes g = split_outcomes(pairs, sp, cohort, sel, threshold);
        FairnessRecord rec;
        rec.selector = sel;
        rec.convention = convention;
        rec.threshold_used = threshold;
        rec.inside_pairs = g.inside.total();
        rec.outside_pairs = g.outside.total();
        const DisparateMistreatment dm = disparate_mistreatment(g, convention);
        rec.dfpr = dm.dfpr;
        rec.dfnr = dm.dfnr;
        rec.d_m = dm.d_m;
        rec.p_rule = p_rule(g);
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace fairaudit
