#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairaudit/csv.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/report.hpp"

namespace fairaudit {

enum class EmitFormat { json, csv, markdown };

namespace detail {

inline ordered_json json_number(std::optional<double> v) {
    if (!v) return nullptr;
    if (!std::isfinite(*v)) return *v > 0 ? "+inf" : "-inf";
    return *v;
}

inline ordered_json json_number(double v) { return json_number(std::optional<double>(v)); }

inline ordered_json json_disparity(const std::optional<DisparityCell>& cell) {
    if (!cell) return nullptr;
    ordered_json j;
    j["relative"] = json_number(cell->relative);
    j["absolute"] = json_number(cell->absolute);
    j["baseline"] = cell->baseline;
    j["is_baseline"] = cell->is_baseline;
    return j;
}

inline std::string csv_number(std::optional<double> v) {
    return v ? csv::format_full(*v) : std::string("undefined");
}

inline std::string csv_disparity(const std::optional<DisparityCell>& cell) {
    if (!cell) return "undefined,undefined,undefined";
    return csv_number(cell->relative) + "," + csv_number(cell->absolute) + "," + cell->baseline;
}

// Paper-style cells: 4 decimals, relative annotation at one decimal, the
// baseline row unannotated.
inline std::string md_value(std::optional<double> v, int decimals = 4) {
    return v ? csv::format_fixed(*v, decimals) : std::string("undefined");
}

inline std::string md_annotated(std::optional<double> v, const std::optional<DisparityCell>& cell,
                                int decimals = 4) {
    if (!v) return "undefined";
    std::string out = csv::format_fixed(*v, decimals);
    if (cell && !cell->is_baseline && cell->relative) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), " (%+.1f%%)", 100.0 * *cell->relative);
        out += buf;
    }
    return out;
}

inline std::string md_acc(const SliceMetricsRow& row) {
    if (!row.accuracy_mean) return "undefined";
    return csv::format_fixed(*row.accuracy_mean, 4) + " ± " + csv::format_fixed(*row.accuracy_std, 4);
}

} // namespace detail

// JSON form of one slice row; shared by the report writer and the CLI.
inline ordered_json slice_row_json(const SliceMetricsRow& row) {
    ordered_json j;
    j["group"] = row.selector.is_all() ? "all" : row.selector.key();
    if (row.selector.race) j["race"] = to_string(*row.selector.race);
    if (row.selector.gender) j["gender"] = to_string(*row.selector.gender);
    if (row.selector.age_bin) j["age"] = age_bin_label(*row.selector.age_bin);
    j["pairs"] = row.pairs;
    j["genuine"] = row.genuine;
    j["impostor"] = row.impostor;
    j["folds_used"] = row.folds_used;
    j["accuracy_mean"] = detail::json_number(row.accuracy_mean);
    j["accuracy_std"] = detail::json_number(row.accuracy_std);
    j["tpr_at_fpr"] = detail::json_number(row.tpr);
    j["accuracy_disparity"] = detail::json_disparity(row.accuracy_disparity);
    j["tpr_disparity"] = detail::json_disparity(row.tpr_disparity);
    return j;
}

namespace detail {

inline const char* kSliceCsvHeader =
    "group,pairs,genuine,impostor,folds_used,accuracy_mean,accuracy_std,tpr_at_fpr,"
    "accuracy_disparity_relative,accuracy_disparity_absolute,accuracy_baseline,"
    "tpr_disparity_relative,tpr_disparity_absolute,tpr_baseline";

inline std::string slice_row_csv(const SliceMetricsRow& row) {
    std::ostringstream out;
    out << (row.selector.is_all() ? "all" : row.selector.key()) << ',' << row.pairs << ',' << row.genuine << ','
        << row.impostor << ',' << row.folds_used << ',' << csv_number(row.accuracy_mean) << ','
        << csv_number(row.accuracy_std) << ',' << csv_number(row.tpr) << ','
        << csv_disparity(row.accuracy_disparity) << ',' << csv_disparity(row.tpr_disparity);
    return out.str();
}

// Recompute every disparity column from its value column and require exact
// agreement with what the report carries.
inline bool same_cell(const std::optional<DisparityCell>& a, const std::optional<DisparityCell>& b) {
    if (!a != !b) return false;
    if (!a) return true;
    if (a->baseline != b->baseline || a->is_baseline != b->is_baseline) return false;
    if (a->relative.has_value() != b->relative.has_value()) return false;
    if (a->relative && *a->relative != *b->relative) return false;
    if (a->absolute.has_value() != b->absolute.has_value()) return false;
    if (a->absolute && *a->absolute != *b->absolute) return false;
    return true;
}

} // namespace detail

// Emit-time audit of the report's own arithmetic: each disparity column must
// reproduce exactly from its value column.
inline void verify_report_consistency(const AuditReport& report) {
    auto check_slices = [](const std::vector<const SliceMetricsRow*>& rows, const std::vector<std::string>& keys,
                           const char* what) {
        std::vector<std::optional<double>> accs, tprs;
        for (const auto* r : rows) {
            accs.push_back(r->accuracy_mean);
            tprs.push_back(r->tpr);
        }
        const auto acc_cells = disparity_cells(keys, accs);
        const auto tpr_cells = disparity_cells(keys, tprs);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            require_invariant(detail::same_cell(rows[i]->accuracy_disparity, acc_cells[i]),
                              std::string(what) + ": accuracy disparity column is inconsistent");
            require_invariant(detail::same_cell(rows[i]->tpr_disparity, tpr_cells[i]),
                              std::string(what) + ": TPR disparity column is inconsistent");
        }
    };

    auto by_scope = [&](const std::vector<SliceMetricsRow>& rows, const char* what) {
        std::vector<std::string> scopes;
        for (const auto& r : rows)
            if (std::find(scopes.begin(), scopes.end(), r.scope_key) == scopes.end()) scopes.push_back(r.scope_key);
        for (const auto& scope : scopes) {
            std::vector<const SliceMetricsRow*> group;
            std::vector<std::string> keys;
            for (const auto& r : rows)
                if (r.scope_key == scope) {
                    group.push_back(&r);
                    keys.push_back(r.selector.key());
                }
            check_slices(group, keys, what);
        }
    };
    by_scope(report.by_race, "by_race");
    by_scope(report.race_gender, "race_gender");
    by_scope(report.race_age, "race_age");
    by_scope(report.race_gender_age, "race_gender_age");

    for (int r = 0; r < kRaceCount; ++r) {
        std::vector<const SliceMetricsRow*> group;
        std::vector<std::string> keys;
        for (const auto& row : report.age_gap)
            if (row.race == static_cast<Race>(r)) {
                group.push_back(&row.metrics);
                keys.push_back("gap " + std::to_string(row.gap));
            }
        if (!group.empty()) check_slices(group, keys, "age_gap");
    }

    for (const std::string attr : {"race", "gender", "age"}) {
        std::vector<const RetrievalRow*> group;
        std::vector<std::string> keys;
        std::vector<std::optional<double>> maps, tprs;
        for (const auto& row : report.retrieval)
            if (row.attribute == attr) {
                group.push_back(&row);
                keys.push_back(row.selector.key());
                maps.push_back(row.mean_ap);
                tprs.push_back(row.tpr);
            }
        const auto map_cells = disparity_cells(keys, maps);
        const auto tpr_cells = disparity_cells(keys, tprs);
        for (std::size_t i = 0; i < group.size(); ++i) {
            require_invariant(detail::same_cell(group[i]->map_disparity, map_cells[i]),
                              "retrieval: mAP disparity column is inconsistent");
            require_invariant(detail::same_cell(group[i]->tpr_disparity, tpr_cells[i]),
                              "retrieval: TPR disparity column is inconsistent");
        }
    }

    std::vector<std::string> sweep_scopes;
    for (const auto& row : report.sweep)
        if (std::find(sweep_scopes.begin(), sweep_scopes.end(), row.scope_key) == sweep_scopes.end())
            sweep_scopes.push_back(row.scope_key);
    for (const auto& scope : sweep_scopes) {
        std::vector<const SweepRow*> group;
        std::vector<std::string> keys;
        std::vector<std::optional<double>> values;
        for (const auto& row : report.sweep)
            if (row.scope_key == scope) {
                group.push_back(&row);
                keys.push_back(row.record.selector.key());
                values.push_back(row.record.p_rule);
            }
        const auto cells = disparity_cells(keys, values);
        for (std::size_t i = 0; i < group.size(); ++i)
            require_invariant(detail::same_cell(group[i]->p_rule_disparity, cells[i]),
                              "fairness_sweep: p%-rule disparity column is inconsistent");
    }

    for (const auto& row : report.sweep) {
        if (!row.record.d_m) continue;
        require_invariant(*row.record.d_m == std::abs(*row.record.dfpr) + std::abs(*row.record.dfnr),
                          "fairness_sweep: D_M != |DFPR| + |DFNR| for '" + row.record.selector.key() + "'");
    }
}

inline ordered_json report_to_json(const AuditReport& report) {
    const AuditMetadata& m = report.metadata;
    ordered_json j;
    j["schema"] = kReportSchemaVersion;
    j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};

    ordered_json meta;
    meta["inputs"] = {{"embeddings", m.embeddings_path},
                      {"annotations", m.annotations_path},
                      {"pairs", m.pairs_path}};
    meta["metric"] = to_string(m.metric);
    meta["normalized"] = m.normalized;
    meta["join_mode"] = m.join_mode == JoinMode::strict ? "strict" : "lenient";
    meta["dropped_embeddings"] = m.dropped_embeddings;
    meta["dropped_annotations"] = m.dropped_annotations;
    meta["samples"] = m.samples;
    meta["identities"] = m.identities;
    meta["pairs"] = m.pairs;
    meta["folds"] = m.folds;
    meta["fpr_target"] = m.fpr_target;
    meta["retrieval_fpr_target"] = m.retrieval_fpr_target;
    meta["pair_policy"] = to_string(m.policy);
    meta["convention"] = to_string(m.convention);
    meta["identity_policy"] = to_string(m.identity_policy);
    meta["threshold_policy"] = m.threshold_policy;
    meta["global_threshold"] = detail::json_number(m.global_threshold);
    meta["seed"] = m.seed;
    meta["conventions"] = ordered_json::array(
        {"k-fold accuracy follows the LFW protocol: per-fold threshold maximizes accuracy on the complement "
         "folds; std across folds is population",
         "TPR@FPR uses the conservative step convention (largest empirical FPR <= target, no interpolation)",
         "slices admit a pair when the membership policy accepts its endpoints; 'both' requires the two "
         "endpoints to match every set attribute",
         "retrieval relevance counts every same-identity document; the document pool is the full cohort",
         "p%-rule is 1.0 when neither side has positive predictions and 0.0 when exactly one side has none",
         "disparity baselines are the best defined value in each declared scope"});
    j["metadata"] = meta;

    ordered_json sections;
    sections["overall"] = {{"rows", ordered_json::array({slice_row_json(report.overall)})}};

    auto slice_section = [](const std::vector<SliceMetricsRow>& rows, const std::string& scope) {
        ordered_json s;
        s["scope"] = scope;
        s["rows"] = ordered_json::array();
        for (const auto& r : rows) s["rows"].push_back(slice_row_json(r));
        return s;
    };
    sections["by_race"] = slice_section(report.by_race, "all races");
    sections["race_gender"] = slice_section(report.race_gender, "within race");
    sections["race_age"] = slice_section(report.race_age, "within race");
    sections["race_gender_age"] = slice_section(report.race_gender_age, "within race");

    {
        ordered_json s;
        s["scope"] = "within race";
        s["rows"] = ordered_json::array();
        for (const auto& row : report.age_gap) {
            ordered_json r = slice_row_json(row.metrics);
            r.erase("group");
            ordered_json out;
            out["race"] = to_string(row.race);
            out["age_gap"] = row.gap;
            for (auto& [k, v] : r.items())
                if (k != "race") out[k] = v;
            s["rows"].push_back(out);
        }
        sections["age_gap"] = s;
    }

    {
        ordered_json s;
        s["scope"] = "within attribute";
        s["rows"] = ordered_json::array();
        for (const auto& row : report.retrieval) {
            ordered_json r;
            r["attribute"] = row.attribute;
            r["group"] = row.selector.is_all() ? "all" : row.selector.key();
            r["queries"] = row.queries;
            r["skipped_queries"] = row.skipped_queries;
            r["trials"] = row.trials;
            r["map"] = detail::json_number(row.mean_ap);
            r["tpr_at_fpr"] = detail::json_number(row.tpr);
            r["map_disparity"] = detail::json_disparity(row.map_disparity);
            r["tpr_disparity"] = detail::json_disparity(row.tpr_disparity);
            s["rows"].push_back(r);
        }
        sections["retrieval"] = s;
    }

    {
        ordered_json s;
        s["rows"] = ordered_json::array();
        for (const auto& row : report.similarity) {
            ordered_json r;
            r["attribute"] = row.attribute;
            r["group"] = row.selector.key();
            r["inter_mean"] = detail::json_number(row.inter_mean);
            r["inter_std"] = detail::json_number(row.inter_std);
            r["inter_pairs"] = row.inter_count;
            r["intra_mean"] = detail::json_number(row.intra_mean);
            r["intra_std"] = detail::json_number(row.intra_std);
            r["intra_pairs"] = row.intra_count;
            r["subsampled"] = row.subsampled;
            s["rows"].push_back(r);
        }
        sections["similarity_stats"] = s;
    }

    {
        ordered_json s;
        s["scope"] = "p%-rule within race";
        s["rows"] = ordered_json::array();
        for (const auto& row : report.sweep) {
            const FairnessRecord& rec = row.record;
            ordered_json r;
            if (rec.selector.race) r["race"] = to_string(*rec.selector.race);
            if (rec.selector.gender) r["gender"] = to_string(*rec.selector.gender);
            if (rec.selector.age_bin) r["age"] = age_bin_label(*rec.selector.age_bin);
            r["group"] = rec.selector.key();
            r["inside_pairs"] = rec.inside_pairs;
            r["outside_pairs"] = rec.outside_pairs;
            r["p_rule"] = detail::json_number(rec.p_rule);
            r["p_rule_disparity"] = detail::json_disparity(row.p_rule_disparity);
            r["dfpr"] = detail::json_number(rec.dfpr);
            r["dfnr"] = detail::json_number(rec.dfnr);
            r["d_m"] = detail::json_number(rec.d_m);
            r["convention"] = to_string(rec.convention);
            r["threshold"] = detail::json_number(rec.threshold_used);
            s["rows"].push_back(r);
        }
        sections["fairness_sweep"] = s;
    }

    j["sections"] = sections;
    return j;
}

namespace detail {

inline std::map<std::string, std::string> report_csv_tables(const AuditReport& report) {
    std::map<std::string, std::string> tables;

    auto slice_table = [](const std::vector<const SliceMetricsRow*>& rows) {
        std::ostringstream out;
        out << kSliceCsvHeader << '\n';
        for (const auto* r : rows) out << slice_row_csv(*r) << '\n';
        return out.str();
    };

    tables["overall"] = slice_table({&report.overall});
    auto collect = [&](const std::vector<SliceMetricsRow>& rows) {
        std::vector<const SliceMetricsRow*> ptrs;
        for (const auto& r : rows) ptrs.push_back(&r);
        return slice_table(ptrs);
    };
    tables["by_race"] = collect(report.by_race);
    tables["race_gender"] = collect(report.race_gender);
    tables["race_age"] = collect(report.race_age);
    tables["race_gender_age"] = collect(report.race_gender_age);

    {
        std::ostringstream o2;
        o2 << "race,age_gap,pairs,genuine,impostor,folds_used,accuracy_mean,accuracy_std,tpr_at_fpr,"
              "accuracy_disparity_relative,accuracy_disparity_absolute,accuracy_baseline,"
              "tpr_disparity_relative,tpr_disparity_absolute,tpr_baseline\n";
        for (const auto& row : report.age_gap) {
            const SliceMetricsRow& m = row.metrics;
            o2 << to_string(row.race) << ',' << row.gap << ',' << m.pairs << ',' << m.genuine << ','
               << m.impostor << ',' << m.folds_used << ',' << csv_number(m.accuracy_mean) << ','
               << csv_number(m.accuracy_std) << ',' << csv_number(m.tpr) << ','
               << csv_disparity(m.accuracy_disparity) << ',' << csv_disparity(m.tpr_disparity) << '\n';
        }
        tables["age_gap"] = o2.str();
    }

    {
        std::ostringstream out;
        out << "attribute,group,queries,skipped_queries,trials,map,tpr_at_fpr,"
               "map_disparity_relative,map_disparity_absolute,map_baseline,"
               "tpr_disparity_relative,tpr_disparity_absolute,tpr_baseline\n";
        for (const auto& row : report.retrieval) {
            out << row.attribute << ',' << (row.selector.is_all() ? "all" : row.selector.key()) << ','
                << row.queries << ',' << row.skipped_queries << ',' << row.trials << ','
                << csv_number(row.mean_ap) << ',' << csv_number(row.tpr) << ','
                << csv_disparity(row.map_disparity) << ',' << csv_disparity(row.tpr_disparity) << '\n';
        }
        tables["retrieval"] = out.str();
    }

    {
        std::ostringstream out;
        out << "attribute,group,inter_mean,inter_std,inter_pairs,intra_mean,intra_std,intra_pairs,subsampled\n";
        for (const auto& row : report.similarity) {
            out << row.attribute << ',' << row.selector.key() << ',' << csv_number(row.inter_mean) << ','
                << csv_number(row.inter_std) << ',' << row.inter_count << ',' << csv_number(row.intra_mean)
                << ',' << csv_number(row.intra_std) << ',' << row.intra_count << ','
                << (row.subsampled ? 1 : 0) << '\n';
        }
        tables["similarity_stats"] = out.str();
    }

    {
        std::ostringstream out;
        out << "race,gender,age,p_rule,p_rule_disparity_relative,p_rule_disparity_absolute,p_rule_baseline,"
               "dfpr,dfnr,d_m,convention,threshold,inside_pairs,outside_pairs\n";
        for (const auto& row : report.sweep) {
            const FairnessRecord& rec = row.record;
            out << (rec.selector.race ? to_string(*rec.selector.race) : std::string("any")) << ','
                << (rec.selector.gender ? to_string(*rec.selector.gender) : std::string("any")) << ','
                << (rec.selector.age_bin ? age_bin_label(*rec.selector.age_bin) : std::string("any")) << ','
                << csv_number(rec.p_rule) << ',' << csv_disparity(row.p_rule_disparity) << ','
                << csv_number(rec.dfpr) << ',' << csv_number(rec.dfnr) << ',' << csv_number(rec.d_m) << ','
                << to_string(rec.convention) << ',' << csv_number(rec.threshold_used) << ','
                << rec.inside_pairs << ',' << rec.outside_pairs << '\n';
        }
        tables["fairness_sweep"] = out.str();
    }

    return tables;
}

inline std::string slice_markdown(const std::vector<SliceMetricsRow>& rows, const std::string& title,
                                  double fpr_target, bool annotate_acc) {
    std::ostringstream out;
    out << "## " << title << "\n\n";
    out << "| Group | Pairs | Accuracy ± Std | TPR@FPR=" << csv::format_fixed(100.0 * fpr_target, 1)
        << "% |\n";
    out << "|---|---|---|---|\n";
    std::set<std::string> baselines;
    for (const auto& r : rows) {
        std::string acc = md_acc(r);
        if (annotate_acc && r.accuracy_disparity && !r.accuracy_disparity->is_baseline &&
            r.accuracy_disparity->relative) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), " (%+.1f%%)", 100.0 * *r.accuracy_disparity->relative);
            acc += buf;
        }
        out << "| " << (r.selector.is_all() ? "all" : r.selector.key()) << " | " << r.pairs << " | " << acc
            << " | " << md_annotated(r.tpr, r.tpr_disparity) << " |\n";
        if (r.tpr_disparity) baselines.insert(r.tpr_disparity->baseline);
    }
    if (!baselines.empty()) {
        out << "\nBaseline (TPR): ";
        bool first = true;
        for (const auto& b : baselines) {
            if (!first) out << ", ";
            out << b;
            first = false;
        }
        out << ".\n";
    }
    out << '\n';
    return out.str();
}

} // namespace detail

inline std::string report_to_markdown(const AuditReport& report) {
    const AuditMetadata& m = report.metadata;
    std::ostringstream out;
    out << "# Fairness audit report\n\n";
    out << "- metric: " << to_string(m.metric) << ", normalized: " << (m.normalized ? "on" : "off") << "\n";
    out << "- pairs: " << m.pairs << " over " << m.samples << " samples / " << m.identities
        << " identities, folds: " << m.folds << "\n";
    out << "- threshold policy: " << m.threshold_policy
        << " (resolved threshold: " << csv::format_full(m.global_threshold) << ")\n";
    out << "- mistreatment convention: " << to_string(m.convention)
        << ", pair policy: " << to_string(m.policy) << ", identity policy: " << to_string(m.identity_policy)
        << "\n";
    out << "- seed: " << m.seed << ", tool: " << kToolName << " " << kToolVersion << "\n\n";

    out << detail::slice_markdown({report.overall}, "Overall", m.fpr_target, false);
    out << detail::slice_markdown(report.by_race, "Race", m.fpr_target, false);
    out << detail::slice_markdown(report.race_gender, "Race × Gender (scope: within race)", m.fpr_target, false);
    out << detail::slice_markdown(report.race_age, "Race × Age (scope: within race)", m.fpr_target, false);
    out << detail::slice_markdown(report.race_gender_age, "Race × Gender × Age (scope: within race)",
                                  m.fpr_target, false);

    out << "## Cross-age (scope: within race)\n\n";
    out << "| Race | Age gap | Pairs | Accuracy ± Std | TPR@FPR=" << csv::format_fixed(100.0 * m.fpr_target, 1)
        << "% |\n|---|---|---|---|---|\n";
    for (const auto& row : report.age_gap)
        out << "| " << to_string(row.race) << " | " << row.gap << " | " << row.metrics.pairs << " | "
            << detail::md_acc(row.metrics) << " | " << detail::md_annotated(row.metrics.tpr, row.metrics.tpr_disparity)
            << " |\n";
    out << '\n';

    out << "## Retrieval (scope: within attribute; TPR@FPR="
        << csv::format_fixed(100.0 * m.retrieval_fpr_target, 1) << "%)\n\n";
    out << "| Attribute | Group | Queries | mAP | TPR |\n|---|---|---|---|---|\n";
    for (const auto& row : report.retrieval)
        out << "| " << row.attribute << " | " << (row.selector.is_all() ? "all" : row.selector.key()) << " | "
            << row.queries << " | " << detail::md_annotated(row.mean_ap, row.map_disparity) << " | "
            << detail::md_annotated(row.tpr, row.tpr_disparity) << " |\n";
    out << '\n';

    out << "## Inter/intra-group cosine similarity (policy: " << to_string(m.identity_policy) << ")\n\n";
    out << "| Attribute | Group | Inter mean ± std | Intra mean ± std |\n|---|---|---|---|\n";
    for (const auto& row : report.similarity) {
        auto pair_cell = [](std::optional<double> mean, std::optional<double> std) {
            if (!mean) return std::string("undefined");
            return csv::format_fixed(*mean, 6) + " ± " + csv::format_fixed(*std, 6);
        };
        out << "| " << row.attribute << " | " << row.selector.key() << " | "
            << pair_cell(row.inter_mean, row.inter_std) << " | " << pair_cell(row.intra_mean, row.intra_std)
            << " |\n";
    }
    out << '\n';

    out << "## Fairness sweep (p%-rule scope: within race; convention: " << to_string(m.convention) << ")\n\n";
    out << "| Race | Gender | Age | p%-rule | D_M |\n|---|---|---|---|---|\n";
    for (const auto& row : report.sweep) {
        const FairnessRecord& rec = row.record;
        out << "| " << (rec.selector.race ? to_string(*rec.selector.race) : std::string("any")) << " | "
            << (rec.selector.gender ? to_string(*rec.selector.gender) : std::string("any")) << " | "
            << (rec.selector.age_bin ? age_bin_label(*rec.selector.age_bin) : std::string("any")) << " | "
            << detail::md_annotated(rec.p_rule, row.p_rule_disparity) << " | "
            << detail::md_value(rec.d_m) << " |\n";
    }
    out << '\n';
    return out.str();
}

// Writes the requested formats into out_dir. Emission is atomic per file and
// refuses to run if the report's internal arithmetic is inconsistent.
inline std::vector<std::string> emit(const AuditReport& report, const std::vector<EmitFormat>& formats,
                                     const std::string& out_dir) {
    verify_report_consistency(report);
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    for (const EmitFormat format : formats) {
        if (format == EmitFormat::json) {
            const std::string path = out_dir + "/report.json";
            csv::write_file_atomic(path, report_to_json(report).dump(2) + "\n");
            written.push_back(path);
        } else if (format == EmitFormat::markdown) {
            const std::string path = out_dir + "/report.md";
            csv::write_file_atomic(path, report_to_markdown(report));
            written.push_back(path);
        } else {
            for (const auto& [name, content] : detail::report_csv_tables(report)) {
                const std::string path = out_dir + "/report_" + name + ".csv";
                csv::write_file_atomic(path, content);
                written.push_back(path);
            }
        }
    }
    return written;
}

// ---------------------------------------------------------------------------
// Published-value replay: re-derives disparity annotations from aggregate
// numbers, the desk-scale check that the disparity arithmetic matches the
// published tables.

struct ReplayEntry {
    std::string scope;
    std::string group;
    double value = 0.0;
};

struct ReplayRow {
    ReplayEntry entry;
    std::optional<Disparity> relative;
    std::optional<Disparity> absolute;
};

inline std::vector<ReplayEntry> load_replay_values(const std::string& path) {
    const auto lines = csv::read_lines(path);
    require_input(!lines.empty(), path + ": malformed header: empty file");
    require_input(csv::split(lines[0]) == std::vector<std::string>({"scope", "group", "value"}),
                  path + ": malformed header: expected 'scope,group,value'");
    std::vector<ReplayEntry> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const auto fields = csv::split(lines[r]);
        require_input(fields.size() == 3,
                      path + ": row " + std::to_string(r) + ": expected 3 fields, got " + std::to_string(fields.size()));
        out.push_back({fields[0], fields[1], csv::parse_double(fields[2], path + ": row " + std::to_string(r))});
    }
    require_input(!out.empty(), path + ": no value rows");
    return out;
}

inline std::vector<ReplayRow> replay_disparities(const std::vector<ReplayEntry>& entries,
                                                 MetricOrientation orientation) {
    std::vector<std::string> scopes;
    for (const auto& e : entries)
        if (std::find(scopes.begin(), scopes.end(), e.scope) == scopes.end()) scopes.push_back(e.scope);

    std::vector<ReplayRow> rows(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) rows[i].entry = entries[i];

    for (const auto& scope : scopes) {
        std::vector<std::size_t> idx;
        std::vector<std::string> keys;
        std::vector<std::optional<double>> values;
        for (std::size_t i = 0; i < entries.size(); ++i)
            if (entries[i].scope == scope) {
                idx.push_back(i);
                keys.push_back(entries[i].group);
                values.push_back(entries[i].value);
            }
        std::optional<double> best;
        for (const auto& v : values)
            if (v && (!best || (orientation == MetricOrientation::higher_is_better ? *v > *best : *v < *best)))
                best = *v;
        std::vector<std::optional<Disparity>> rel;
        if (best && *best != 0.0) rel = relative_disparity(keys, values, DisparityMode::relative, orientation);
        const auto abs = relative_disparity(keys, values, DisparityMode::absolute, orientation);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (!rel.empty() && rel[k]) rows[idx[k]].relative = rel[k];
            if (abs[k]) rows[idx[k]].absolute = abs[k];
        }
    }
    return rows;
}

inline std::string replay_to_markdown(const std::vector<ReplayRow>& rows) {
    std::ostringstream out;
    out << "| Scope | Group | Value | Disparity | Baseline |\n|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        std::string annotation = "baseline";
        if (r.relative && !r.relative->is_baseline) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%+.1f%%", 100.0 * r.relative->value);
            annotation = buf;
        } else if (!r.relative && r.absolute && !r.absolute->is_baseline) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%+.2f pp", 100.0 * r.absolute->value);
            annotation = buf;
        }
        out << "| " << r.entry.scope << " | " << r.entry.group << " | " << csv::format_fixed(r.entry.value, 4)
            << " | " << annotation << " | " << (r.absolute ? r.absolute->baseline : std::string("undefined"))
            << " |\n";
    }
    return out.str();
}

inline std::string replay_to_csv(const std::vector<ReplayRow>& rows) {
    std::ostringstream out;
    out << "scope,group,value,relative,absolute,baseline,is_baseline\n";
    for (const auto& r : rows) {
        out << r.entry.scope << ',' << r.entry.group << ',' << csv::format_full(r.entry.value) << ','
            << (r.relative ? csv::format_full(r.relative->value) : std::string("undefined")) << ','
            << (r.absolute ? csv::format_full(r.absolute->value) : std::string("undefined")) << ','
            << (r.absolute ? r.absolute->baseline : std::string("undefined")) << ','
            << (r.absolute && r.absolute->is_baseline ? 1 : 0) << '\n';
    }
    return out.str();
}

inline ordered_json replay_to_json(const std::vector<ReplayRow>& rows) {
    ordered_json j;
    j["schema"] = kReportSchemaVersion;
    j["rows"] = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json row;
        row["scope"] = r.entry.scope;
        row["group"] = r.entry.group;
        row["value"] = r.entry.value;
        row["relative"] = r.relative ? ordered_json(r.relative->value) : ordered_json(nullptr);
        row["absolute"] = r.absolute ? ordered_json(r.absolute->value) : ordered_json(nullptr);
        row["baseline"] = r.absolute ? ordered_json(r.absolute->baseline) : ordered_json(nullptr);
        row["is_baseline"] = r.absolute ? ordered_json(r.absolute->is_baseline) : ordered_json(nullptr);
        j["rows"].push_back(row);
    }
    return j;
}

} // namespace fairaudit
