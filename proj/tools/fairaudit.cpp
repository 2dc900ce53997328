// fairaudit: demographic bias audit for embedding-based verification and
// retrieval. Subcommands: audit, verify, retrieve, project, synth,
// loss-check, replay-tables. Exit codes: 0 ok, 2 input error, 3 internal
// invariant violation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairaudit/emit.hpp"
#include "fairaudit/margin_loss.hpp"
#include "fairaudit/oracle.hpp"
#include "fairaudit/projection.hpp"
#include "fairaudit/report.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/svg.hpp"
#include "fairaudit/synthetic.hpp"
#include "fairaudit/version.hpp"

namespace fa = fairaudit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

struct CommonIo {
    std::string embeddings;
    std::string annotations;
    std::string pairs;
    std::string metric = "cosine";
    std::string normalize = "on";
    std::string join_mode = "strict";
};

fa::Metric parse_metric(const std::string& s) {
    if (s == "cosine") return fa::Metric::cosine;
    if (s == "euclidean") return fa::Metric::euclidean_as_similarity;
    throw fa::input_error("unknown metric: '" + s + "' (expected cosine or euclidean)");
}

bool parse_on_off(const std::string& s, const char* flag) {
    if (s == "on") return true;
    if (s == "off") return false;
    throw fa::input_error(std::string("flag ") + flag + " expects on|off, got '" + s + "'");
}

fa::PairPolicy parse_policy(const std::string& s) {
    if (s == "both") return fa::PairPolicy::Both;
    if (s == "either") return fa::PairPolicy::Either;
    throw fa::input_error("unknown policy: '" + s + "' (expected both or either)");
}

fa::MistreatmentConvention parse_convention(const std::string& s) {
    if (s == "standard") return fa::MistreatmentConvention::standard;
    if (s == "as-written") return fa::MistreatmentConvention::as_written;
    throw fa::input_error("unknown convention: '" + s + "' (expected standard or as-written)");
}

fa::IdentityPolicy parse_identity_policy(const std::string& s) {
    if (s == "cross-identity") return fa::IdentityPolicy::cross_identity_only;
    if (s == "all-pairs") return fa::IdentityPolicy::all_pairs;
    throw fa::input_error("unknown identity policy: '" + s + "' (expected cross-identity or all-pairs)");
}

fa::IntersectionAttrs parse_groupby(const std::string& csv_list) {
    fa::IntersectionAttrs attrs;
    std::size_t start = 0;
    while (start <= csv_list.size()) {
        const std::size_t pos = csv_list.find(',', start);
        const std::string item = csv_list.substr(start, pos == std::string::npos ? pos : pos - start);
        if (item == "race")
            attrs.race = true;
        else if (item == "gender")
            attrs.gender = true;
        else if (item == "age_bin" || item == "age")
            attrs.age_bin = true;
        else if (!item.empty())
            throw fa::input_error("unknown groupby attribute: '" + item + "'");
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (!attrs.race && !attrs.gender && !attrs.age_bin)
        throw fa::input_error("--groupby needs at least one of race, gender, age_bin");
    return attrs;
}

std::vector<fa::EmitFormat> parse_formats(const std::string& csv_list) {
    std::vector<fa::EmitFormat> formats;
    std::size_t start = 0;
    while (start <= csv_list.size()) {
        const std::size_t pos = csv_list.find(',', start);
        const std::string item = csv_list.substr(start, pos == std::string::npos ? pos : pos - start);
        if (item == "json")
            formats.push_back(fa::EmitFormat::json);
        else if (item == "csv")
            formats.push_back(fa::EmitFormat::csv);
        else if (item == "markdown" || item == "md")
            formats.push_back(fa::EmitFormat::markdown);
        else if (!item.empty())
            throw fa::input_error("unknown format: '" + item + "'");
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (formats.empty()) throw fa::input_error("--format needs at least one of json, csv, markdown");
    return formats;
}

fa::AnnotatedCohort load_cohort(const CommonIo& io) {
    fa::EmbeddingSet e =
        fa::load_embeddings(io.embeddings, fa::detail::sniff_embedding_format(io.embeddings));
    if (parse_on_off(io.normalize, "--normalize")) e = fa::normalize(e);
    const auto annotations = fa::load_annotations(io.annotations);
    const fa::JoinMode mode = io.join_mode == "lenient" ? fa::JoinMode::lenient : fa::JoinMode::strict;
    fa::AnnotatedCohort cohort = fa::join_cohort(e, annotations, mode);
    if (cohort.dropped_embeddings || cohort.dropped_annotations)
        std::cerr << "lenient join dropped " << cohort.dropped_embeddings << " embeddings and "
                  << cohort.dropped_annotations << " annotations\n";
    return cohort;
}

int cmd_audit(const CommonIo& io, const std::string& out_dir, const std::string& formats,
              double fpr_target, double retrieval_fpr_target, const std::string& policy,
              const std::string& convention, const std::string& groupby, const std::string& threshold_policy,
              double fixed_threshold, const std::string& identity_policy, std::uint64_t seed) {
    fa::AuditConfig cfg;
    cfg.embeddings_path = io.embeddings;
    cfg.annotations_path = io.annotations;
    cfg.pairs_path = io.pairs;
    cfg.metric = parse_metric(io.metric);
    cfg.normalize_embeddings = parse_on_off(io.normalize, "--normalize");
    cfg.join_mode = io.join_mode == "lenient" ? fa::JoinMode::lenient : fa::JoinMode::strict;
    cfg.fpr_target = fpr_target;
    cfg.retrieval_fpr_target = retrieval_fpr_target;
    cfg.policy = parse_policy(policy);
    cfg.convention = parse_convention(convention);
    cfg.sweep_attrs = parse_groupby(groupby);
    cfg.identity_policy = parse_identity_policy(identity_policy);
    cfg.seed = seed;
    if (threshold_policy == "fpr")
        cfg.threshold_policy = fa::FprTargetPolicy{fpr_target};
    else if (threshold_policy == "max-accuracy")
        cfg.threshold_policy = fa::MaxAccuracyPolicy{};
    else if (threshold_policy == "fixed")
        cfg.threshold_policy = fa::FixedThresholdPolicy{fixed_threshold};
    else
        throw fa::input_error("unknown threshold policy: '" + threshold_policy + "'");

    const fa::AuditReport report = fa::run_audit(cfg);
    const auto written = fa::emit(report, parse_formats(formats), out_dir);
    for (const auto& path : written) std::cout << "wrote " << path << "\n";
    return kExitOk;
}

void print_annotator_table(const std::string& path) {
    const auto samples = fa::load_annotator_samples(path);
    std::vector<std::string> pred, truth, groups;
    for (const auto& s : samples) {
        pred.push_back(s.pred_label);
        truth.push_back(s.true_label);
        groups.push_back(s.group);
    }
    const fa::AnnotatorFprTable table = fa::annotator_fpr(pred, truth, groups);
    std::printf("\nannotator validation (one-vs-rest FPR per class within each group):\n");
    std::printf("%-16s %-16s %10s %6s %6s\n", "group", "class", "fpr", "fp", "tn");
    for (const auto& [group, classes] : table)
        for (const auto& [cls, cell] : classes)
            std::printf("%-16s %-16s %10s %6zu %6zu\n", group.c_str(), cls.c_str(),
                        cell.fpr ? fa::csv::format_fixed(*cell.fpr, 4).c_str() : "undefined",
                        cell.false_positives, cell.true_negatives);
}

int cmd_verify(const CommonIo& io, double fpr_target, const std::string& groupby, bool sliced,
               const std::string& annotator_csv, const std::string& out_dir) {
    const fa::AnnotatedCohort cohort = load_cohort(io);
    const auto pairs = fa::load_pairs(io.pairs, cohort);
    const fa::ScoredPairs sp = fa::score_pairs(pairs, cohort, parse_metric(io.metric));

    std::vector<int> folds;
    folds.reserve(pairs.size());
    for (const auto& p : pairs) folds.push_back(p.fold);

    const fa::KFoldAccuracy acc = fa::kfold_accuracy(sp, folds);
    const double tpr = fa::tpr_at_fpr(fa::roc(sp), fpr_target);
    std::printf("pairs: %zu (genuine %zu / impostor %zu), folds: %zu\n", sp.size(), sp.genuine_count(),
                sp.impostor_count(), acc.per_fold.size());
    std::printf("accuracy: %.4f ± %.4f   TPR@FPR=%.2f%%: %.4f\n", acc.mean, acc.stddev, 100.0 * fpr_target,
                tpr);

    fa::ordered_json out;
    out["schema"] = fa::kReportSchemaVersion;
    out["pairs"] = sp.size();
    out["accuracy_mean"] = acc.mean;
    out["accuracy_std"] = acc.stddev;
    out["per_fold"] = acc.per_fold;
    out["fpr_target"] = fpr_target;
    out["tpr_at_fpr"] = tpr;

    if (sliced) {
        const auto selectors = fa::enumerate_intersections(parse_groupby(groupby));
        out["slices"] = fa::ordered_json::array();
        std::printf("\n%-32s %8s %12s %12s\n", "group", "pairs", "accuracy", "tpr");
        for (const auto& sel : selectors) {
            const fa::SliceMetricsRow row =
                fa::slice_metrics(pairs, sp, cohort, sel, fpr_target);
            fa::ordered_json j = fa::slice_row_json(row);
            out["slices"].push_back(j);
            std::printf("%-32s %8zu %12s %12s\n", sel.key().c_str(), row.pairs,
                        row.accuracy_mean ? fa::csv::format_fixed(*row.accuracy_mean, 4).c_str() : "undefined",
                        row.tpr ? fa::csv::format_fixed(*row.tpr, 4).c_str() : "undefined");
        }
    }
    if (!annotator_csv.empty()) print_annotator_table(annotator_csv);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        fa::csv::write_file_atomic(out_dir + "/verify.json", out.dump(2) + "\n");
        std::cout << "wrote " << out_dir << "/verify.json\n";
    }
    return kExitOk;
}

int cmd_retrieve(const CommonIo& io, double fpr_target, const std::string& groupby,
                 const std::string& out_dir) {
    const fa::AnnotatedCohort cohort = load_cohort(io);
    const fa::Metric metric = parse_metric(io.metric);
    const fa::IntersectionAttrs attrs = parse_groupby(groupby);

    std::vector<fa::SubgroupSelector> selectors = {fa::all_selector()};
    if (attrs.race)
        for (const auto& s : fa::enumerate_intersections({true, false, false})) selectors.push_back(s);
    if (attrs.gender)
        for (const auto& s : fa::enumerate_intersections({false, true, false})) selectors.push_back(s);
    if (attrs.age_bin)
        for (const auto& s : fa::enumerate_intersections({false, false, true})) selectors.push_back(s);

    fa::ordered_json out;
    out["schema"] = fa::kReportSchemaVersion;
    out["fpr_target"] = fpr_target;
    out["rows"] = fa::ordered_json::array();
    std::printf("%-32s %8s %12s %12s %8s\n", "group", "queries", "mAP", "tpr", "skipped");
    for (const auto& sel : selectors) {
        const fa::SliceRetrieval r = fa::retrieval_for_slice(cohort, sel, metric, fpr_target);
        fa::ordered_json j;
        j["group"] = sel.is_all() ? "all" : sel.key();
        j["queries"] = r.queries;
        j["skipped_queries"] = r.skipped_queries;
        j["map"] = fa::detail::json_number(r.mean_ap);
        j["tpr_at_fpr"] = fa::detail::json_number(r.tpr_at_fpr);
        out["rows"].push_back(j);
        std::printf("%-32s %8zu %12s %12s %8zu\n", (sel.is_all() ? "all" : sel.key()).c_str(), r.queries,
                    r.mean_ap ? fa::csv::format_fixed(*r.mean_ap, 4).c_str() : "undefined",
                    r.tpr_at_fpr ? fa::csv::format_fixed(*r.tpr_at_fpr, 4).c_str() : "undefined",
                    r.skipped_queries);
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        fa::csv::write_file_atomic(out_dir + "/retrieve.json", out.dump(2) + "\n");
        std::cout << "wrote " << out_dir << "/retrieve.json\n";
    }
    return kExitOk;
}

int cmd_project(const CommonIo& io, const std::string& method, const std::string& out_dir,
                const fa::TsneConfig& tsne_cfg, const std::string& attr_list) {
    const fa::AnnotatedCohort cohort = load_cohort(io);

    fa::Projection2D proj;
    if (method == "tsne")
        proj = fa::tsne(cohort.embeddings(), tsne_cfg);
    else if (method == "pca")
        proj = fa::pca2(cohort.embeddings());
    else
        throw fa::input_error("unknown projection method: '" + method + "'");

    std::filesystem::create_directories(out_dir);

    std::vector<fa::ColorAttribute> attrs;
    const fa::IntersectionAttrs parsed = parse_groupby(attr_list);
    if (parsed.race) attrs.push_back(fa::ColorAttribute::race);
    if (parsed.gender) attrs.push_back(fa::ColorAttribute::gender);
    if (parsed.age_bin) attrs.push_back(fa::ColorAttribute::age_bin);

    for (const fa::ColorAttribute attr : attrs) {
        const std::string tag = fa::to_string(attr);
        fa::csv::write_file_atomic(out_dir + "/coords_" + tag + ".csv",
                                   fa::projection_csv(proj, cohort, attr));
        fa::csv::write_file_atomic(out_dir + "/figure_" + tag + ".svg",
                                   fa::projection_svg(proj, cohort, attr));
        std::cout << "wrote " << out_dir << "/coords_" << tag << ".csv and figure_" << tag << ".svg\n";
    }

    // Hyperparameters ride along so every figure is reproducible.
    fa::ordered_json meta;
    meta["schema"] = fa::kReportSchemaVersion;
    meta["method"] = fa::to_string(proj.method);
    meta["points"] = proj.ids.size();
    meta["final_objective"] = proj.final_objective;
    if (method == "tsne") {
        meta["perplexity"] = tsne_cfg.perplexity;
        meta["iterations"] = tsne_cfg.iterations;
        meta["learning_rate"] = tsne_cfg.learning_rate;
        meta["early_exaggeration_factor"] = tsne_cfg.early_exaggeration_factor;
        meta["early_exaggeration_iters"] = tsne_cfg.early_exaggeration_iters;
        meta["initial_momentum"] = tsne_cfg.initial_momentum;
        meta["final_momentum"] = tsne_cfg.final_momentum;
        meta["momentum_switch_iter"] = tsne_cfg.momentum_switch_iter;
        meta["seed"] = tsne_cfg.seed;
        meta["kl_log"] = fa::ordered_json::array();
        for (const auto& [iter, kl] : proj.objective_log) meta["kl_log"].push_back({{"iter", iter}, {"kl", kl}});
    } else {
        meta["retained_variance"] = proj.final_objective;
        meta["second_component_degenerate"] = proj.second_component_degenerate;
    }
    fa::csv::write_file_atomic(out_dir + "/projection.json", meta.dump(2) + "\n");
    std::cout << "wrote " << out_dir << "/projection.json\n";
    return kExitOk;
}

int cmd_synth(const std::string& out_dir, std::size_t dim, std::uint64_t seed, const std::string& attrs_list,
              std::size_t identities, std::size_t samples, double dispersion, double noise, int age_jitter,
              std::size_t folds, std::size_t per_fold, const std::string& balance,
              const std::string& pair_scope) {
    const fa::IntersectionAttrs attrs = parse_groupby(attrs_list);
    const fa::CohortSpec spec = fa::uniform_cohort_spec(dim, seed, attrs.race, attrs.gender, attrs.age_bin,
                                                        identities, samples, dispersion, noise, age_jitter);
    const fa::AnnotatedCohort cohort = fa::generate_cohort(spec);
    const bool balanced = parse_on_off(balance, "--balance");
    std::vector<fa::VerificationPair> pairs;
    if (pair_scope == "cohort")
        pairs = fa::generate_pairs(cohort, per_fold, folds, balanced, seed);
    else if (pair_scope == "race")
        pairs = fa::generate_pairs_grouped(cohort, {true, false, false}, per_fold, folds, balanced, seed);
    else if (pair_scope == "cell")
        pairs = fa::generate_pairs_grouped(cohort, attrs, per_fold, folds, balanced, seed);
    else
        throw fa::input_error("unknown pair scope: '" + pair_scope + "' (expected cohort, race or cell)");

    std::filesystem::create_directories(out_dir);
    fa::write_embeddings_binary(cohort.embeddings(), out_dir + "/embeddings.faem");
    std::vector<fa::SampleAnnotation> annotations;
    annotations.reserve(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) annotations.push_back(cohort.annotation(i));
    fa::write_annotations(annotations, out_dir + "/annotations.csv");
    fa::write_pairs(pairs, out_dir + "/pairs.csv");

    std::size_t genuine = 0;
    for (const auto& p : pairs) genuine += p.genuine;
    std::printf("cohort: %zu samples, dim %zu; pairs: %zu (%zu genuine), folds: %zu\n", cohort.size(), dim,
                pairs.size(), genuine, folds);
    std::cout << "wrote " << out_dir << "/embeddings.faem, annotations.csv, pairs.csv\n";
    return kExitOk;
}

int cmd_loss_check(std::size_t seeds, std::size_t samples, std::size_t classes, std::size_t dim, double scale,
                   double margin, double tolerance) {
    double worst = 0.0;
    std::size_t failures = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
        fa::Rng rng{fa::RngFactory(s).derive(11)};
        fa::MarginLossParams params;
        params.scale = scale;
        params.margin = margin;
        params.num_classes = classes;
        params.dim = dim;
        params.class_centers.resize(classes * dim);
        for (double& v : params.class_centers) v = rng.normal();
        for (std::size_t c = 0; c < classes; ++c) {
            double norm = 0.0;
            for (std::size_t k = 0; k < dim; ++k) norm += params.center(c)[k] * params.center(c)[k];
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < dim; ++k) params.class_centers[c * dim + k] /= norm;
        }
        std::vector<double> features(samples * dim);
        std::vector<long> labels(samples);
        for (std::size_t i = 0; i < samples; ++i) {
            double norm = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                features[i * dim + k] = rng.normal();
                norm += features[i * dim + k] * features[i * dim + k];
            }
            norm = std::sqrt(norm);
            for (std::size_t k = 0; k < dim; ++k) features[i * dim + k] /= norm;
            labels[i] = static_cast<long>(rng.next_below(classes));
        }

        const auto grad = fa::arcface_grad(features, labels, params);
        double max_abs = 0.0;
        for (const double g : grad) max_abs = std::max(max_abs, std::abs(g));
        double max_err = 0.0;
        const double h = 1e-6;
        for (std::size_t k = 0; k < features.size(); ++k) {
            std::vector<double> plus = features, minus = features;
            plus[k] += h;
            minus[k] -= h;
            const double fd =
                (fa::arcface_loss(plus, labels, params).loss - fa::arcface_loss(minus, labels, params).loss) /
                (2 * h);
            max_err = std::max(max_err, std::abs(fd - grad[k]));
        }
        const double rel = max_err / std::max(max_abs, 1e-12);
        worst = std::max(worst, rel);
        if (rel >= tolerance) ++failures;
    }
    std::printf("gradient check: %zu seeds, n=%zu C=%zu dim=%zu s=%g m=%g\n", seeds, samples, classes, dim,
                scale, margin);
    std::printf("worst relative error: %.3e (tolerance %.1e) -> %s\n", worst, tolerance,
                failures == 0 ? "PASS" : "FAIL");
    if (failures != 0) {
        std::fprintf(stderr, "%zu of %zu seeds exceeded tolerance\n", failures, seeds);
        return kExitInternal;
    }
    return kExitOk;
}

int cmd_replay(const std::string& values_path, const std::string& orientation, const std::string& formats,
               const std::string& out_dir) {
    const auto entries = fa::load_replay_values(values_path);
    fa::MetricOrientation orient;
    if (orientation == "higher")
        orient = fa::MetricOrientation::higher_is_better;
    else if (orientation == "lower")
        orient = fa::MetricOrientation::lower_is_better;
    else
        throw fa::input_error("unknown orientation: '" + orientation + "' (expected higher or lower)");

    const auto rows = fa::replay_disparities(entries, orient);
    std::cout << fa::replay_to_markdown(rows);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        for (const fa::EmitFormat f : parse_formats(formats)) {
            if (f == fa::EmitFormat::json)
                fa::csv::write_file_atomic(out_dir + "/replay.json", fa::replay_to_json(rows).dump(2) + "\n");
            else if (f == fa::EmitFormat::csv)
                fa::csv::write_file_atomic(out_dir + "/replay.csv", fa::replay_to_csv(rows));
            else
                fa::csv::write_file_atomic(out_dir + "/replay.md", fa::replay_to_markdown(rows));
        }
        std::cout << "wrote replay outputs to " << out_dir << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairaudit: demographic bias audit for embedding-based verification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(fairaudit::kToolVersion));

    CommonIo io;
    std::string out_dir, formats = "json,csv,markdown";
    double fpr_target = 0.01, retrieval_fpr_target = 0.005;
    std::string policy = "both", convention = "standard", groupby = "race,gender,age_bin";
    std::string threshold_policy = "fpr";
    std::string identity_policy = "cross-identity";
    double fixed_threshold = 0.0;
    std::uint64_t seed = 0;

    auto add_io = [&io](CLI::App* cmd, bool pairs_needed) {
        cmd->add_option("--embeddings", io.embeddings, "embedding file (FAEM binary or CSV)")->required();
        cmd->add_option("--annotations", io.annotations, "annotation CSV")->required();
        if (pairs_needed) cmd->add_option("--pairs", io.pairs, "pair protocol CSV")->required();
        cmd->add_option("--metric", io.metric, "cosine|euclidean (default cosine)");
        cmd->add_option("--normalize", io.normalize, "on|off: L2-normalize embeddings (default on)");
        cmd->add_option("--join-mode", io.join_mode, "strict|lenient (default strict)");
    };

    CLI::App* audit = app.add_subcommand("audit", "full audit report over a pair protocol");
    add_io(audit, true);
    audit->add_option("--out-dir", out_dir, "output directory")->required();
    audit->add_option("--format", formats, "comma list of json,csv,markdown (default all)");
    audit->add_option("--fpr-target", fpr_target, "verification FPR target (default 0.01)");
    audit->add_option("--retrieval-fpr-target", retrieval_fpr_target, "retrieval FPR target (default 0.005)");
    audit->add_option("--policy", policy, "pair membership policy both|either (default both)");
    audit->add_option("--convention", convention, "mistreatment convention standard|as-written");
    audit->add_option("--groupby", groupby, "fairness sweep attributes (default race,gender,age_bin)");
    audit->add_option("--threshold-policy", threshold_policy, "fpr|max-accuracy|fixed (default fpr)");
    audit->add_option("--fixed-threshold", fixed_threshold, "threshold for --threshold-policy fixed");
    audit->add_option("--identity-policy", identity_policy,
                      "cross-identity|all-pairs intra-group similarity pairs (default cross-identity)");
    audit->add_option("--seed", seed, "root seed for seeded subsampling (default 0)");

    bool verify_slices = false;
    std::string annotator_csv;
    CLI::App* verify = app.add_subcommand("verify", "k-fold accuracy and TPR@FPR for a pair protocol");
    add_io(verify, true);
    verify->add_option("--fpr-target", fpr_target, "FPR target (default 0.01)");
    verify->add_flag("--slices", verify_slices, "also report per-subgroup metrics");
    verify->add_option("--groupby", groupby, "slice attributes when --slices is set");
    verify->add_option("--annotator-validation", annotator_csv,
                       "CSV of sample_id,group,true_label,pred_label to score annotator FPR");
    verify->add_option("--out-dir", out_dir, "optional output directory for verify.json");

    CLI::App* retrieve = app.add_subcommand("retrieve", "all-vs-all retrieval mAP and TPR per group");
    add_io(retrieve, false);
    retrieve->add_option("--fpr-target", retrieval_fpr_target, "retrieval FPR target (default 0.005)");
    retrieve->add_option("--groupby", groupby, "attributes to slice (default race,gender,age_bin)");
    retrieve->add_option("--out-dir", out_dir, "optional output directory for retrieve.json");

    std::string method = "tsne", attr_list = "race,gender,age_bin";
    fairaudit::TsneConfig tsne_cfg;
    CLI::App* project = app.add_subcommand("project", "2-D t-SNE/PCA projection with SVG figures");
    add_io(project, false);
    project->add_option("--method", method, "tsne|pca (default tsne)");
    project->add_option("--out-dir", out_dir, "output directory")->required();
    project->add_option("--attr", attr_list, "color attributes (default race,gender,age_bin)");
    project->add_option("--perplexity", tsne_cfg.perplexity, "t-SNE perplexity (default 30)");
    project->add_option("--iterations", tsne_cfg.iterations, "t-SNE iterations (default 1000)");
    project->add_option("--learning-rate", tsne_cfg.learning_rate, "t-SNE learning rate (default 200)");
    project->add_option("--seed", tsne_cfg.seed, "t-SNE init seed (default 0)");

    std::size_t dim = 16, identities = 8, samples = 4, per_fold = 60, folds = 10;
    double dispersion = 0.8, noise = 0.05;
    int age_jitter = 0;
    std::string balance = "on", synth_attrs = "race,gender", pair_scope = "race";
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic annotated cohort + pair protocol");
    synth->add_option("--out-dir", out_dir, "output directory")->required();
    synth->add_option("--dim", dim, "embedding dimension (default 16)");
    synth->add_option("--seed", seed, "generation seed (default 0)");
    synth->add_option("--attrs", synth_attrs, "attributes that vary across cells (default race,gender)");
    synth->add_option("--identities", identities, "identities per demographic cell (default 8)");
    synth->add_option("--samples", samples, "samples per identity (default 4)");
    synth->add_option("--dispersion", dispersion, "identity center dispersion (default 0.8)");
    synth->add_option("--noise", noise, "within-identity noise scale (default 0.05)");
    synth->add_option("--age-jitter", age_jitter, "max per-sample age-bin wobble (default 0)");
    synth->add_option("--folds", folds, "protocol folds (default 10)");
    synth->add_option("--per-fold", per_fold, "pairs per fold (default 60)");
    synth->add_option("--balance", balance, "on|off: half genuine / half impostor per fold");
    synth->add_option("--pair-scope", pair_scope,
                      "cohort|race|cell: where pairs are drawn (default race, like per-race subsets)");

    std::size_t lc_seeds = 100, lc_samples = 5, lc_classes = 4, lc_dim = 8;
    double lc_scale = 16.0, lc_margin = 0.5, lc_tolerance = 1e-5;
    CLI::App* loss_check = app.add_subcommand("loss-check", "angular-margin loss gradient check report");
    loss_check->add_option("--seeds", lc_seeds, "random fixtures to test (default 100)");
    loss_check->add_option("--samples", lc_samples, "samples per fixture (default 5)");
    loss_check->add_option("--classes", lc_classes, "classes per fixture (default 4)");
    loss_check->add_option("--dim", lc_dim, "feature dimension (default 8)");
    loss_check->add_option("--scale", lc_scale, "scale s (default 16)");
    loss_check->add_option("--margin", lc_margin, "margin m in radians (default 0.5)");
    loss_check->add_option("--tolerance", lc_tolerance, "max relative error (default 1e-5)");

    std::string values_path, orientation = "higher";
    CLI::App* replay = app.add_subcommand("replay-tables", "re-derive disparity annotations from published values");
    replay->add_option("--values", values_path, "CSV of scope,group,value rows")->required();
    replay->add_option("--orientation", orientation, "higher|lower: which end of the scope is best");
    replay->add_option("--format", formats, "comma list of json,csv,markdown");
    replay->add_option("--out-dir", out_dir, "optional output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitInput;
    }

    try {
        if (audit->parsed())
            return cmd_audit(io, out_dir, formats, fpr_target, retrieval_fpr_target, policy, convention,
                             groupby, threshold_policy, fixed_threshold, identity_policy, seed);
        if (verify->parsed()) return cmd_verify(io, fpr_target, groupby, verify_slices, annotator_csv, out_dir);
        if (retrieve->parsed()) return cmd_retrieve(io, retrieval_fpr_target, groupby, out_dir);
        if (project->parsed()) return cmd_project(io, method, out_dir, tsne_cfg, attr_list);
        if (synth->parsed())
            return cmd_synth(out_dir, dim, seed, synth_attrs, identities, samples, dispersion, noise,
                             age_jitter, folds, per_fold, balance, pair_scope);
        if (loss_check->parsed())
            return cmd_loss_check(lc_seeds, lc_samples, lc_classes, lc_dim, lc_scale, lc_margin, lc_tolerance);
        if (replay->parsed()) return cmd_replay(values_path, orientation, formats, out_dir);
    } catch (const fairaudit::input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}
