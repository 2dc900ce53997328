#include <cmath>

#include "doctest.h"
#include "fairaudit/oracle.hpp"
#include "fairaudit/retrieval.hpp"
#include "fairaudit/synthetic.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;
using fairaudit::testing::make_cohort;

TEST_CASE("average_precision basics") {
    CHECK(average_precision({true}) == 1.0);
    CHECK(average_precision({true, false, false, false}) == 1.0);
    // relevant at ranks 1 and 3 of 4: (1/1 + 2/3) / 2
    CHECK(average_precision({true, false, true, false}) == (1.0 + 2.0 / 3.0) / 2.0);
    CHECK(average_precision({true, true, true}) == 1.0);  // all relevant
    // relevant only at the last rank of 5: 1/5
    CHECK(average_precision({false, false, false, false, true}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(average_precision({false, false}), input_error);
}

TEST_CASE("average_precision agrees with the definitional oracle on random rankings") {
    Rng rng(606);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<bool> relevance;
        bool any = false;
        for (int k = 0; k < 20; ++k) {
            relevance.push_back(rng.uniform() < 0.3);
            any = any || relevance.back();
        }
        if (!any) relevance[rng.index(20)] = true;
        CHECK(average_precision(relevance) == oracle::oracle_average_precision(relevance));
    }
}

TEST_CASE("retrieval: tight identities give mAP 1.0 for every slice") {
    const CohortSpec spec = uniform_cohort_spec(8, 8, true, true, false, 3, 4, 0.9, 0.01);
    const AnnotatedCohort cohort = generate_cohort(spec);
    std::vector<SubgroupSelector> selectors = {all_selector()};
    for (const auto& s : enumerate_intersections({true, false, false})) selectors.push_back(s);
    for (const auto& r : map_by_slice(cohort, selectors)) {
        REQUIRE(r.mean_ap.has_value());
        CHECK(*r.mean_ap == 1.0);
        CHECK(r.skipped_queries == 0);
    }
}

TEST_CASE("retrieval: two-identity four-sample fixture with one swapped neighbor") {
    // Vectors arranged so b1's nearest neighbor is a1 (the swap), while every
    // other sample still ranks its identity partner first.
    const AnnotatedCohort cohort = make_cohort({
        {"a1", "A", Race::Caucasian, Gender::Male, 0, {1.0, 0.0}},
        {"a2", "A", Race::Caucasian, Gender::Male, 0, {0.995, std::sqrt(1 - 0.995 * 0.995)}},
        {"b1", "B", Race::Caucasian, Gender::Male, 0, {0.999, -std::sqrt(1 - 0.999 * 0.999)}},
        {"b2", "B", Race::Caucasian, Gender::Male, 0, {0.9, -std::sqrt(1 - 0.81)}},
    });
    // Hand-computed cosines:
    //   a1: a2 0.995, b1 0.999, b2 0.9    -> ranking b1, a2, b2 -> AP = 1/2
    //   a2: a1 0.995, b1 ~0.9895, b2 ~0.876 -> a1 first -> AP = 1
    //   b1: a1 0.999, a2 ~0.9895, b2 ~0.925 -> b2 third... ranking a1, a2, b2 -> AP = 1/3
    //   b2: b1 ~0.925, a1 0.9, a2 ~0.876  -> b1 first -> AP = 1
    const SliceRetrieval r = retrieval_for_slice(cohort, all_selector());
    REQUIRE(r.mean_ap.has_value());
    CHECK(*r.mean_ap == doctest::Approx((0.5 + 1.0 + 1.0 / 3.0 + 1.0) / 4.0).epsilon(1e-12));
    CHECK(r.queries == 4);
}

TEST_CASE("retrieval: 'all' slice mAP equals the unweighted mean of per-query APs") {
    const CohortSpec spec = uniform_cohort_spec(8, 9, true, false, false, 4, 3, 0.7, 0.2);
    const AnnotatedCohort cohort = generate_cohort(spec);
    const SliceRetrieval all = retrieval_for_slice(cohort, all_selector());

    // Brute force: iterate queries, compute AP from a hand-sorted ranking.
    const EmbeddingSet& e = cohort.embeddings();
    double ap_sum = 0.0;
    std::size_t queries = 0;
    for (std::size_t q = 0; q < e.count(); ++q) {
        std::vector<std::pair<double, std::string>> scored;
        for (std::size_t d = 0; d < e.count(); ++d) {
            if (d == q) continue;
            double dot = 0.0, nq = 0.0, nd = 0.0;
            for (std::size_t k = 0; k < e.dim(); ++k) {
                dot += e.row(q)[k] * e.row(d)[k];
                nq += e.row(q)[k] * e.row(q)[k];
                nd += e.row(d)[k] * e.row(d)[k];
            }
            scored.emplace_back(dot / std::sqrt(nq * nd), e.id(d));
        }
        std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        std::vector<bool> relevance;
        bool any = false;
        for (const auto& [s, id] : scored) {
            const bool rel = cohort.annotation_of(id).identity_id == cohort.annotation(q).identity_id;
            relevance.push_back(rel);
            any = any || rel;
        }
        if (!any) continue;
        ap_sum += oracle::oracle_average_precision(relevance);
        ++queries;
    }
    REQUIRE(all.queries == queries);
    CHECK(std::abs(*all.mean_ap - ap_sum / static_cast<double>(queries)) < 1e-12);
}

TEST_CASE("retrieval: the dispersed subgroup has the lowest mAP of the sweep") {
    CohortSpec spec;
    spec.dim = 12;
    spec.seed = 31;
    for (const Race race : {Race::Caucasian, Race::African, Race::Asian, Race::Indian}) {
        SubgroupSpec g;
        g.race = race;
        g.identities = 10;
        g.samples_per_identity = 4;
        g.center_dispersion = 0.7;
        g.noise_scale = race == Race::Indian ? 0.6 : 0.08;  // Indian samples scatter widely
        spec.groups.push_back(g);
    }
    const AnnotatedCohort cohort = generate_cohort(spec);
    const auto rows = map_by_slice(cohort, enumerate_intersections({true, false, false}));
    double worst = 2.0;
    std::string worst_key;
    for (const auto& r : rows) {
        REQUIRE(r.mean_ap.has_value());
        if (*r.mean_ap < worst) {
            worst = *r.mean_ap;
            worst_key = r.selector.key();
        }
    }
    CHECK(worst_key == "Indian");
}

TEST_CASE("retrieval: singleton identities are skipped and counted") {
    const AnnotatedCohort cohort = make_cohort({
        {"a1", "A", Race::Caucasian, Gender::Male, 0, {}},
        {"a2", "A", Race::Caucasian, Gender::Male, 0, {}},
        {"lone", "L", Race::Caucasian, Gender::Male, 0, {}},
    });
    const SliceRetrieval r = retrieval_for_slice(cohort, all_selector());
    CHECK(r.queries == 2);
    CHECK(r.skipped_queries == 1);
}

TEST_CASE("retrieval mAP is invariant under strictly increasing similarity transforms") {
    // Euclidean-as-similarity is a monotone transform of cosine on the unit
    // sphere: d^2 = 2 - 2cos. Rankings and hence mAP agree exactly.
    CohortSpec spec = uniform_cohort_spec(8, 44, true, false, false, 5, 3, 0.7, 0.25);
    const AnnotatedCohort raw = generate_cohort(spec);
    // generate_cohort renormalizes samples, so rows are already unit norm.
    const auto cos_rows = map_by_slice(raw, {all_selector()}, Metric::cosine);
    const auto euc_rows = map_by_slice(raw, {all_selector()}, Metric::euclidean_as_similarity);
    CHECK(*cos_rows[0].mean_ap == *euc_rows[0].mean_ap);
}

TEST_CASE("retrieval TPR@FPR is computed over all query-document trials") {
    const CohortSpec spec = uniform_cohort_spec(8, 51, true, false, false, 6, 3, 0.8, 0.05);
    const AnnotatedCohort cohort = generate_cohort(spec);
    const SliceRetrieval r = retrieval_for_slice(cohort, all_selector(), Metric::cosine, 0.005);
    const std::size_t n = cohort.size();
    CHECK(r.trials == n * (n - 1));
    REQUIRE(r.tpr_at_fpr.has_value());
    CHECK(*r.tpr_at_fpr > 0.9);  // compact identities separate cleanly
}

TEST_CASE("AP is 1 exactly when all relevant documents precede all irrelevant ones") {
    Rng rng(717);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<bool> relevance;
        bool any = false;
        for (int k = 0; k < 12; ++k) {
            relevance.push_back(rng.uniform() < 0.4);
            any = any || relevance.back();
        }
        if (!any) relevance[rng.index(12)] = true;
        bool prefix = true;
        bool seen_irrelevant = false;
        for (const bool rel : relevance) {
            if (!rel) seen_irrelevant = true;
            if (rel && seen_irrelevant) prefix = false;
        }
        const double ap = average_precision(relevance);
        CHECK(ap > 0.0);
        CHECK(ap <= 1.0);
        CHECK((ap == 1.0) == prefix);
    }
}

TEST_CASE("retrieval_run: no self-ranking, full-length rankings, agrees with the slice path") {
    const CohortSpec spec = uniform_cohort_spec(8, 77, true, false, false, 4, 3, 0.7, 0.2);
    const AnnotatedCohort cohort = generate_cohort(spec);
    const RetrievalRun run = retrieval_run(cohort);

    REQUIRE(run.queries.size() == cohort.size());
    double ap_sum = 0.0;
    std::size_t with_relevant = 0;
    for (std::size_t qi = 0; qi < run.queries.size(); ++qi) {
        CHECK(run.ranked[qi].size() == cohort.size() - 1);
        for (const std::size_t d : run.ranked[qi]) CHECK(d != run.queries[qi]);
        bool any = false;
        for (const bool rel : run.relevance[qi]) any = any || rel;
        if (any) {
            ap_sum += average_precision(run.relevance[qi]);
            ++with_relevant;
        }
    }
    const SliceRetrieval slice = retrieval_for_slice(cohort, all_selector());
    CHECK(with_relevant == slice.queries);
    CHECK(*slice.mean_ap == ap_sum / static_cast<double>(with_relevant));
}
