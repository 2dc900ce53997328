#include <cmath>

#include "doctest.h"
#include "fairaudit/similarity_stats.hpp"
#include "fairaudit/synthetic.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;
using fairaudit::testing::make_cohort;

namespace {

SubgroupSelector gender_sel(Gender g) {
    SubgroupSelector s;
    s.gender = g;
    return s;
}

// Exhaustive double-loop reference, written independently of the
// MomentAccumulator plumbing.
struct PlainStats {
    double inter_mean = 0.0, inter_std = 0.0, intra_mean = 0.0, intra_std = 0.0;
    std::size_t inter_n = 0, intra_n = 0;
};

PlainStats brute_force(const AnnotatedCohort& cohort, const SubgroupSelector& sel, IdentityPolicy policy) {
    const EmbeddingSet& e = cohort.embeddings();
    std::vector<double> intra, inter;
    for (std::size_t i = 0; i < e.count(); ++i) {
        for (std::size_t j = i + 1; j < e.count(); ++j) {
            const bool mi = sel.matches(cohort.annotation(i));
            const bool mj = sel.matches(cohort.annotation(j));
            double dot = 0.0, ni = 0.0, nj = 0.0;
            for (std::size_t k = 0; k < e.dim(); ++k) {
                dot += e.row(i)[k] * e.row(j)[k];
                ni += e.row(i)[k] * e.row(i)[k];
                nj += e.row(j)[k] * e.row(j)[k];
            }
            const double cos = dot / std::sqrt(ni * nj);
            if (mi && mj) {
                if (policy == IdentityPolicy::cross_identity_only &&
                    cohort.annotation(i).identity_id == cohort.annotation(j).identity_id)
                    continue;
                intra.push_back(cos);
            } else if (mi != mj) {
                inter.push_back(cos);
            }
        }
    }
    PlainStats out;
    auto reduce = [](const std::vector<double>& xs, double& mean, double& stddev) {
        if (xs.empty()) return;
        double sum = 0.0;
        for (const double x : xs) sum += x;
        mean = sum / static_cast<double>(xs.size());
        double m2 = 0.0;
        for (const double x : xs) m2 += (x - mean) * (x - mean);
        stddev = std::sqrt(m2 / static_cast<double>(xs.size()));
    };
    reduce(intra, out.intra_mean, out.intra_std);
    reduce(inter, out.inter_mean, out.inter_std);
    out.intra_n = intra.size();
    out.inter_n = inter.size();
    return out;
}

} // namespace

TEST_CASE("group of identical vectors: intra mean 1, std 0 under all_pairs") {
    const AnnotatedCohort cohort = make_cohort({
        {"f1", "A", Race::Caucasian, Gender::Female, 0, {0.6, 0.8}},
        {"f2", "B", Race::Caucasian, Gender::Female, 0, {0.6, 0.8}},
        {"m1", "C", Race::Caucasian, Gender::Male, 0, {1.0, 0.0}},
    });
    SimilarityOptions opts;
    opts.identity_policy = IdentityPolicy::all_pairs;
    const GroupSimilarityStats s = group_similarity(cohort, gender_sel(Gender::Female), opts);
    REQUIRE(s.intra_mean.has_value());
    CHECK(*s.intra_mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*s.intra_std == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.intra_count == 1);
    CHECK(s.inter_count == 2);
}

TEST_CASE("binary attribute: the two genders' inter stats are exactly equal") {
    const CohortSpec spec = uniform_cohort_spec(12, 71, true, true, false, 6, 4, 0.7, 0.2);
    const AnnotatedCohort cohort = generate_cohort(spec);
    SimilarityOptions opts;
    const GroupSimilarityStats female = group_similarity(cohort, gender_sel(Gender::Female), opts);
    const GroupSimilarityStats male = group_similarity(cohort, gender_sel(Gender::Male), opts);
    REQUIRE(female.inter_mean.has_value());
    REQUIRE(male.inter_mean.has_value());
    CHECK(*female.inter_mean == *male.inter_mean);  // bitwise
    CHECK(*female.inter_std == *male.inter_std);
    CHECK(female.inter_count == male.inter_count);
}

TEST_CASE("12-sample fixture matches the exhaustive double-loop oracle to 1e-12") {
    std::vector<fairaudit::testing::SampleSpec> specs;
    for (int i = 0; i < 12; ++i) {
        fairaudit::testing::SampleSpec s;
        s.sample_id = "s" + std::to_string(i);
        s.identity_id = "id" + std::to_string(i / 3);
        s.race = static_cast<Race>(i % 4);
        s.gender = static_cast<Gender>(i % 2);
        s.age_bin = i % 6;
        specs.push_back(s);
    }
    const AnnotatedCohort cohort = make_cohort(specs, 5, 888);

    for (const IdentityPolicy policy : {IdentityPolicy::cross_identity_only, IdentityPolicy::all_pairs}) {
        SimilarityOptions opts;
        opts.identity_policy = policy;
        SubgroupSelector sel;
        sel.gender = Gender::Male;
        const GroupSimilarityStats fast = group_similarity(cohort, sel, opts);
        const PlainStats slow = brute_force(cohort, sel, policy);
        CHECK(fast.intra_count == slow.intra_n);
        CHECK(fast.inter_count == slow.inter_n);
        CHECK(std::abs(*fast.intra_mean - slow.intra_mean) < 1e-12);
        CHECK(std::abs(*fast.intra_std - slow.intra_std) < 1e-12);
        CHECK(std::abs(*fast.inter_mean - slow.inter_mean) < 1e-12);
        CHECK(std::abs(*fast.inter_std - slow.inter_std) < 1e-12);
    }
}

TEST_CASE("cross_identity_only drops same-identity pairs") {
    const AnnotatedCohort cohort = make_cohort({
        {"a1", "A", Race::Asian, Gender::Female, 0, {}},
        {"a2", "A", Race::Asian, Gender::Female, 0, {}},
        {"b1", "B", Race::Asian, Gender::Female, 0, {}},
        {"m1", "M", Race::Asian, Gender::Male, 0, {}},
    });
    SimilarityOptions cross;
    const GroupSimilarityStats s = group_similarity(cohort, gender_sel(Gender::Female), cross);
    CHECK(s.intra_count == 2);  // a1-b1, a2-b1; a1-a2 dropped
    SimilarityOptions all;
    all.identity_policy = IdentityPolicy::all_pairs;
    CHECK(group_similarity(cohort, gender_sel(Gender::Female), all).intra_count == 3);
}

TEST_CASE("unit-normalized cohorts keep every statistic within [-1, 1]") {
    const CohortSpec spec = uniform_cohort_spec(6, 13, true, false, true, 2, 3, 0.8, 0.3);
    const AnnotatedCohort cohort = generate_cohort(spec);
    for (const auto& sel : enumerate_intersections({true, false, false})) {
        const GroupSimilarityStats s = group_similarity(cohort, sel, {});
        CHECK(*s.intra_mean >= -1.0);
        CHECK(*s.intra_mean <= 1.0);
        CHECK(*s.inter_mean >= -1.0);
        CHECK(*s.inter_mean <= 1.0);
        CHECK(*s.intra_std >= 0.0);
        CHECK(*s.inter_std >= 0.0);
    }
}

TEST_CASE("intra stats are invariant under sample order permutation") {
    const CohortSpec spec = uniform_cohort_spec(8, 29, false, true, false, 5, 3, 0.7, 0.2);
    const AnnotatedCohort cohort = generate_cohort(spec);

    // Rebuild the cohort with rows in reverse order.
    std::vector<fairaudit::testing::SampleSpec> specs;
    const EmbeddingSet& e = cohort.embeddings();
    for (std::size_t i = e.count(); i-- > 0;) {
        const SampleAnnotation& a = cohort.annotation(i);
        fairaudit::testing::SampleSpec s;
        s.sample_id = a.sample_id;
        s.identity_id = a.identity_id;
        s.race = a.race;
        s.gender = a.gender;
        s.age_bin = a.age_bin;
        s.vec.assign(e.row(i), e.row(i) + e.dim());
        specs.push_back(s);
    }
    const AnnotatedCohort reversed = make_cohort(specs);

    const GroupSimilarityStats a = group_similarity(cohort, gender_sel(Gender::Female), {});
    const GroupSimilarityStats b = group_similarity(reversed, gender_sel(Gender::Female), {});
    CHECK(a.intra_count == b.intra_count);
    CHECK(std::abs(*a.intra_mean - *b.intra_mean) < 1e-12);
    CHECK(std::abs(*a.intra_std - *b.intra_std) < 1e-12);
}

TEST_CASE("degenerate groups are rejected") {
    const AnnotatedCohort cohort = make_cohort({
        {"f1", "A", Race::Caucasian, Gender::Female, 0, {}},
        {"m1", "B", Race::Caucasian, Gender::Male, 0, {}},
        {"m2", "C", Race::Caucasian, Gender::Male, 0, {}},
    });
    CHECK_THROWS_WITH_AS(group_similarity(cohort, gender_sel(Gender::Female), {}),
                         doctest::Contains("fewer than 2"), input_error);
    CHECK_THROWS_WITH_AS(group_similarity(cohort, all_selector(), {}), doctest::Contains("empty complement"),
                         input_error);
}

TEST_CASE("subsampled mode: deterministic, symmetric for binary attributes") {
    const CohortSpec spec = uniform_cohort_spec(8, 91, false, true, false, 10, 4, 0.7, 0.2);
    const AnnotatedCohort cohort = generate_cohort(spec);
    SimilarityOptions opts;
    opts.exact_pair_cap = 10;  // force sampling
    opts.sample_pairs = 5000;
    opts.seed = 33;
    const GroupSimilarityStats f1 = group_similarity(cohort, gender_sel(Gender::Female), opts);
    const GroupSimilarityStats f2 = group_similarity(cohort, gender_sel(Gender::Female), opts);
    const GroupSimilarityStats m = group_similarity(cohort, gender_sel(Gender::Male), opts);
    CHECK(f1.subsampled);
    CHECK(*f1.inter_mean == *f2.inter_mean);  // deterministic
    CHECK(*f1.inter_mean == *m.inter_mean);   // canonical cross enumeration is shared
    CHECK(f1.intra_count == opts.sample_pairs);
}

TEST_CASE("subsampled estimates converge: 3-sigma bound holds in >= 99% of trials") {
    const CohortSpec spec = uniform_cohort_spec(8, 123, true, true, false, 5, 3, 0.7, 0.25);
    const AnnotatedCohort cohort = generate_cohort(spec);
    SubgroupSelector sel = gender_sel(Gender::Female);

    const GroupSimilarityStats exact = group_similarity(cohort, sel, {});
    REQUIRE_FALSE(exact.subsampled);

    const std::size_t sample_pairs = 100000;
    int failures = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        SimilarityOptions opts;
        opts.exact_pair_cap = 1;
        opts.sample_pairs = sample_pairs;
        opts.seed = 1000 + static_cast<std::uint64_t>(t);
        const GroupSimilarityStats est = group_similarity(cohort, sel, opts);
        const double bound_intra = 3.0 * *exact.intra_std / std::sqrt(static_cast<double>(sample_pairs));
        const double bound_inter = 3.0 * *exact.inter_std / std::sqrt(static_cast<double>(sample_pairs));
        if (std::abs(*est.intra_mean - *exact.intra_mean) >= bound_intra) ++failures;
        if (std::abs(*est.inter_mean - *exact.inter_mean) >= bound_inter) ++failures;
    }
    // 200 bound checks in total; 99% per-trial success allows a couple.
    CHECK(failures <= 2 * trials / 100);
}
