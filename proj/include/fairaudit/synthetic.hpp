#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/types.hpp"

namespace fairaudit {

// One demographic cell of a synthetic cohort. Identity centers sit on the
// unit sphere around a per-group anchor; center_dispersion controls the
// inter-identity spread and noise_scale the within-identity compactness,
// which is exactly the knob the intra-group similarity analysis probes.
struct SubgroupSpec {
    Race race = Race::Caucasian;
    Gender gender = Gender::Male;
    int age_bin = 0;
    std::size_t identities = 1;
    std::size_t samples_per_identity = 1;
    double center_dispersion = 0.5;
    double noise_scale = 0.05;
    int sample_age_jitter = 0;  // max +- bins of per-sample age wobble
};

struct CohortSpec {
    std::size_t dim = 16;
    std::uint64_t seed = 0;
    std::vector<SubgroupSpec> groups;
};

namespace detail {

inline void gaussian_vector(Rng& rng, std::size_t dim, std::vector<double>& out) {
    out.resize(dim);
    for (double& v : out) v = rng.normal();
}

inline void renormalize(std::vector<double>& v) {
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    require_invariant(norm > 0.0, "degenerate zero vector during synthesis");
    for (double& x : v) x /= norm;
}

} // namespace detail

// Deterministic under the cohort spec's seed: every identity draws from its
// own substream, so group order and parallel generation cannot change results.
inline AnnotatedCohort generate_cohort(const CohortSpec& spec) {
    require_input(spec.dim >= 2, "cohort dimension must be >= 2");
    require_input(!spec.groups.empty(), "cohort spec has no subgroups");
    for (const auto& g : spec.groups) {
        require_input(g.identities >= 1 && g.samples_per_identity >= 1,
                      "subgroup counts must be >= 1");
        require_input(g.center_dispersion > 0.0 && g.noise_scale >= 0.0,
                      "subgroup scales must be positive");
        require_input(g.age_bin >= 0 && g.age_bin < kAgeBinCount, "subgroup age_bin out of range");
        require_input(g.sample_age_jitter >= 0 && g.sample_age_jitter < kAgeBinCount,
                      "sample_age_jitter out of range");
    }

    const RngFactory root(spec.seed);
    std::vector<std::string> ids;
    std::vector<double> values;
    std::vector<SampleAnnotation> annotations;

    std::vector<double> anchor, center, sample;
    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) {
        const SubgroupSpec& g = spec.groups[gi];
        const RngFactory group_rng = root.child(gi + 1);
        Rng anchor_rng = group_rng.stream(0);
        detail::gaussian_vector(anchor_rng, spec.dim, anchor);
        detail::renormalize(anchor);

        for (std::size_t ii = 0; ii < g.identities; ++ii) {
            Rng id_rng = group_rng.stream(ii + 1);
            detail::gaussian_vector(id_rng, spec.dim, center);
            for (std::size_t k = 0; k < spec.dim; ++k) center[k] = anchor[k] + g.center_dispersion * center[k];
            detail::renormalize(center);

            const std::string identity = "g" + std::to_string(gi) + "_id" + std::to_string(ii);
            for (std::size_t si = 0; si < g.samples_per_identity; ++si) {
                detail::gaussian_vector(id_rng, spec.dim, sample);
                for (std::size_t k = 0; k < spec.dim; ++k) sample[k] = center[k] + g.noise_scale * sample[k];
                detail::renormalize(sample);

                SampleAnnotation a;
                a.sample_id = identity + "_s" + std::to_string(si);
                a.identity_id = identity;
                a.race = g.race;
                a.gender = g.gender;
                a.age_bin = g.age_bin;
                if (g.sample_age_jitter > 0) {
                    const int span = 2 * g.sample_age_jitter + 1;
                    const int offset = static_cast<int>(id_rng.next_below(static_cast<std::uint64_t>(span))) -
                                       g.sample_age_jitter;
                    a.age_bin = std::clamp(g.age_bin + offset, 0, kAgeBinCount - 1);
                }

                ids.push_back(a.sample_id);
                values.insert(values.end(), sample.begin(), sample.end());
                annotations.push_back(std::move(a));
            }
        }
    }

    EmbeddingSet embeddings(spec.dim, std::move(ids), std::move(values), false);
    return AnnotatedCohort(std::move(embeddings), std::move(annotations));
}

// Uniform demographic grid: one subgroup per cell of the requested
// attributes, identical geometry knobs everywhere.
inline CohortSpec uniform_cohort_spec(std::size_t dim, std::uint64_t seed, bool by_race, bool by_gender,
                                      bool by_age, std::size_t identities_per_cell,
                                      std::size_t samples_per_identity, double center_dispersion,
                                      double noise_scale, int sample_age_jitter = 0) {
    CohortSpec spec;
    spec.dim = dim;
    spec.seed = seed;
    const int nr = by_race ? kRaceCount : 1;
    const int ng = by_gender ? kGenderCount : 1;
    const int na = by_age ? kAgeBinCount : 1;
    for (int r = 0; r < nr; ++r)
        for (int g = 0; g < ng; ++g)
            for (int a = 0; a < na; ++a) {
                SubgroupSpec sub;
                sub.race = static_cast<Race>(r);
                sub.gender = static_cast<Gender>(g);
                sub.age_bin = a;
                sub.identities = identities_per_cell;
                sub.samples_per_identity = samples_per_identity;
                sub.center_dispersion = center_dispersion;
                sub.noise_scale = noise_scale;
                sub.sample_age_jitter = sample_age_jitter;
                spec.groups.push_back(sub);
            }
    return spec;
}

} // namespace fairaudit
