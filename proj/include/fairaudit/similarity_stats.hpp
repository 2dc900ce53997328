#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/parallel.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/types.hpp"
#include "fairaudit/verification.hpp"

namespace fairaudit {

enum class IdentityPolicy { cross_identity_only, all_pairs };

inline std::string to_string(IdentityPolicy p) {
    return p == IdentityPolicy::cross_identity_only ? "cross_identity_only" : "all_pairs";
}

// Streaming (count, mean, M2) moments; merge order is fixed by chunk index,
// so results do not depend on the worker count.
struct MomentAccumulator {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    void merge(const MomentAccumulator& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(count);
        const double nb = static_cast<double>(o.count);
        const double delta = o.mean - mean;
        const double total = na + nb;
        mean += delta * nb / total;
        m2 += o.m2 + delta * delta * na * nb / total;
        count += o.count;
    }

    double population_std() const { return count == 0 ? 0.0 : std::sqrt(m2 / static_cast<double>(count)); }
};

struct GroupSimilarityStats {
    SubgroupSelector selector;
    IdentityPolicy identity_policy = IdentityPolicy::cross_identity_only;
    std::optional<double> inter_mean, inter_std;
    std::optional<double> intra_mean, intra_std;
    std::size_t inter_count = 0;
    std::size_t intra_count = 0;
    bool subsampled = false;
};

struct SimilarityOptions {
    IdentityPolicy identity_policy = IdentityPolicy::cross_identity_only;
    std::size_t exact_pair_cap = 20'000'000;  // beyond this, seeded pair sampling
    std::size_t sample_pairs = 100'000;       // samples per statistic in subsampled mode
    std::uint64_t seed = 0;
};

namespace detail {

// Exhaustive pass over the canonical i<j enumeration. Inter pairs are the
// same set for a binary attribute's two groups and are visited in the same
// order for both, so their statistics agree bit-for-bit.
inline void exact_similarity(const AnnotatedCohort& cohort, const std::vector<char>& member,
                             IdentityPolicy identity_policy, const std::vector<double>& norms,
                             MomentAccumulator& intra, MomentAccumulator& inter) {
    const EmbeddingSet& e = cohort.embeddings();
    const std::size_t n = e.count();
    const std::size_t chunk = 256;
    const std::size_t chunks = chunk_count(n, chunk);
    std::vector<MomentAccumulator> intra_chunks(chunks), inter_chunks(chunks);

    parallel_chunks(n, chunk, [&](std::size_t c, std::size_t begin, std::size_t end) {
        MomentAccumulator& ia = intra_chunks[c];
        MomentAccumulator& ie = inter_chunks[c];
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const bool mi = member[i] != 0;
                const bool mj = member[j] != 0;
                if (!mi && !mj) continue;
                if (mi && mj) {
                    if (identity_policy == IdentityPolicy::cross_identity_only &&
                        cohort.annotation(i).identity_id == cohort.annotation(j).identity_id)
                        continue;
                    ia.add(cosine_similarity(e.row(i), e.row(j), e.dim(), norms[i], norms[j]));
                } else {
                    ie.add(cosine_similarity(e.row(i), e.row(j), e.dim(), norms[i], norms[j]));
                }
            }
        }
    });

    for (std::size_t c = 0; c < chunks; ++c) {
        intra.merge(intra_chunks[c]);
        inter.merge(inter_chunks[c]);
    }
}

// Uniform unordered pair from a member list via triangular-index decode.
inline std::pair<std::size_t, std::size_t> decode_member_pair(const std::vector<std::size_t>& members,
                                                              std::uint64_t x) {
    const std::uint64_t m = members.size();
    // First index u satisfies C(u) <= x < C(u+1) with C(u) = u*m - u(u+1)/2.
    std::uint64_t lo = 0, hi = m - 1;
    auto cum = [m](std::uint64_t u) { return u * m - u * (u + 1) / 2; };
    while (lo < hi) {
        const std::uint64_t mid = (lo + hi + 1) / 2;
        if (cum(mid) <= x)
            lo = mid;
        else
            hi = mid - 1;
    }
    const std::uint64_t u = lo;
    const std::uint64_t v = u + 1 + (x - cum(u));
    return {members[u], members[v]};
}

} // namespace detail

// Inter- and intra-group cosine statistics for one subgroup. Exact when the
// cohort's total pair count fits the cap, otherwise seeded uniform sampling
// of sample_pairs pairs per statistic.
inline GroupSimilarityStats group_similarity(const AnnotatedCohort& cohort, const SubgroupSelector& sel,
                                             const SimilarityOptions& opts = {}) {
    const EmbeddingSet& e = cohort.embeddings();
    const std::size_t n = e.count();

    std::vector<char> member(n, 0);
    std::vector<std::size_t> member_rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (sel.matches(cohort.annotation(i))) {
            member[i] = 1;
            member_rows.push_back(i);
        }
    }
    const std::size_t m = member_rows.size();
    require_input(m >= 2, "group '" + sel.key() + "' has fewer than 2 samples");
    require_input(m < n, "group '" + sel.key() + "' has an empty complement");

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = e.norm(i);

    GroupSimilarityStats out;
    out.selector = sel;
    out.identity_policy = opts.identity_policy;

    MomentAccumulator intra, inter;
    const std::uint64_t total_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    if (total_pairs <= opts.exact_pair_cap) {
        detail::exact_similarity(cohort, member, opts.identity_policy, norms, intra, inter);
    } else {
        out.subsampled = true;
        // Intra: uniform over member pairs; same-identity pairs are rejected
        // under cross_identity_only, which needs at least one cross-identity
        // pair to exist.
        bool intra_feasible = true;
        if (opts.identity_policy == IdentityPolicy::cross_identity_only) {
            std::unordered_map<std::string, std::size_t> identity_counts;
            for (const std::size_t i : member_rows) ++identity_counts[cohort.annotation(i).identity_id];
            std::size_t max_identity = 0;
            for (const auto& [id, c] : identity_counts) max_identity = std::max(max_identity, c);
            intra_feasible = max_identity < m;
        }
        RngFactory rngs(opts.seed);
        if (intra_feasible) {
            Rng rng = rngs.stream(0x1A7A);
            const std::uint64_t member_pairs = static_cast<std::uint64_t>(m) * (m - 1) / 2;
            for (std::size_t k = 0; k < opts.sample_pairs; ++k) {
                std::size_t i, j;
                do {
                    const auto [pi, pj] = detail::decode_member_pair(member_rows, rng.next_below(member_pairs));
                    i = pi;
                    j = pj;
                } while (opts.identity_policy == IdentityPolicy::cross_identity_only &&
                         cohort.annotation(i).identity_id == cohort.annotation(j).identity_id);
                intra.add(cosine_similarity(e.row(i), e.row(j), e.dim(), norms[i], norms[j]));
            }
        }

        // Inter: uniform over the canonical i<j cross enumeration. The cross
        // set and its indexing are invariant under complementing the
        // membership, so a binary attribute's two groups draw identical
        // samples from the shared stream.
        std::vector<std::uint64_t> cum(n + 1, 0);
        std::vector<std::size_t> members_after(n + 1, 0);
        for (std::size_t i = n; i-- > 0;) members_after[i] = members_after[i + 1] + (member[i] ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t after = n - i - 1;
            const std::size_t members_beyond = members_after[i + 1];
            const std::size_t cross = member[i] ? after - members_beyond : members_beyond;
            cum[i + 1] = cum[i] + cross;
        }
        const std::uint64_t total_cross = cum[n];
        require_invariant(total_cross > 0, "cross pair set unexpectedly empty");
        Rng rng = rngs.stream(0x1A7B);
        for (std::size_t k = 0; k < opts.sample_pairs; ++k) {
            const std::uint64_t x = rng.next_below(total_cross);
            const std::size_t i =
                static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), x) - cum.begin()) - 1;
            std::uint64_t offset = x - cum[i];
            // j = offset-th index > i with membership differing from member[i].
            const bool want_member = member[i] == 0;
            std::size_t lo = i + 1, hi = n - 1;
            auto differing_upto = [&](std::size_t j) {
                const std::size_t members_in_range = members_after[i + 1] - members_after[j + 1];
                return want_member ? members_in_range : (j - i) - members_in_range;
            };
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (differing_upto(mid) >= offset + 1)
                    hi = mid;
                else
                    lo = mid + 1;
            }
            inter.add(cosine_similarity(e.row(i), e.row(lo), e.dim(), norms[i], norms[lo]));
        }
    }

    out.intra_count = intra.count;
    out.inter_count = inter.count;
    if (intra.count > 0) {
        out.intra_mean = intra.mean;
        out.intra_std = intra.population_std();
    }
    if (inter.count > 0) {
        out.inter_mean = inter.mean;
        out.inter_std = inter.population_std();
    }
    return out;
}

} // namespace fairaudit
