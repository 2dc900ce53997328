#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/rng.hpp"
#include "fairaudit/types.hpp"

namespace fairaudit {

// Unordered verification trial. genuine means identity_id(a) == identity_id(b).
struct VerificationPair {
    std::string a;
    std::string b;
    bool genuine = false;
    int fold = 0;

    bool operator==(const VerificationPair& o) const {
        return a == o.a && b == o.b && genuine == o.genuine && fold == o.fold;
    }
};

// Pair CSV: `sample_a,sample_b,genuine,fold`. Genuine flags are cross-checked
// against the cohort's identities; a contradiction is an input error.
inline std::vector<VerificationPair> load_pairs(const std::string& path, const AnnotatedCohort& cohort) {
    const auto lines = csv::read_lines(path);
    require_input(!lines.empty(), path + ": malformed header: empty file");
    require_input(csv::split(lines[0]) == std::vector<std::string>({"sample_a", "sample_b", "genuine", "fold"}),
                  path + ": malformed header: expected 'sample_a,sample_b,genuine,fold'");
    std::vector<VerificationPair> out;
    std::unordered_set<std::string> seen;  // pairs are unordered: (a,b) == (b,a)
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        const std::string where = path + ": row " + std::to_string(r);
        const auto fields = csv::split(lines[r]);
        require_input(fields.size() == 4, where + ": expected 4 fields, got " + std::to_string(fields.size()));
        VerificationPair p;
        p.a = fields[0];
        p.b = fields[1];
        require_input(p.a != p.b, where + ": pair references the same sample twice: '" + p.a + "'");
        const long flag = csv::parse_long(fields[2], where);
        require_input(flag == 0 || flag == 1, where + ": genuine flag must be 0 or 1");
        p.genuine = flag == 1;
        const long fold = csv::parse_long(fields[3], where);
        require_input(fold >= 0, where + ": fold must be non-negative");
        p.fold = static_cast<int>(fold);

        const SampleAnnotation* aa;
        const SampleAnnotation* ab;
        try {
            aa = &cohort.annotation_of(p.a);
            ab = &cohort.annotation_of(p.b);
        } catch (const input_error& err) {
            throw input_error(where + ": " + err.what());
        }
        const bool same_identity = aa->identity_id == ab->identity_id;
        require_input(same_identity == p.genuine,
                      where + ": genuine flag contradiction for (" + p.a + ", " + p.b + "): file says " +
                          (p.genuine ? "1" : "0") + " but identities " + (same_identity ? "match" : "differ"));
        const std::string key = p.a < p.b ? p.a + "\x1f" + p.b : p.b + "\x1f" + p.a;
        require_input(seen.insert(key).second,
                      where + ": duplicate pair (" + p.a + ", " + p.b + "), pairs are unordered");
        out.push_back(std::move(p));
    }
    return out;
}

inline void write_pairs(const std::vector<VerificationPair>& pairs, const std::string& path) {
    std::ostringstream out;
    out << "sample_a,sample_b,genuine,fold\n";
    for (const auto& p : pairs) {
        csv::check_field(p.a);
        csv::check_field(p.b);
        out << p.a << ',' << p.b << ',' << (p.genuine ? 1 : 0) << ',' << p.fold << '\n';
    }
    csv::write_file_atomic(path, out.str());
}

// Deterministic fold protocol over a cohort. With balance=true every fold
// holds per_fold/2 genuine and per_fold/2 impostor pairs; fold assignment is
// round-robin over the shuffled per-class lists. Pairs are unordered and
// deduplicated.
inline std::vector<VerificationPair> generate_pairs(const AnnotatedCohort& cohort, std::size_t per_fold,
                                                    std::size_t folds, bool balance, std::uint64_t seed) {
    require_input(per_fold > 0 && folds > 0, "per_fold and folds must be positive");
    const std::size_t n = cohort.size();
    const std::size_t total = per_fold * folds;
    RngFactory rngs(seed);

    auto pair_key = [n](std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return i * n + j;
    };

    std::vector<VerificationPair> genuine_pairs;
    std::vector<VerificationPair> impostor_pairs;

    if (balance) {
        require_input(per_fold % 2 == 0, "infeasible counts: balanced folds need an even per_fold");
        const std::size_t genuine_target = total / 2;
        const std::size_t impostor_target = total - genuine_target;

        // Exhaustive genuine candidates, then a seeded sample without replacement.
        std::unordered_map<std::string, std::vector<std::size_t>> by_identity;
        for (std::size_t i = 0; i < n; ++i) by_identity[cohort.annotation(i).identity_id].push_back(i);
        std::vector<std::pair<std::size_t, std::size_t>> genuine_candidates;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& members = by_identity[cohort.annotation(i).identity_id];
            for (const std::size_t j : members)
                if (j > i) genuine_candidates.emplace_back(i, j);
        }
        require_input(genuine_candidates.size() >= genuine_target,
                      "infeasible counts: need " + std::to_string(genuine_target) + " genuine pairs, cohort offers " +
                          std::to_string(genuine_candidates.size()));
        Rng g = rngs.stream(1);
        g.shuffle(genuine_candidates);
        for (std::size_t k = 0; k < genuine_target; ++k) {
            const auto [i, j] = genuine_candidates[k];
            genuine_pairs.push_back({cohort.annotation(i).sample_id, cohort.annotation(j).sample_id, true, 0});
        }

        // Impostor pairs are sampled with rejection; the candidate space is
        // near-quadratic so collisions stay rare at desk scale.
        Rng im = rngs.stream(2);
        std::unordered_set<std::size_t> used;
        std::size_t attempts = 0;
        const std::size_t max_attempts = 200 * impostor_target + 1000;
        while (impostor_pairs.size() < impostor_target) {
            require_input(++attempts <= max_attempts,
                          "infeasible counts: cannot sample " + std::to_string(impostor_target) +
                              " distinct impostor pairs");
            const std::size_t i = im.index(n);
            const std::size_t j = im.index(n);
            if (i == j) continue;
            if (cohort.annotation(i).identity_id == cohort.annotation(j).identity_id) continue;
            if (!used.insert(pair_key(i, j)).second) continue;
            const std::size_t lo = std::min(i, j), hi = std::max(i, j);
            impostor_pairs.push_back({cohort.annotation(lo).sample_id, cohort.annotation(hi).sample_id, false, 0});
        }
    } else {
        // Unbalanced: uniform over all unordered sample pairs.
        require_input(n >= 2, "infeasible counts: need at least 2 samples");
        require_input(total <= n * (n - 1) / 2,
                      "infeasible counts: requested more pairs than the cohort contains");
        Rng u = rngs.stream(3);
        std::unordered_set<std::size_t> used;
        std::size_t attempts = 0;
        const std::size_t max_attempts = 200 * total + 1000;
        std::vector<VerificationPair> mixed;
        while (mixed.size() < total) {
            require_input(++attempts <= max_attempts, "infeasible counts: cannot sample distinct pairs");
            const std::size_t i = u.index(n);
            const std::size_t j = u.index(n);
            if (i == j) continue;
            if (!used.insert(pair_key(i, j)).second) continue;
            const std::size_t lo = std::min(i, j), hi = std::max(i, j);
            const bool same = cohort.annotation(lo).identity_id == cohort.annotation(hi).identity_id;
            mixed.push_back({cohort.annotation(lo).sample_id, cohort.annotation(hi).sample_id, same, 0});
        }
        for (auto& p : mixed)
            if (p.genuine)
                genuine_pairs.push_back(std::move(p));
            else
                impostor_pairs.push_back(std::move(p));
    }

    for (std::size_t k = 0; k < genuine_pairs.size(); ++k) genuine_pairs[k].fold = static_cast<int>(k % folds);
    for (std::size_t k = 0; k < impostor_pairs.size(); ++k) impostor_pairs[k].fold = static_cast<int>(k % folds);

    std::vector<VerificationPair> out;
    out.reserve(total);
    for (std::size_t f = 0; f < folds; ++f) {
        for (const auto& p : genuine_pairs)
            if (p.fold == static_cast<int>(f)) out.push_back(p);
        for (const auto& p : impostor_pairs)
            if (p.fold == static_cast<int>(f)) out.push_back(p);
    }
    return out;
}

// Cohort restricted to the samples a selector matches, keeping row order.
inline AnnotatedCohort subcohort(const AnnotatedCohort& cohort, const SubgroupSelector& sel) {
    std::vector<std::size_t> rows;
    std::vector<SampleAnnotation> annotations;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (sel.matches(cohort.annotation(i))) {
            rows.push_back(i);
            annotations.push_back(cohort.annotation(i));
        }
    }
    require_input(!rows.empty(), "selector '" + sel.key() + "' matches no samples");
    return AnnotatedCohort(cohort.embeddings().subset(rows), std::move(annotations));
}

// Pair-level subgroup membership. Both: every endpoint matches all set
// attributes. Either: at least one endpoint does. Order is preserved.
inline bool pair_in_subgroup(const VerificationPair& p, const AnnotatedCohort& cohort,
                             const SubgroupSelector& sel) {
    const bool ma = sel.matches(cohort.annotation_of(p.a));
    const bool mb = sel.matches(cohort.annotation_of(p.b));
    return sel.policy == PairPolicy::Both ? (ma && mb) : (ma || mb);
}

inline std::vector<VerificationPair> select_pairs(const std::vector<VerificationPair>& pairs,
                                                  const AnnotatedCohort& cohort, const SubgroupSelector& sel) {
    std::vector<VerificationPair> out;
    for (const auto& p : pairs)
        if (pair_in_subgroup(p, cohort, sel)) out.push_back(p);
    return out;
}

struct IntersectionAttrs {
    bool race = false;
    bool gender = false;
    bool age_bin = false;
};

// Cartesian product of the chosen attributes' values, in the fixed order
// race -> gender -> age_bin. {race} yields 4, {race,gender} 8,
// {race,age_bin} 24, {race,gender,age_bin} 48 selectors.
inline std::vector<SubgroupSelector> enumerate_intersections(const IntersectionAttrs& attrs,
                                                             PairPolicy policy = PairPolicy::Both) {
    require_input(attrs.race || attrs.gender || attrs.age_bin,
                  "enumerate_intersections requires at least one attribute");
    std::vector<SubgroupSelector> out;
    const int nr = attrs.race ? kRaceCount : 1;
    const int ng = attrs.gender ? kGenderCount : 1;
    const int na = attrs.age_bin ? kAgeBinCount : 1;
    for (int r = 0; r < nr; ++r)
        for (int g = 0; g < ng; ++g)
            for (int a = 0; a < na; ++a) {
                SubgroupSelector s;
                s.policy = policy;
                if (attrs.race) s.race = static_cast<Race>(r);
                if (attrs.gender) s.gender = static_cast<Gender>(g);
                if (attrs.age_bin) s.age_bin = a;
                out.push_back(s);
            }
    return out;
}

// Per-group protocols in the style of the per-race benchmark subsets: pairs
// are generated independently inside every cell of the given attribute grid
// (both endpoints share the cell) and merged with their fold indices.
inline std::vector<VerificationPair> generate_pairs_grouped(const AnnotatedCohort& cohort,
                                                            const IntersectionAttrs& attrs,
                                                            std::size_t per_fold, std::size_t folds,
                                                            bool balance, std::uint64_t seed) {
    std::vector<VerificationPair> out;
    const auto selectors = enumerate_intersections(attrs, PairPolicy::Both);
    const RngFactory rngs(seed);
    for (std::size_t gi = 0; gi < selectors.size(); ++gi) {
        bool populated = false;
        for (std::size_t i = 0; i < cohort.size() && !populated; ++i)
            populated = selectors[gi].matches(cohort.annotation(i));
        if (!populated) continue;  // unpopulated grid cells contribute no pairs
        const AnnotatedCohort sub = subcohort(cohort, selectors[gi]);
        const auto pairs = generate_pairs(sub, per_fold, folds, balance, rngs.derive(gi + 1));
        out.insert(out.end(), pairs.begin(), pairs.end());
    }
    require_input(!out.empty(), "no grid cell of the cohort is populated");
    return out;
}

// |age_bin(a) - age_bin(b)|, symmetric in pair order.
inline int age_gap(const VerificationPair& p, const AnnotatedCohort& cohort) {
    const int ba = cohort.annotation_of(p.a).age_bin;
    const int bb = cohort.annotation_of(p.b).age_bin;
    return ba > bb ? ba - bb : bb - ba;
}

} // namespace fairaudit
