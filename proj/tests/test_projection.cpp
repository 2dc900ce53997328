#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fairaudit/projection.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;

namespace {

EmbeddingSet blob_pair(std::uint64_t seed, std::size_t per_blob = 20, double separation = 6.0,
                       std::size_t dim = 8) {
    Rng rng(seed);
    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            ids.push_back("b" + std::to_string(b) + "_" + std::to_string(i));
            for (std::size_t k = 0; k < dim; ++k)
                values.push_back(rng.normal() + (k == 0 ? separation * static_cast<double>(b) : 0.0));
        }
    }
    return EmbeddingSet(dim, std::move(ids), std::move(values));
}

// Fraction of points a threshold along the centroid axis can classify
// correctly; a witness that a separating line exists.
double linear_probe_accuracy(const Projection2D& proj, std::size_t per_blob) {
    const std::size_t n = proj.ids.size();
    double cx0 = 0, cy0 = 0, cx1 = 0, cy1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < per_blob) {
            cx0 += proj.x(i);
            cy0 += proj.y(i);
        } else {
            cx1 += proj.x(i);
            cy1 += proj.y(i);
        }
    }
    cx0 /= static_cast<double>(per_blob);
    cy0 /= static_cast<double>(per_blob);
    cx1 /= static_cast<double>(n - per_blob);
    cy1 /= static_cast<double>(n - per_blob);
    const double dx = cx1 - cx0, dy = cy1 - cy0;

    std::vector<std::pair<double, bool>> projected;
    for (std::size_t i = 0; i < n; ++i) projected.emplace_back(proj.x(i) * dx + proj.y(i) * dy, i >= per_blob);
    std::sort(projected.begin(), projected.end());
    std::size_t best = 0;
    for (std::size_t cut = 0; cut <= n; ++cut) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool predicted_high = i >= cut;
            if (predicted_high == projected[i].second) ++correct;
        }
        best = std::max(best, std::max(correct, n - correct));
    }
    return static_cast<double>(best) / static_cast<double>(n);
}

std::vector<double> sorted_pairwise_distances(const Projection2D& proj) {
    std::vector<double> out;
    const std::size_t n = proj.ids.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            out.push_back(std::hypot(proj.x(i) - proj.x(j), proj.y(i) - proj.y(j)));
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("conditional_affinities: equidistant points give uniform rows") {
    // 4 points of a regular tetrahedron-ish distance matrix: all off-diagonal
    // squared distances equal.
    std::vector<double> d2(16, 1.0);
    for (int i = 0; i < 4; ++i) d2[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(i)] = 0.0;
    const ConditionalAffinities cond = conditional_affinities(d2, 4, 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (i == j)
                CHECK(cond.p[i * 4 + j] == 0.0);
            else
                CHECK(cond.p[i * 4 + j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }
    }
    // The entropy target log2(2) = 1 is unreachable (uniform rows pin it at
    // log2(3)); the rows are reported, not silently accepted.
    CHECK(cond.non_converged_rows.size() == 4);
}

TEST_CASE("conditional_affinities: rows sum to 1 and entropy hits log2(perplexity)") {
    Rng rng(17);
    const std::size_t n = 50;
    std::vector<double> points(n * 3);
    for (double& v : points) v = rng.normal();
    const std::vector<double> d2 = detail::pairwise_squared_distances(points.data(), n, 3);

    for (const double perplexity : {5.0, 10.0, 15.0}) {
        const ConditionalAffinities cond = conditional_affinities(d2, n, perplexity);
        CHECK(cond.non_converged_rows.empty());
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0, entropy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sum += cond.p[i * n + j];
                if (cond.p[i * n + j] > 0.0) entropy -= cond.p[i * n + j] * std::log2(cond.p[i * n + j]);
            }
            CHECK(std::abs(sum - 1.0) < 1e-9);
            CHECK(std::abs(entropy - std::log2(perplexity)) < 1e-4);
        }
    }
}

TEST_CASE("conditional_affinities: a duplicated point dominates its twin's row") {
    Rng rng(23);
    const std::size_t n = 10;
    std::vector<double> points(n * 4);
    for (double& v : points) v = rng.normal();
    for (std::size_t k = 0; k < 4; ++k) points[1 * 4 + k] = points[0 * 4 + k];  // duplicate pair 0/1
    const std::vector<double> d2 = detail::pairwise_squared_distances(points.data(), n, 4);
    const ConditionalAffinities cond = conditional_affinities(d2, n, 3.0);
    for (std::size_t j = 2; j < n; ++j) CHECK(cond.p[0 * n + 1] >= cond.p[0 * n + j]);
    for (std::size_t j = 2; j < n; ++j) CHECK(cond.p[1 * n + 0] >= cond.p[1 * n + j]);
}

TEST_CASE("tsne analytic gradient matches central finite differences") {
    Rng rng(31);
    const std::size_t n = 10;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> points(n * 4);
        for (double& v : points) v = rng.normal();
        const std::vector<double> d2 = detail::pairwise_squared_distances(points.data(), n, 4);
        const ConditionalAffinities cond = conditional_affinities(d2, n, 2.5);
        const std::vector<double> p = symmetrize_affinities(cond);

        std::vector<double> y(2 * n);
        for (double& v : y) v = rng.normal();

        const std::vector<double> grad = tsne_gradient(p, y, n);
        double max_abs = 0.0;
        for (const double g : grad) max_abs = std::max(max_abs, std::abs(g));

        const double h = 1e-5;
        double max_err = 0.0;
        for (std::size_t k = 0; k < 2 * n; ++k) {
            std::vector<double> plus = y, minus = y;
            plus[k] += h;
            minus[k] -= h;
            const double fd = (tsne_kl(p, plus, n) - tsne_kl(p, minus, n)) / (2 * h);
            max_err = std::max(max_err, std::abs(fd - grad[k]));
        }
        CHECK(max_err / std::max(max_abs, 1e-12) < 1e-4);
    }
}

TEST_CASE("tsne: fixed seed runs are bit-identical") {
    const EmbeddingSet e = blob_pair(5);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 300;
    cfg.seed = 9;
    const Projection2D a = tsne(e, cfg);
    const Projection2D b = tsne(e, cfg);
    REQUIRE(a.coordinates.size() == b.coordinates.size());
    for (std::size_t i = 0; i < a.coordinates.size(); ++i) CHECK(a.coordinates[i] == b.coordinates[i]);
    CHECK(a.final_objective == b.final_objective);
}

TEST_CASE("tsne: two separated blobs project to linearly separable clusters") {
    for (const std::uint64_t seed : {1u, 2u}) {
        const EmbeddingSet e = blob_pair(100 + seed);
        TsneConfig cfg;
        cfg.perplexity = 10.0;
        cfg.iterations = 500;
        cfg.seed = seed;
        const Projection2D proj = tsne(e, cfg);
        CHECK(linear_probe_accuracy(proj, 20) >= 0.95);
    }
}

TEST_CASE("tsne: KL stays non-negative and does not diverge after exaggeration") {
    const EmbeddingSet e = blob_pair(7);
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 600;
    cfg.seed = 3;
    cfg.log_every = 10;
    const Projection2D proj = tsne(e, cfg);

    double kl_at_exaggeration_end = -1.0;
    for (const auto& [iter, kl] : proj.objective_log) {
        CHECK(kl >= 0.0);
        if (iter >= cfg.early_exaggeration_iters && kl_at_exaggeration_end < 0.0)
            kl_at_exaggeration_end = kl;
    }
    REQUIRE(kl_at_exaggeration_end >= 0.0);
    CHECK(proj.final_objective <= kl_at_exaggeration_end + 1e-6);
}

TEST_CASE("tsne is equivariant under rigid rotations of the input") {
    const EmbeddingSet e = blob_pair(11, 15, 5.0, 4);
    TsneConfig cfg;
    cfg.perplexity = 8.0;
    cfg.iterations = 400;
    cfg.seed = 4;

    // 180-degree rotation in the (0,1) plane: exactly representable, so the
    // distance matrix and hence the whole trajectory are bit-identical.
    std::vector<double> rotated(e.values());
    for (std::size_t i = 0; i < e.count(); ++i)
        for (std::size_t k = 0; k < 2; ++k) rotated[i * e.dim() + k] = -rotated[i * e.dim() + k];
    const EmbeddingSet er(e.dim(), e.ids(), std::move(rotated));

    const Projection2D a = tsne(e, cfg);
    const Projection2D b = tsne(er, cfg);
    const auto da = sorted_pairwise_distances(a);
    const auto db = sorted_pairwise_distances(b);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i)
        max_rel = std::max(max_rel, std::abs(da[i] - db[i]) / std::max(da[i], 1e-9));
    CHECK(max_rel < 0.01);
}

TEST_CASE("tsne rejects infeasible perplexity") {
    const EmbeddingSet e = blob_pair(1, 5, 4.0, 3);  // n = 10
    TsneConfig cfg;
    cfg.perplexity = 5.0;  // needs < (10-1)/3 = 3
    CHECK_THROWS_WITH_AS(tsne(e, cfg), doctest::Contains("perplexity"), input_error);
}

TEST_CASE("pca2: points on a 2-D plane in 10-D retain all variance") {
    Rng rng(41);
    const std::size_t n = 40, dim = 10;
    std::vector<double> basis_a(dim), basis_b(dim);
    for (double& v : basis_a) v = rng.normal();
    for (double& v : basis_b) v = rng.normal();
    std::vector<std::string> ids;
    std::vector<double> values(n * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("p" + std::to_string(i));
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t k = 0; k < dim; ++k) values[i * dim + k] = a * basis_a[k] + b * basis_b[k] + 2.0;
    }
    const Projection2D proj = pca2(EmbeddingSet(dim, ids, values));
    CHECK(proj.final_objective == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(proj.second_component_degenerate);
}

TEST_CASE("pca2: isotropic cloud retains about 2/dim of the variance") {
    Rng rng(43);
    const std::size_t n = 10000, dim = 8;
    std::vector<std::string> ids;
    std::vector<double> values(n * dim);
    for (std::size_t i = 0; i < n; ++i) ids.push_back("g" + std::to_string(i));
    for (double& v : values) v = rng.normal();
    const Projection2D proj = pca2(EmbeddingSet(dim, ids, values));
    CHECK(proj.final_objective == doctest::Approx(2.0 / 8.0).epsilon(0.05));
}

TEST_CASE("pca2: duplicating the dataset preserves the principal directions") {
    Rng rng(47);
    const std::size_t n = 30, dim = 5;
    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("s" + std::to_string(i));
        for (std::size_t k = 0; k < dim; ++k) values.push_back(rng.normal() * (k == 0 ? 3.0 : 1.0));
    }
    const Projection2D once = pca2(EmbeddingSet(dim, ids, values));

    std::vector<std::string> ids2 = ids;
    for (std::size_t i = 0; i < n; ++i) ids2.push_back("dup" + std::to_string(i));
    std::vector<double> values2 = values;
    values2.insert(values2.end(), values.begin(), values.end());
    const Projection2D twice = pca2(EmbeddingSet(dim, ids2, values2));

    // Same directions -> the first n projected rows coincide.
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(once.x(i) - twice.x(i)) < 1e-9);
        CHECK(std::abs(once.y(i) - twice.y(i)) < 1e-9);
    }
}

TEST_CASE("pca2 is invariant under input translation") {
    Rng rng(53);
    const std::size_t n = 25, dim = 6;
    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("s" + std::to_string(i));
        for (std::size_t k = 0; k < dim; ++k) values.push_back(rng.normal());
    }
    std::vector<double> shifted = values;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) shifted[i * dim + k] += 7.5 * static_cast<double>(k + 1);

    const Projection2D a = pca2(EmbeddingSet(dim, ids, values));
    const Projection2D b = pca2(EmbeddingSet(dim, ids, shifted));
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(a.x(i) - b.x(i)) < 1e-8);
        CHECK(std::abs(a.y(i) - b.y(i)) < 1e-8);
    }
}

TEST_CASE("pca2 flags a rank-deficient second component") {
    // All points on a single line in 4-D.
    Rng rng(59);
    const std::size_t n = 12, dim = 4;
    std::vector<double> direction(dim);
    for (double& v : direction) v = rng.normal();
    std::vector<std::string> ids;
    std::vector<double> values;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("l" + std::to_string(i));
        const double t = rng.normal();
        for (std::size_t k = 0; k < dim; ++k) values.push_back(t * direction[k]);
    }
    const Projection2D proj = pca2(EmbeddingSet(dim, ids, values));
    CHECK(proj.second_component_degenerate);
    CHECK(proj.final_objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("symmetrized affinities sum to 1 overall") {
    Rng rng(71);
    const std::size_t n = 30;
    std::vector<double> points(n * 5);
    for (double& v : points) v = rng.normal();
    const std::vector<double> d2 = detail::pairwise_squared_distances(points.data(), n, 5);
    const std::vector<double> p = symmetrize_affinities(conditional_affinities(d2, n, 8.0));
    double total = 0.0;
    for (const double v : p) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("pca2 handles more dimensions than points via the Gram route") {
    // 6 points spanning a 2-D plane inside 20 dimensions.
    Rng rng(83);
    const std::size_t n = 6, dim = 20;
    std::vector<double> basis_a(dim), basis_b(dim);
    for (double& v : basis_a) v = rng.normal();
    for (double& v : basis_b) v = rng.normal();
    std::vector<std::string> ids;
    std::vector<double> values(n * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back("q" + std::to_string(i));
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t k = 0; k < dim; ++k) values[i * dim + k] = a * basis_a[k] + b * basis_b[k] - 1.5;
    }
    const Projection2D proj = pca2(EmbeddingSet(dim, ids, values));
    CHECK(proj.final_objective == doctest::Approx(1.0).epsilon(1e-9));

    // Projected pairwise distances must match the original ones: the data is
    // exactly 2-D, so the projection is an isometry of the centered points.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = values[i * dim + k] - values[j * dim + k];
                d2 += diff * diff;
            }
            const double p2 = std::pow(proj.x(i) - proj.x(j), 2) + std::pow(proj.y(i) - proj.y(j), 2);
            CHECK(p2 == doctest::Approx(d2).epsilon(1e-8));
        }
}
