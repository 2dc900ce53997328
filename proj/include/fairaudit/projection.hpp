#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "fairaudit/csv.hpp"
#include "fairaudit/embedding_store.hpp"
#include "fairaudit/error.hpp"
#include "fairaudit/parallel.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit {

// Reference t-SNE settings: perplexity 30, 1000 iterations, learning rate
// 200, 12x early exaggeration for 250 iterations, momentum 0.5 -> 0.8 at
// iteration 250, seeded Gaussian init with std 1e-4.
struct TsneConfig {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration_factor = 12.0;
    std::size_t early_exaggeration_iters = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch_iter = 250;
    std::uint64_t seed = 0;
    std::size_t log_every = 50;
};

enum class ProjectionMethod { tsne, pca };

inline std::string to_string(ProjectionMethod m) { return m == ProjectionMethod::tsne ? "tsne" : "pca"; }

struct Projection2D {
    std::vector<std::string> ids;
    std::vector<double> coordinates;  // n x 2 row-major
    ProjectionMethod method = ProjectionMethod::tsne;
    double final_objective = 0.0;  // KL divergence for t-SNE, retained variance fraction for PCA
    std::vector<std::pair<std::size_t, double>> objective_log;  // (iteration, KL)
    bool second_component_degenerate = false;                   // PCA rank deficiency flag

    double x(std::size_t i) const { return coordinates[2 * i]; }
    double y(std::size_t i) const { return coordinates[2 * i + 1]; }
};

struct ConditionalAffinities {
    std::vector<double> p;  // n x n row-stochastic, zero diagonal
    std::vector<double> beta;
    std::vector<std::size_t> non_converged_rows;  // rows off entropy target after max bisections
    std::size_t n = 0;
};

namespace detail {

inline std::vector<double> pairwise_squared_distances(const double* data, std::size_t n, std::size_t dim) {
    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            const double* a = data + i * dim;
            const double* b = data + j * dim;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = a[k] - b[k];
                s += diff * diff;
            }
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    return d2;
}

// Row entropy in bits and the normalized row for a given precision beta.
inline double gaussian_row(const std::vector<double>& d2, std::size_t n, std::size_t i, double beta,
                           std::vector<double>& row) {
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) min_d = std::min(min_d, d2[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
            row[j] = 0.0;
            continue;
        }
        row[j] = std::exp(-beta * (d2[i * n + j] - min_d));
        sum += row[j];
    }
    double entropy_nats = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        row[j] /= sum;
        if (row[j] > 0.0) entropy_nats -= row[j] * std::log(row[j]);
    }
    return entropy_nats / std::numbers::ln2_v<double>;
}

} // namespace detail

// Per-row Gaussian affinities with the bandwidth of each row bisected until
// the row's Shannon entropy is log2(perplexity) within 1e-6 bits (200 steps
// max; rows that cannot reach the target, e.g. equidistant neighbourhoods,
// keep their best bandwidth and are reported by index).
inline ConditionalAffinities conditional_affinities(const std::vector<double>& squared_distances, std::size_t n,
                                                    double perplexity) {
    require_input(n >= 4, "conditional_affinities requires at least 4 points");
    require_input(squared_distances.size() == n * n, "distance matrix must be n x n");
    require_input(perplexity > 1.0 && perplexity <= static_cast<double>(n - 1),
                  "perplexity must lie in (1, n-1]");

    ConditionalAffinities out;
    out.n = n;
    out.p.assign(n * n, 0.0);
    out.beta.assign(n, 1.0);
    const double target_bits = std::log2(perplexity);
    constexpr double tolerance_bits = 1e-6;
    constexpr std::size_t max_steps = 200;

    std::vector<std::size_t> flagged_per_row(n, 0);
    parallel_chunks(n, 16, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> row(n, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            double beta = 1.0;
            double beta_min = -std::numeric_limits<double>::infinity();
            double beta_max = std::numeric_limits<double>::infinity();
            double entropy = detail::gaussian_row(squared_distances, n, i, beta, row);
            std::size_t step = 0;
            while (std::abs(entropy - target_bits) > tolerance_bits && step < max_steps) {
                if (entropy > target_bits) {
                    beta_min = beta;
                    beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
                } else {
                    beta_max = beta;
                    beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
                }
                entropy = detail::gaussian_row(squared_distances, n, i, beta, row);
                ++step;
            }
            if (std::abs(entropy - target_bits) > tolerance_bits) flagged_per_row[i] = 1;
            for (std::size_t j = 0; j < n; ++j) {
                require_invariant(std::isfinite(row[j]), "non-finite affinity in row " + std::to_string(i));
                out.p[i * n + j] = row[j];
            }
            out.beta[i] = beta;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        if (flagged_per_row[i]) out.non_converged_rows.push_back(i);
    return out;
}

// KL(P||Q) with the Student-t low-dimensional kernel; P entries of zero are
// skipped (0 log 0 = 0).
inline double tsne_kl(const std::vector<double>& p, const std::vector<double>& y, std::size_t n) {
    double z = 0.0;
    std::vector<double> num(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[2 * i] - y[2 * j];
            const double dy = y[2 * i + 1] - y[2 * j + 1];
            const double v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = p[i * n + j];
            if (pij <= 0.0) continue;
            const double qij = std::max(num[i * n + j] / z, 1e-300);
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

// Analytic KL gradient: dC/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2).
inline std::vector<double> tsne_gradient(const std::vector<double>& p, const std::vector<double>& y,
                                         std::size_t n) {
    std::vector<double> num(n * n, 0.0);
    std::vector<double> z_chunks(chunk_count(n, 32), 0.0);
    parallel_chunks(n, 32, [&](std::size_t c, std::size_t begin, std::size_t end) {
        double local = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double dx = y[2 * i] - y[2 * j];
                const double dy = y[2 * i + 1] - y[2 * j + 1];
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                local += v;
            }
        }
        z_chunks[c] = local;
    });
    double z = 0.0;
    for (const double v : z_chunks) z += v;

    std::vector<double> grad(2 * n, 0.0);
    parallel_chunks(n, 32, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = num[i * n + j];
                const double q = v / z;
                const double mult = 4.0 * (p[i * n + j] - q) * v;
                gx += mult * (y[2 * i] - y[2 * j]);
                gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = gx;
            grad[2 * i + 1] = gy;
        }
    });
    return grad;
}

// Symmetrized joint affinities P = (P_cond + P_cond^T) / 2n.
inline std::vector<double> symmetrize_affinities(const ConditionalAffinities& cond) {
    const std::size_t n = cond.n;
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p[i * n + j] = (cond.p[i * n + j] + cond.p[j * n + i]) / (2.0 * static_cast<double>(n));
    return p;
}

// Exact O(n^2) t-SNE. Deterministic under a fixed seed regardless of the
// worker count; throws with the iteration index if coordinates go non-finite.
inline Projection2D tsne(const EmbeddingSet& e, const TsneConfig& cfg) {
    const std::size_t n = e.count();
    require_input(n >= 8, "tsne requires at least 8 points");
    require_input(cfg.perplexity > 1.0, "perplexity must exceed 1");
    require_input(cfg.perplexity < static_cast<double>(n - 1) / 3.0,
                  "perplexity " + csv::format_full(cfg.perplexity) + " infeasible for " + std::to_string(n) +
                      " points (needs perplexity < (n-1)/3)");

    const std::vector<double> d2 = detail::pairwise_squared_distances(e.values().data(), n, e.dim());
    const ConditionalAffinities cond = conditional_affinities(d2, n, cfg.perplexity);
    const std::vector<double> p = symmetrize_affinities(cond);

    std::vector<double> p_train = p;
    for (double& v : p_train) v *= cfg.early_exaggeration_factor;

    Projection2D out;
    out.method = ProjectionMethod::tsne;
    out.ids = e.ids();
    out.coordinates.assign(2 * n, 0.0);
    Rng rng{RngFactory(cfg.seed).derive(0x7C4E)};
    for (double& c : out.coordinates) c = 1e-4 * rng.normal();

    std::vector<double> velocity(2 * n, 0.0);
    std::vector<double> gains(2 * n, 1.0);
    std::vector<double>& y = out.coordinates;
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerated = iter < cfg.early_exaggeration_iters;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;
        const std::vector<double> grad = tsne_gradient(exaggerated ? p_train : p, y, n);

        // Per-coordinate gains, the reference implementation's update rule:
        // grow when the gradient flips against the velocity, shrink otherwise.
        for (std::size_t k = 0; k < 2 * n; ++k) {
            const bool opposed = (grad[k] > 0.0) != (velocity[k] > 0.0);
            gains[k] = opposed ? gains[k] + 0.2 : gains[k] * 0.8;
            if (gains[k] < 0.01) gains[k] = 0.01;
            velocity[k] = momentum * velocity[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        // Recenter; translation is a gauge freedom of the objective.
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
            if (!std::isfinite(y[2 * i]) || !std::isfinite(y[2 * i + 1]))
                throw invariant_error("tsne numerical overflow at iteration " + std::to_string(iter));
        }

        if (cfg.log_every > 0 && ((iter + 1) % cfg.log_every == 0 || iter + 1 == cfg.iterations))
            out.objective_log.emplace_back(iter + 1, tsne_kl(p, y, n));
    }
    out.final_objective = out.objective_log.empty() ? tsne_kl(p, y, n) : out.objective_log.back().second;
    return out;
}

namespace detail {

// Cyclic Jacobi eigendecomposition for small symmetric matrices.
// Eigenvalues land on the diagonal; columns of v are eigenvectors.
inline void jacobi_eigen(std::vector<double>& a, std::vector<double>& v, std::size_t n) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    const std::size_t max_sweeps = 64;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        if (off <= 1e-28) break;
        for (std::size_t pIdx = 0; pIdx < n; ++pIdx) {
            for (std::size_t q = pIdx + 1; q < n; ++q) {
                const double apq = a[pIdx * n + q];
                if (apq == 0.0) continue;
                const double app = a[pIdx * n + pIdx];
                const double aqq = a[q * n + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + pIdx];
                    const double akq = a[k * n + q];
                    a[k * n + pIdx] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[pIdx * n + k];
                    const double aqk = a[q * n + k];
                    a[pIdx * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + pIdx];
                    const double vkq = v[k * n + q];
                    v[k * n + pIdx] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

} // namespace detail

// Mean-centered projection onto the top-2 principal directions. Sign
// convention: the largest-magnitude loading of each component is positive.
inline Projection2D pca2(const EmbeddingSet& e) {
    const std::size_t n = e.count();
    const std::size_t dim = e.dim();
    require_input(n >= 3, "pca2 requires at least 3 points");
    require_input(dim >= 2, "pca2 requires dimension >= 2");

    std::vector<double> centered(e.values());
    std::vector<double> mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) mean[k] += centered[i * dim + k];
    for (double& mk : mean) mk /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) centered[i * dim + k] -= mean[k];

    double total_variance = 0.0;
    for (const double v : centered) total_variance += v * v;
    total_variance /= static_cast<double>(n);
    require_input(total_variance > 0.0, "pca2 undefined for a constant point set");

    // Eigendecompose the smaller of the covariance (dim x dim) or Gram (n x n).
    std::vector<double> component0(dim, 0.0), component1(dim, 0.0);
    double lambda0 = 0.0, lambda1 = 0.0;
    auto extract_top2 = [](std::vector<double>& mat, std::size_t m) {
        std::vector<double> vecs;
        detail::jacobi_eigen(mat, vecs, m);
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return mat[a * m + a] > mat[b * m + b]; });
        return std::pair(order, vecs);
    };

    if (dim <= n) {
        std::vector<double> cov(dim * dim, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < dim; ++a)
                for (std::size_t b = a; b < dim; ++b) cov[a * dim + b] += centered[i * dim + a] * centered[i * dim + b];
        for (std::size_t a = 0; a < dim; ++a)
            for (std::size_t b = a; b < dim; ++b) {
                cov[a * dim + b] /= static_cast<double>(n);
                cov[b * dim + a] = cov[a * dim + b];
            }
        auto [order, vecs] = extract_top2(cov, dim);
        lambda0 = std::max(0.0, cov[order[0] * dim + order[0]]);
        lambda1 = std::max(0.0, cov[order[1] * dim + order[1]]);
        for (std::size_t k = 0; k < dim; ++k) {
            component0[k] = vecs[k * dim + order[0]];
            component1[k] = vecs[k * dim + order[1]];
        }
    } else {
        std::vector<double> gram(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < dim; ++k) s += centered[i * dim + k] * centered[j * dim + k];
                gram[i * n + j] = s / static_cast<double>(n);
                gram[j * n + i] = gram[i * n + j];
            }
        auto [order, vecs] = extract_top2(gram, n);
        lambda0 = std::max(0.0, gram[order[0] * n + order[0]]);
        lambda1 = std::max(0.0, gram[order[1] * n + order[1]]);
        for (int c = 0; c < 2; ++c) {
            std::vector<double>& comp = c == 0 ? component0 : component1;
            const std::size_t col = order[static_cast<std::size_t>(c)];
            for (std::size_t k = 0; k < dim; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += centered[i * dim + k] * vecs[i * n + col];
                comp[k] = s;
            }
            double norm = 0.0;
            for (const double v : comp) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (double& v : comp) v /= norm;
        }
    }

    auto fix_sign = [dim](std::vector<double>& comp) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < dim; ++k)
            if (std::abs(comp[k]) > std::abs(comp[arg])) arg = k;
        if (comp[arg] < 0.0)
            for (double& v : comp) v = -v;
    };
    fix_sign(component0);
    fix_sign(component1);

    Projection2D out;
    out.method = ProjectionMethod::pca;
    out.ids = e.ids();
    out.coordinates.assign(2 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double cx = 0.0, cy = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            cx += centered[i * dim + k] * component0[k];
            cy += centered[i * dim + k] * component1[k];
        }
        out.coordinates[2 * i] = cx;
        out.coordinates[2 * i + 1] = cy;
    }
    out.final_objective = (lambda0 + lambda1) / total_variance;
    out.second_component_degenerate = lambda1 <= 1e-12 * std::max(lambda0, 1e-300);
    return out;
}

} // namespace fairaudit
