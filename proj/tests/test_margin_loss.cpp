#include <cmath>

#include "doctest.h"
#include "fairaudit/margin_loss.hpp"
#include "fairaudit/rng.hpp"

using namespace fairaudit;

namespace {

MarginLossParams random_params(Rng& rng, std::size_t classes, std::size_t dim, double scale, double margin) {
    MarginLossParams params;
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
    return params;
}

std::vector<double> random_unit_rows(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<double> rows(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            rows[i * dim + k] = rng.normal();
            norm += rows[i * dim + k] * rows[i * dim + k];
        }
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < dim; ++k) rows[i * dim + k] /= norm;
    }
    return rows;
}

} // namespace

TEST_CASE("m=0, s=1 reduces to softmax cross-entropy over cosine logits") {
    Rng rng(60);
    for (int trial = 0; trial < 20; ++trial) {
        MarginLossParams params = random_params(rng, 4, 8, 1.0, 0.0);
        const std::vector<double> features = random_unit_rows(rng, 6, 8);
        std::vector<long> labels;
        for (int i = 0; i < 6; ++i) labels.push_back(static_cast<long>(rng.next_below(4)));
        const MarginLossResult r = arcface_loss(features, labels, params);
        const double ce = cosine_softmax_cross_entropy(features, labels, params);
        CHECK(std::abs(r.loss - ce) < 1e-10);
    }
}

TEST_CASE("feature aligned with its center: loss vanishes as the scale grows") {
    // C=2 centers orthogonal; sample sits exactly on its class center.
    MarginLossParams params;
    params.margin = 0.0;
    params.num_classes = 2;
    params.dim = 2;
    params.class_centers = {1, 0, 0, 1};
    const std::vector<double> features = {1, 0};
    const std::vector<long> labels = {0};
    double previous = 1e9;
    for (const double s : {1.0, 4.0, 16.0, 64.0}) {
        params.scale = s;
        const double loss = arcface_loss(features, labels, params).loss;
        CHECK(loss < previous);
        previous = loss;
    }
    CHECK(previous < 1e-10);
}

TEST_CASE("hand-built two-class fixture matches a direct evaluation of the formula") {
    // Centers at angles 0 and pi/2; features at angles a0 = pi/6 (label 0)
    // and a1 = pi/3 (label 1). s = 3, m = 0.2.
    const double s = 3.0, m = 0.2;
    MarginLossParams params;
    params.scale = s;
    params.margin = m;
    params.num_classes = 2;
    params.dim = 2;
    params.class_centers = {1, 0, 0, 1};
    const double a0 = M_PI / 6.0, a1 = M_PI / 3.0;
    const std::vector<double> features = {std::cos(a0), std::sin(a0), std::cos(a1), std::sin(a1)};
    const std::vector<long> labels = {0, 1};

    // theta_0 = a0 against center 0; the other logit is cos against center 1.
    const double z00 = s * std::cos(a0 + m), z01 = s * std::cos(M_PI / 2.0 - a0);
    const double l0 = -std::log(std::exp(z00) / (std::exp(z00) + std::exp(z01)));
    // Sample 1: label 1, theta_1 = pi/2 - a1 against center 1.
    const double z11 = s * std::cos(M_PI / 2.0 - a1 + m), z10 = s * std::cos(a1);
    const double l1 = -std::log(std::exp(z11) / (std::exp(z11) + std::exp(z10)));

    const MarginLossResult r = arcface_loss(features, labels, params);
    CHECK(r.per_sample[0] == doctest::Approx(l0).epsilon(1e-12));
    CHECK(r.per_sample[1] == doctest::Approx(l1).epsilon(1e-12));
    CHECK(r.loss == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-12));
    CHECK(r.true_class_angle[0] == doctest::Approx(a0).epsilon(1e-9));
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        MarginLossParams params = random_params(rng, 4, 8, 8.0, 0.35);
        const std::vector<double> features = random_unit_rows(rng, 5, 8);
        std::vector<long> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(static_cast<long>(rng.next_below(4)));

        const std::vector<double> grad = arcface_grad(features, labels, params);
        double max_abs = 0.0;
        for (const double g : grad) max_abs = std::max(max_abs, std::abs(g));

        const double h = 1e-6;
        double max_err = 0.0;
        for (std::size_t k = 0; k < features.size(); ++k) {
            std::vector<double> plus = features, minus = features;
            plus[k] += h;
            minus[k] -= h;
            const double fd =
                (arcface_loss(plus, labels, params).loss - arcface_loss(minus, labels, params).loss) / (2 * h);
            max_err = std::max(max_err, std::abs(fd - grad[k]));
        }
        CHECK(max_err / std::max(max_abs, 1e-12) < 1e-5);
    }
}

TEST_CASE("m=0 gradient equals the softmax cross-entropy gradient within 1e-10") {
    Rng rng(62);
    MarginLossParams params = random_params(rng, 3, 6, 1.0, 0.0);
    const std::vector<double> features = random_unit_rows(rng, 4, 6);
    const std::vector<long> labels = {0, 1, 2, 1};

    const std::vector<double> grad = arcface_grad(features, labels, params);
    // Independent softmax-CE gradient over cosine logits, assembled from its
    // own algebra: dL/dx_i = (1/n) sum_c (p_c - [c=y]) * s * d cos_c / dx.
    const std::size_t dim = 6, n = 4;
    std::vector<double> reference(features.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = features.data() + i * dim;
        double x_norm = 0.0;
        for (std::size_t k = 0; k < dim; ++k) x_norm += x[k] * x[k];
        x_norm = std::sqrt(x_norm);
        std::vector<double> cosv(3), logits(3), prob(3);
        for (std::size_t c = 0; c < 3; ++c) {
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += params.center(c)[k] * x[k];
            cosv[c] = dot / x_norm;
            logits[c] = params.scale * cosv[c];
        }
        double mx = std::max({logits[0], logits[1], logits[2]});
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            prob[c] = std::exp(logits[c] - mx);
            sum += prob[c];
        }
        for (std::size_t c = 0; c < 3; ++c) prob[c] /= sum;
        for (std::size_t c = 0; c < 3; ++c) {
            const double coeff =
                (prob[c] - (static_cast<long>(c) == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n) * params.scale;
            for (std::size_t k = 0; k < dim; ++k)
                reference[i * dim + k] += coeff * (params.center(c)[k] - cosv[c] * x[k] / x_norm) / x_norm;
        }
    }
    for (std::size_t k = 0; k < grad.size(); ++k) CHECK(std::abs(grad[k] - reference[k]) < 1e-10);
}

TEST_CASE("per-sample loss is non-negative and non-decreasing in m") {
    Rng rng(63);
    MarginLossParams params = random_params(rng, 4, 8, 8.0, 0.0);
    const std::vector<double> features = random_unit_rows(rng, 6, 8);
    std::vector<long> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(static_cast<long>(rng.next_below(4)));

    std::vector<double> previous(6, -1.0);
    for (double m = 0.0; m < 1.0; m += 0.1) {
        params.margin = m;
        const MarginLossResult r = arcface_loss(features, labels, params);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(r.per_sample[i] >= 0.0);
            if (r.true_class_angle[i] + m < M_PI) CHECK(r.per_sample[i] >= previous[i]);
            previous[i] = r.per_sample[i];
        }
    }
}

TEST_CASE("aligned sample has a smaller gradient than a misclassified one") {
    MarginLossParams params;
    params.scale = 8.0;
    params.margin = 0.0;
    params.num_classes = 2;
    params.dim = 2;
    params.class_centers = {1, 0, 0, 1};
    // Sample 0 sits on its center; sample 1 sits on the WRONG center.
    const std::vector<double> features = {1, 0, 0, 1};
    const std::vector<long> labels = {0, 0};
    const std::vector<double> grad = arcface_grad(features, labels, params);
    const double g0 = std::hypot(grad[0], grad[1]);
    const double g1 = std::hypot(grad[2], grad[3]);
    CHECK(g0 < g1);
}

TEST_CASE("domain violation theta+m >= pi reports the sample") {
    MarginLossParams params;
    params.scale = 4.0;
    params.margin = 0.4;
    params.num_classes = 2;
    params.dim = 2;
    params.class_centers = {1, 0, 0, 1};
    // Feature nearly opposite its class center: theta close to pi.
    const double a = M_PI - 0.1;
    const std::vector<double> features = {std::cos(a), std::sin(a)};
    const std::vector<long> labels = {0};
    CHECK_THROWS_WITH_AS(arcface_grad(features, labels, params), doctest::Contains("samples: 0"),
                         input_error);
    // The loss itself is still evaluable there.
    CHECK(arcface_loss(features, labels, params).loss > 0.0);
}

TEST_CASE("non-normalized inputs beyond tolerance are rejected") {
    MarginLossParams params;
    params.scale = 4.0;
    params.margin = 0.1;
    params.num_classes = 2;
    params.dim = 2;
    params.class_centers = {1, 0, 0, 1};
    CHECK_THROWS_WITH_AS(arcface_loss({2.0, 0.0}, {0}, params), doctest::Contains("not unit-normalized"),
                         input_error);
    params.class_centers = {2, 0, 0, 1};
    CHECK_THROWS_WITH_AS(arcface_loss({1.0, 0.0}, {0}, params), doctest::Contains("center"), input_error);
}
