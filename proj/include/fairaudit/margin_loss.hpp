#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fairaudit/error.hpp"

namespace fairaudit {

// Additive angular margin loss evaluated as a pure function: the margin m is
// added to the true-class angle, every logit is scaled by s, and the result
// is softmax cross-entropy. No training loop lives here.
struct MarginLossParams {
    double scale = 64.0;          // s > 0
    double margin = 0.5;          // m in radians, < pi/2
    std::size_t num_classes = 0;  // C
    std::size_t dim = 0;
    std::vector<double> class_centers;  // C x dim, unit rows

    const double* center(std::size_t c) const { return class_centers.data() + c * dim; }
};

struct MarginLossResult {
    double loss = 0.0;                    // mean over samples
    std::vector<double> per_sample;      // per-sample losses, all >= 0
    std::vector<double> true_class_angle; // theta_{y_i} in radians
};

namespace detail {

inline constexpr double kCosineClamp = 1e-7;

inline void check_margin_inputs(const std::vector<double>& features, const std::vector<long>& labels,
                                const MarginLossParams& params) {
    require_input(params.scale > 0.0, "scale must be positive");
    require_input(params.margin >= 0.0 && params.margin < M_PI / 2.0, "margin must lie in [0, pi/2)");
    require_input(params.num_classes >= 2, "need at least 2 classes");
    require_input(params.dim > 0, "dimension must be positive");
    require_input(params.class_centers.size() == params.num_classes * params.dim,
                  "class_centers must be C x dim");
    require_input(!labels.empty(), "need at least one sample");
    require_input(features.size() == labels.size() * params.dim, "features must be n x dim");
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        double norm = 0.0;
        for (std::size_t k = 0; k < params.dim; ++k) norm += params.center(c)[k] * params.center(c)[k];
        require_input(std::abs(std::sqrt(norm) - 1.0) <= 1e-6,
                      "class center " + std::to_string(c) + " is not unit-normalized");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require_input(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < params.num_classes,
                      "label out of range at sample " + std::to_string(i));
        double norm = 0.0;
        for (std::size_t k = 0; k < params.dim; ++k) {
            const double v = features[i * params.dim + k];
            norm += v * v;
        }
        require_input(std::abs(std::sqrt(norm) - 1.0) <= 1e-3,
                      "feature row " + std::to_string(i) + " is not unit-normalized");
    }
}

// Cosines against all centers for one feature row, respecting the row's
// pre-normalization: cos theta_j = w_j . x / |x|.
inline void cosines(const double* x, const MarginLossParams& params, double& x_norm, std::vector<double>& cos_out) {
    x_norm = 0.0;
    for (std::size_t k = 0; k < params.dim; ++k) x_norm += x[k] * x[k];
    x_norm = std::sqrt(x_norm);
    cos_out.resize(params.num_classes);
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        double dot = 0.0;
        const double* w = params.center(c);
        for (std::size_t k = 0; k < params.dim; ++k) dot += w[k] * x[k];
        cos_out[c] = dot / x_norm;
    }
}

} // namespace detail

inline MarginLossResult arcface_loss(const std::vector<double>& features, const std::vector<long>& labels,
                                     const MarginLossParams& params) {
    detail::check_margin_inputs(features, labels, params);
    const std::size_t n = labels.size();

    MarginLossResult result;
    result.per_sample.resize(n);
    result.true_class_angle.resize(n);

    std::vector<double> cos(params.num_classes), logits(params.num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        double x_norm = 0.0;
        detail::cosines(features.data() + i * params.dim, params, x_norm, cos);
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        const double cos_y =
            std::clamp(cos[y], -1.0 + detail::kCosineClamp, 1.0 - detail::kCosineClamp);
        const double theta = std::acos(cos_y);
        result.true_class_angle[i] = theta;

        for (std::size_t c = 0; c < params.num_classes; ++c)
            logits[c] = params.scale * (c == y ? std::cos(theta + params.margin) : cos[c]);

        // log-sum-exp with max shift
        double max_logit = logits[0];
        for (const double l : logits) max_logit = std::max(max_logit, l);
        double sum = 0.0;
        for (const double l : logits) sum += std::exp(l - max_logit);
        result.per_sample[i] = std::log(sum) + max_logit - logits[y];
        result.loss += result.per_sample[i];
    }
    result.loss /= static_cast<double>(n);
    return result;
}

// Analytic gradient of the loss mean with respect to each raw feature row.
// The cosine is computed against the row as given (dot / |x|), so the
// gradient carries the normalization Jacobian and central finite differences
// on the raw rows reproduce it.
inline std::vector<double> arcface_grad(const std::vector<double>& features, const std::vector<long>& labels,
                                        const MarginLossParams& params) {
    detail::check_margin_inputs(features, labels, params);
    const std::size_t n = labels.size();
    const std::size_t dim = params.dim;

    std::vector<std::size_t> domain_violations;
    std::vector<double> grad(features.size(), 0.0);
    std::vector<double> cos(params.num_classes), logits(params.num_classes), prob(params.num_classes);

    for (std::size_t i = 0; i < n; ++i) {
        const double* x = features.data() + i * dim;
        double x_norm = 0.0;
        detail::cosines(x, params, x_norm, cos);
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        const bool clamped = cos[y] <= -1.0 + detail::kCosineClamp || cos[y] >= 1.0 - detail::kCosineClamp;
        const double cos_y = std::clamp(cos[y], -1.0 + detail::kCosineClamp, 1.0 - detail::kCosineClamp);
        const double theta = std::acos(cos_y);
        if (theta + params.margin >= M_PI) {
            domain_violations.push_back(i);
            continue;
        }

        for (std::size_t c = 0; c < params.num_classes; ++c)
            logits[c] = params.scale * (c == y ? std::cos(theta + params.margin) : cos[c]);
        double max_logit = logits[0];
        for (const double l : logits) max_logit = std::max(max_logit, l);
        double sum = 0.0;
        for (std::size_t c = 0; c < params.num_classes; ++c) {
            prob[c] = std::exp(logits[c] - max_logit);
            sum += prob[c];
        }
        for (double& p : prob) p /= sum;

        // d logit_c / d cos_c: s for c != y, s * sin(theta+m)/sin(theta) for y
        // (zero when the clamp is active; the clamp flattens the function).
        const double sin_theta = std::sqrt(1.0 - cos_y * cos_y);
        const double dy_scale = clamped ? 0.0 : params.scale * std::sin(theta + params.margin) / sin_theta;
        for (std::size_t c = 0; c < params.num_classes; ++c) {
            const double dl_dz = (prob[c] - (c == y ? 1.0 : 0.0)) / static_cast<double>(n);
            const double dz_dcos = c == y ? dy_scale : params.scale;
            const double coeff = dl_dz * dz_dcos;
            if (coeff == 0.0) continue;
            const double* w = params.center(c);
            // d cos_c / d x = (w - cos_c * x / |x|) / |x|
            for (std::size_t k = 0; k < dim; ++k)
                grad[i * dim + k] += coeff * (w[k] - cos[c] * x[k] / x_norm) / x_norm;
        }
    }

    if (!domain_violations.empty()) {
        std::string msg = "margin domain violation (theta + m >= pi) at samples:";
        for (const std::size_t i : domain_violations) msg += " " + std::to_string(i);
        throw input_error(msg);
    }
    return grad;
}

// Softmax cross-entropy over plain cosine logits; the m = 0 reduction target.
inline double cosine_softmax_cross_entropy(const std::vector<double>& features, const std::vector<long>& labels,
                                           const MarginLossParams& params) {
    MarginLossParams p = params;
    p.margin = 0.0;
    double total = 0.0;
    std::vector<double> cos(p.num_classes), logits(p.num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double x_norm = 0.0;
        detail::cosines(features.data() + i * p.dim, p, x_norm, cos);
        for (std::size_t c = 0; c < p.num_classes; ++c) logits[c] = p.scale * cos[c];
        double max_logit = logits[0];
        for (const double l : logits) max_logit = std::max(max_logit, l);
        double sum = 0.0;
        for (const double l : logits) sum += std::exp(l - max_logit);
        total += std::log(sum) + max_logit - logits[static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<double>(labels.size());
}

} // namespace fairaudit
