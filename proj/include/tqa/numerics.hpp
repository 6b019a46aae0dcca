#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tqa/errors.hpp"
#include "tqa/kernels.hpp"
#include "tqa/mat.hpp"

namespace tqa::numerics {

namespace detail {

// Masked softmax over one row. mask == nullptr keeps everything. Masked-out
// entries get probability exactly 0; kept entries are max-shifted before exp.
template <class T>
void softmax_row(const T* scores, const uint8_t* mask, T* out, size_t n) {
    T mx = -std::numeric_limits<T>::infinity();
    for (size_t i = 0; i < n; ++i) {
        if (!mask || mask[i]) mx = std::max(mx, scores[i]);
    }
    T total = T(0);
    for (size_t i = 0; i < n; ++i) {
        if (!mask || mask[i]) {
            out[i] = std::exp(scores[i] - mx);
            total += out[i];
        } else {
            out[i] = T(0);
        }
    }
    const T inv = T(1) / total;
    for (size_t i = 0; i < n; ++i) out[i] *= inv;
}

// dS = (dP - <dP,P>) .* P, valid for masked rows as well since masked
// probabilities are exactly zero.
template <class T>
void softmax_row_backward(const T* probs, const T* dprobs, T* dscores, size_t n) {
    const T s = kernels::dot(dprobs, probs, n);
    for (size_t i = 0; i < n; ++i) dscores[i] += probs[i] * (dprobs[i] - s);
}

// tanh-form GELU.
template <class T>
T gelu(T x) {
    constexpr double c = 0.7978845608028654; // sqrt(2/pi)
    const double xd = static_cast<double>(x);
    const double inner = c * (xd + 0.044715 * xd * xd * xd);
    return static_cast<T>(0.5 * xd * (1.0 + std::tanh(inner)));
}

template <class T>
T gelu_grad(T x) {
    constexpr double c = 0.7978845608028654;
    const double xd = static_cast<double>(x);
    const double inner = c * (xd + 0.044715 * xd * xd * xd);
    const double t = std::tanh(inner);
    const double sech2 = 1.0 - t * t;
    return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * sech2 * c * (1.0 + 3.0 * 0.044715 * xd * xd));
}

// y = (x - mean) / sqrt(var + eps) * gain + bias, per row, biased variance.
// xhat and inv_std come back for the backward pass when requested.
template <class T>
void layer_norm_forward(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, T eps,
                        Mat<T>& y, Mat<T>* xhat, std::vector<T>* inv_std) {
    const size_t d = x.cols();
    for (size_t i = 0; i < x.rows(); ++i) {
        const T* xr = x.row(i);
        const T mean = kernels::sum(xr, d) / static_cast<T>(d);
        T var = T(0);
        for (size_t j = 0; j < d; ++j) {
            const T c = xr[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        T* yr = y.row(i);
        T* xh = xhat ? xhat->row(i) : nullptr;
        for (size_t j = 0; j < d; ++j) {
            const T h = (xr[j] - mean) * is;
            if (xh) xh[j] = h;
            yr[j] = h * gain[j] + bias[j];
        }
        if (inv_std) (*inv_std)[i] = is;
    }
}

} // namespace detail

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    Mat<T> c(a.rows(), b.cols(), uninitialized);
    kernels::matmul(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
    return c;
}

template <class T>
Mat<T> softmax_masked(const Mat<T>& scores, const std::vector<uint8_t>& mask) {
    if (scores.rows() != 1 || scores.cols() != mask.size()) {
        throw ShapeError("softmax_masked: scores " + scores.shape_str() + " vs mask length " +
                         std::to_string(mask.size()));
    }
    bool any = false;
    for (uint8_t k : mask) any = any || (k != 0);
    if (!any) throw ShapeError("softmax_masked: mask keeps no entries");
    Mat<T> out(1, scores.cols(), uninitialized);
    detail::softmax_row(scores.data(), mask.data(), out.data(), scores.cols());
    return out;
}

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, T eps) {
    if (gain.rows() != 1 || bias.rows() != 1 || gain.cols() != x.cols() ||
        bias.cols() != x.cols()) {
        throw ShapeError("layer_norm: x " + x.shape_str() + ", gain " + gain.shape_str() +
                         ", bias " + bias.shape_str());
    }
    Mat<T> y(x.rows(), x.cols(), uninitialized);
    detail::layer_norm_forward<T>(x, gain, bias, eps, y, nullptr, nullptr);
    return y;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    size_t worst_param = 0;
    size_t worst_entry = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares a reverse-mode gradient against central differences.
// F is double(const std::vector<Mat<double>>& params,
//             std::vector<Mat<double>>* grads): with grads == nullptr it is a
// pure forward evaluation; otherwise it must also fill one gradient matrix
// per parameter.
template <class F>
GradCheckResult grad_check(F&& f, std::vector<Mat<double>> params, double eps) {
    std::vector<Mat<double>> analytic;
    const double base = f(params, &analytic);
    if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite");
    if (analytic.size() != params.size()) {
        throw ShapeError("grad_check: gradient count " + std::to_string(analytic.size()) +
                         " != parameter count " + std::to_string(params.size()));
    }
    GradCheckResult result;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        if (!analytic[pi].same_shape(params[pi])) {
            throw ShapeError("grad_check: gradient " + std::to_string(pi) + " shape " +
                             analytic[pi].shape_str() + " != " + params[pi].shape_str());
        }
        for (size_t k = 0; k < params[pi].size(); ++k) {
            const double saved = params[pi][k];
            params[pi][k] = saved + eps;
            const double up = f(params, nullptr);
            params[pi][k] = saved - eps;
            const double down = f(params, nullptr);
            params[pi][k] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: perturbed loss is not finite");
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][k];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = pi;
                result.worst_entry = k;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace tqa::numerics
