#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "trajforge/error.hpp"

namespace trajforge::fm {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Row-wise numerically stable softmax, in place.
template <class S>
void softmax_rows(Mat<S>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        const S mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

/// Per-head probabilities kept for the backward pass.
template <class S>
struct AttentionCache {
    std::vector<Mat<S>> probs;  // one [Lq, Lk] matrix per head
};

/// Multi-head scaled dot-product attention on already projected Q [Lq, D],
/// K and V [Lk, D]: head m is softmax(Q_m K_m^T / sqrt(D/M)) V_m, heads are
/// concatenated back to [Lq, D]. The output projection is left to the caller.
template <class S>
Mat<S> multi_head_attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, std::size_t heads,
                            AttentionCache<S>* cache = nullptr) {
    const Eigen::Index d = q.cols();
    if (heads == 0 || d % static_cast<Eigen::Index>(heads) != 0) {
        throw DimensionError("attention: model dim must be divisible by the head count");
    }
    if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
        throw DimensionError("attention: Q/K/V dimensions disagree");
    }
    const Eigen::Index dh = d / static_cast<Eigen::Index>(heads);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Mat<S> out(q.rows(), d);
    if (cache) cache->probs.resize(heads);
    for (std::size_t m = 0; m < heads; ++m) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(m) * dh;
        Mat<S> p = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
        softmax_rows(p);
        out.middleCols(c0, dh).noalias() = p * v.middleCols(c0, dh);
        if (cache) cache->probs[m] = std::move(p);
    }
    return out;
}

/// Heads concatenated and projected by `w_o` [D, D_out].
template <class S>
Mat<S> attention(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, std::size_t heads, const Mat<S>& w_o) {
    if (w_o.rows() != q.cols()) throw DimensionError("attention: output projection rows must equal model dim");
    return multi_head_attention(q, k, v, heads) * w_o;
}

/// Gradients of multi_head_attention with respect to Q, K and V.
template <class S>
void multi_head_attention_backward(const Mat<S>& q, const Mat<S>& k, const Mat<S>& v, std::size_t heads,
                                   const AttentionCache<S>& cache, const Mat<S>& d_out, Mat<S>& d_q, Mat<S>& d_k,
                                   Mat<S>& d_v) {
    const Eigen::Index d = q.cols();
    const Eigen::Index dh = d / static_cast<Eigen::Index>(heads);
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    d_q.setZero(q.rows(), d);
    d_k.setZero(k.rows(), d);
    d_v.setZero(v.rows(), d);
    Mat<S> dp;
    for (std::size_t m = 0; m < heads; ++m) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(m) * dh;
        const Mat<S>& p = cache.probs[m];
        const auto dh_m = d_out.middleCols(c0, dh);
        d_v.middleCols(c0, dh).noalias() = p.transpose() * dh_m;
        dp.noalias() = dh_m * v.middleCols(c0, dh).transpose();
        // softmax backward: dS = P * (dP - rowsum(dP * P))
        const auto row_dot = (dp.array() * p.array()).rowwise().sum().eval();
        dp = (p.array() * (dp.array().colwise() - row_dot)) * scale;
        d_q.middleCols(c0, dh).noalias() = dp * k.middleCols(c0, dh);
        d_k.middleCols(c0, dh).noalias() = dp.transpose() * q.middleCols(c0, dh);
    }
}

}  // namespace trajforge::fm
