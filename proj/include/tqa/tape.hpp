#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tqa/errors.hpp"
#include "tqa/kernels.hpp"
#include "tqa/mat.hpp"
#include "tqa/numerics.hpp"

namespace tqa {

// Token-bag embedding plan: one bag of token ids per sequence position, plus
// optional position and segment ids. Bag i is flat_ids[bag_offsets[i] ..
// bag_offsets[i+1]) and its embedding is the mean of the member token rows.
struct EmbedSpec {
    std::vector<int32_t> flat_ids;
    std::vector<int32_t> bag_offsets; // length == seq_len + 1, offsets into flat_ids
    std::vector<int32_t> position_ids;
    std::vector<int32_t> segment_ids;
    bool use_positions = true;
    bool use_segments = true;

    size_t seq_len() const { return bag_offsets.empty() ? 0 : bag_offsets.size() - 1; }
};

// Reverse-mode tape over matrix-level operations. Nodes are created in
// topological order; backward() walks them in reverse. Leaves reference
// externally owned values and accumulate into externally owned gradient
// sinks (a null sink marks the leaf frozen).
template <class T>
class Tape {
  public:
    using Id = int32_t;

    Id leaf(const Mat<T>* value, Mat<T>* grad_sink) {
        Node n;
        n.kind = Op::leaf;
        n.ext_value = value;
        n.ext_grad = grad_sink;
        n.requires_grad = grad_sink != nullptr;
        return push(std::move(n));
    }

    Id input(Mat<T> value) {
        Node n;
        n.kind = Op::input;
        n.value = std::move(value);
        return push(std::move(n));
    }

    Id matmul(Id a, Id b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        if (av.cols() != bv.rows()) {
            throw ShapeError("tape matmul: " + av.shape_str() + " times " + bv.shape_str());
        }
        Node n = op2(Op::matmul, a, b);
        n.value = Mat<T>(av.rows(), bv.cols(), uninitialized);
        kernels::matmul(av.data(), bv.data(), n.value.data(), av.rows(), av.cols(), bv.cols(), false);
        return push(std::move(n));
    }

    // C = A * B^T with B given as (n x k).
    Id matmul_nt(Id a, Id b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        if (av.cols() != bv.cols()) {
            throw ShapeError("tape matmul_nt: " + av.shape_str() + " times " + bv.shape_str() + "^T");
        }
        Node n = op2(Op::matmul_nt, a, b);
        n.value = Mat<T>(av.rows(), bv.rows(), uninitialized);
        kernels::matmul_nt(av.data(), bv.data(), n.value.data(), av.rows(), av.cols(), bv.rows(), false);
        return push(std::move(n));
    }

    Id add(Id a, Id b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        if (!av.same_shape(bv)) {
            throw ShapeError("tape add: " + av.shape_str() + " vs " + bv.shape_str());
        }
        Node n = op2(Op::add, a, b);
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        kernels::add(av.data(), bv.data(), n.value.data(), av.size());
        return push(std::move(n));
    }

    // Broadcast-add a 1 x n row onto every row of a.
    Id add_row(Id a, Id row) {
        const Mat<T>& av = val(a);
        const Mat<T>& rv = val(row);
        if (rv.rows() != 1 || rv.cols() != av.cols()) {
            throw ShapeError("tape add_row: " + av.shape_str() + " plus row " + rv.shape_str());
        }
        Node n = op2(Op::add_row, a, row);
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        for (size_t i = 0; i < av.rows(); ++i) {
            kernels::add(av.row(i), rv.data(), n.value.row(i), av.cols());
        }
        return push(std::move(n));
    }

    Id scale(Id a, T factor) {
        const Mat<T>& av = val(a);
        Node n = op1(Op::scale, a);
        n.s0 = factor;
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        kernels::scale(av.data(), factor, n.value.data(), av.size());
        return push(std::move(n));
    }

    Id slice_cols(Id a, size_t c0, size_t c1) {
        const Mat<T>& av = val(a);
        if (c0 >= c1 || c1 > av.cols()) {
            throw ShapeError("tape slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                             ") of " + av.shape_str());
        }
        Node n = op1(Op::slice_cols, a);
        n.i0 = static_cast<int32_t>(c0);
        n.i1 = static_cast<int32_t>(c1);
        n.value = Mat<T>(av.rows(), c1 - c0, uninitialized);
        for (size_t i = 0; i < av.rows(); ++i) {
            const T* src = av.row(i) + c0;
            std::copy(src, src + (c1 - c0), n.value.row(i));
        }
        return push(std::move(n));
    }

    Id concat_cols(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeError("tape concat_cols: no parts");
        const size_t rows = val(parts[0]).rows();
        size_t cols = 0;
        for (Id p : parts) {
            if (val(p).rows() != rows) {
                throw ShapeError("tape concat_cols: row mismatch " + val(p).shape_str());
            }
            cols += val(p).cols();
        }
        Node n;
        n.kind = Op::concat_cols;
        n.aux = static_cast<int32_t>(aux_ids_.size());
        aux_ids_.push_back(parts);
        for (Id p : parts) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
        n.value = Mat<T>(rows, cols, uninitialized);
        size_t at = 0;
        for (Id p : parts) {
            const Mat<T>& pv = val(p);
            for (size_t i = 0; i < rows; ++i) {
                std::copy(pv.row(i), pv.row(i) + pv.cols(), n.value.row(i) + at);
            }
            at += pv.cols();
        }
        return push(std::move(n));
    }

    Id softmax_rows(Id a) {
        const Mat<T>& av = val(a);
        Node n = op1(Op::softmax_rows, a);
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        for (size_t i = 0; i < av.rows(); ++i) {
            numerics::detail::softmax_row(av.row(i), static_cast<const uint8_t*>(nullptr),
                                          n.value.row(i), av.cols());
        }
        return push(std::move(n));
    }

    // Masked softmax over a single 1 x n row; mask[i] != 0 keeps entry i.
    Id softmax_masked_row(Id a, std::vector<uint8_t> mask) {
        const Mat<T>& av = val(a);
        if (av.rows() != 1 || av.cols() != mask.size()) {
            throw ShapeError("tape softmax_masked_row: " + av.shape_str() + " vs mask length " +
                             std::to_string(mask.size()));
        }
        bool any = false;
        for (uint8_t k : mask) any = any || (k != 0);
        if (!any) throw ShapeError("tape softmax_masked_row: mask keeps no entries");
        Node n = op1(Op::softmax_masked_row, a);
        n.aux = static_cast<int32_t>(aux_masks_.size());
        aux_masks_.push_back(std::move(mask));
        n.value = Mat<T>(1, av.cols(), uninitialized);
        numerics::detail::softmax_row(av.data(), aux_masks_[n.aux].data(), n.value.data(), av.cols());
        return push(std::move(n));
    }

    Id gelu(Id a) {
        const Mat<T>& av = val(a);
        Node n = op1(Op::gelu, a);
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        for (size_t k = 0; k < av.size(); ++k) n.value[k] = numerics::detail::gelu(av[k]);
        return push(std::move(n));
    }

    Id layer_norm(Id a, Id gain, Id bias, T eps) {
        const Mat<T>& av = val(a);
        const Mat<T>& gv = val(gain);
        const Mat<T>& bv = val(bias);
        if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != av.cols() || bv.cols() != av.cols()) {
            throw ShapeError("tape layer_norm: x " + av.shape_str() + ", gain " + gv.shape_str() +
                             ", bias " + bv.shape_str());
        }
        Node n;
        n.kind = Op::layer_norm;
        n.in = {a, gain, bias};
        n.n_in = 3;
        n.requires_grad = nodes_[a].requires_grad || nodes_[gain].requires_grad ||
                          nodes_[bias].requires_grad;
        n.s0 = eps;
        n.value = Mat<T>(av.rows(), av.cols(), uninitialized);
        n.cache_mat = Mat<T>(av.rows(), av.cols(), uninitialized);
        n.cache_vec.resize(av.rows());
        numerics::detail::layer_norm_forward(av, gv, bv, eps, n.value, &n.cache_mat, &n.cache_vec);
        return push(std::move(n));
    }

    // Sequence embedding: mean of each bag's token rows, plus optional
    // position and segment rows. pos/seg may be -1 when the spec disables them.
    Id embed_mean(Id tokens, Id positions, Id segments, EmbedSpec spec) {
        const Mat<T>& tv = val(tokens);
        const size_t len = spec.seq_len();
        if (spec.position_ids.size() != len || spec.segment_ids.size() != len) {
            throw ShapeError("tape embed_mean: inconsistent spec lengths");
        }
        Node n;
        n.kind = Op::embed_mean;
        n.in = {tokens, positions, segments};
        n.n_in = 3;
        n.requires_grad = nodes_[tokens].requires_grad ||
                          (positions >= 0 && nodes_[positions].requires_grad) ||
                          (segments >= 0 && nodes_[segments].requires_grad);
        n.aux = static_cast<int32_t>(aux_specs_.size());
        aux_specs_.push_back(std::move(spec));
        const EmbedSpec& sp = aux_specs_[n.aux];
        n.value = Mat<T>(len, tv.cols());
        for (size_t i = 0; i < len; ++i) {
            T* out = n.value.row(i);
            const int32_t lo = sp.bag_offsets[i];
            const int32_t hi = sp.bag_offsets[i + 1];
            if (hi <= lo) throw ShapeError("tape embed_mean: empty bag");
            for (int32_t k = lo; k < hi; ++k) {
                kernels::axpy(T(1), tv.row(check_id(sp.flat_ids[k], tv.rows())), out, tv.cols());
            }
            kernels::scale(out, T(1) / static_cast<T>(hi - lo), out, tv.cols());
            if (sp.use_positions) {
                const Mat<T>& pv = val(positions);
                kernels::axpy(T(1), pv.row(check_id(sp.position_ids[i], pv.rows())), out, tv.cols());
            }
            if (sp.use_segments) {
                const Mat<T>& sv = val(segments);
                kernels::axpy(T(1), sv.row(check_id(sp.segment_ids[i], sv.rows())), out, tv.cols());
            }
        }
        return push(std::move(n));
    }

    // -log(max(p[index], floor)) of a 1 x n probability row, as a 1 x 1 value.
    Id neg_log_pick(Id probs, size_t index, T floor) {
        const Mat<T>& pv = val(probs);
        if (pv.rows() != 1 || index >= pv.cols()) {
            throw ShapeError("tape neg_log_pick: index " + std::to_string(index) + " of " +
                             pv.shape_str());
        }
        Node n = op1(Op::neg_log_pick, a_only(probs));
        n.i0 = static_cast<int32_t>(index);
        n.s0 = floor;
        n.value = Mat<T>(1, 1, uninitialized);
        n.value[0] = -std::log(std::max(pv[index], floor));
        return push(std::move(n));
    }

    Id reshape(Id a, size_t rows, size_t cols) {
        const Mat<T>& av = val(a);
        if (rows * cols != av.size()) {
            throw ShapeError("tape reshape: " + av.shape_str() + " to " + std::to_string(rows) +
                             "x" + std::to_string(cols));
        }
        Node n = op1(Op::reshape, a);
        n.value = Mat<T>(rows, cols, uninitialized);
        std::copy(av.data(), av.data() + av.size(), n.value.data());
        return push(std::move(n));
    }

    const Mat<T>& value(Id id) const { return val(id); }
    bool requires_grad(Id id) const { return nodes_[id].requires_grad; }

    T scalar(Id id) const {
        const Mat<T>& v = val(id);
        if (v.size() != 1) throw ShapeError("tape scalar: node value is " + v.shape_str());
        return v[0];
    }

    // Accumulates seed * d(node)/d(leaf) into every live leaf sink.
    void backward(Id root, T seed) {
        const Mat<T>& rv = val(root);
        if (rv.size() != 1) throw ShapeError("tape backward: root value is " + rv.shape_str());
        if (!nodes_[root].requires_grad) return;
        grad_of(root)[0] += seed;
        for (Id id = root; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || n.kind == Op::leaf || n.kind == Op::input) continue;
            if (n.grad.empty()) continue; // never touched by anything downstream of root
            step_backward(n);
        }
    }

    size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op : uint8_t {
        leaf,
        input,
        matmul,
        matmul_nt,
        add,
        add_row,
        scale,
        slice_cols,
        concat_cols,
        softmax_rows,
        softmax_masked_row,
        gelu,
        layer_norm,
        embed_mean,
        neg_log_pick,
        reshape,
    };

    struct Node {
        Op kind = Op::input;
        std::array<Id, 3> in = {-1, -1, -1};
        int n_in = 0;
        bool requires_grad = false;
        int32_t i0 = 0, i1 = 0;
        T s0 = T(0);
        int32_t aux = -1;
        Mat<T> value;
        Mat<T> grad;
        const Mat<T>* ext_value = nullptr;
        Mat<T>* ext_grad = nullptr;
        Mat<T> cache_mat;        // layer_norm: xhat
        std::vector<T> cache_vec; // layer_norm: 1/std per row
    };

    static Id a_only(Id a) { return a; }

    Id push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Node op1(Op k, Id a) {
        Node n;
        n.kind = k;
        n.in = {a, -1, -1};
        n.n_in = 1;
        n.requires_grad = nodes_[a].requires_grad;
        return n;
    }

    Node op2(Op k, Id a, Id b) {
        Node n;
        n.kind = k;
        n.in = {a, b, -1};
        n.n_in = 2;
        n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
        return n;
    }

    const Mat<T>& val(Id id) const {
        const Node& n = nodes_[id];
        return n.kind == Op::leaf ? *n.ext_value : n.value;
    }

    static size_t check_id(int32_t id, size_t limit) {
        if (id < 0 || static_cast<size_t>(id) >= limit) {
            throw ShapeError("tape embed_mean: row id " + std::to_string(id) +
                             " out of range for table with " + std::to_string(limit) + " rows");
        }
        return static_cast<size_t>(id);
    }

    // Gradient buffer for a node, allocated (zeroed) on first touch. For a
    // leaf this is the external sink, whose shape the caller owns.
    Mat<T>& grad_of(Id id) {
        Node& n = nodes_[id];
        if (n.kind == Op::leaf) return *n.ext_grad;
        if (n.grad.empty()) n.grad = Mat<T>(val(id).rows(), val(id).cols());
        return n.grad;
    }

    bool wants(Id id) const { return id >= 0 && nodes_[id].requires_grad; }

    void step_backward(Node& n) {
        const Mat<T>& g = n.grad;
        switch (n.kind) {
        case Op::matmul: {
            const Mat<T>& av = val(n.in[0]);
            const Mat<T>& bv = val(n.in[1]);
            if (wants(n.in[0])) {
                // dA += g * B^T
                kernels::matmul_nt(g.data(), bv.data(), grad_of(n.in[0]).data(), av.rows(),
                                   bv.cols(), av.cols(), true);
            }
            if (wants(n.in[1])) {
                // dB += A^T * g
                kernels::matmul_tn(av.data(), g.data(), grad_of(n.in[1]).data(), av.cols(),
                                   av.rows(), bv.cols(), true);
            }
            break;
        }
        case Op::matmul_nt: {
            const Mat<T>& av = val(n.in[0]);
            const Mat<T>& bv = val(n.in[1]);
            if (wants(n.in[0])) {
                // dA += g * B
                kernels::matmul(g.data(), bv.data(), grad_of(n.in[0]).data(), av.rows(),
                                bv.rows(), av.cols(), true);
            }
            if (wants(n.in[1])) {
                // dB += g^T * A
                kernels::matmul_tn(g.data(), av.data(), grad_of(n.in[1]).data(), bv.rows(),
                                   av.rows(), av.cols(), true);
            }
            break;
        }
        case Op::add: {
            if (wants(n.in[0])) kernels::axpy(T(1), g.data(), grad_of(n.in[0]).data(), g.size());
            if (wants(n.in[1])) kernels::axpy(T(1), g.data(), grad_of(n.in[1]).data(), g.size());
            break;
        }
        case Op::add_row: {
            if (wants(n.in[0])) kernels::axpy(T(1), g.data(), grad_of(n.in[0]).data(), g.size());
            if (wants(n.in[1])) {
                Mat<T>& dr = grad_of(n.in[1]);
                for (size_t i = 0; i < g.rows(); ++i) {
                    kernels::axpy(T(1), g.row(i), dr.data(), g.cols());
                }
            }
            break;
        }
        case Op::scale: {
            if (wants(n.in[0])) kernels::axpy(n.s0, g.data(), grad_of(n.in[0]).data(), g.size());
            break;
        }
        case Op::slice_cols: {
            if (wants(n.in[0])) {
                Mat<T>& da = grad_of(n.in[0]);
                for (size_t i = 0; i < g.rows(); ++i) {
                    kernels::axpy(T(1), g.row(i), da.row(i) + n.i0, g.cols());
                }
            }
            break;
        }
        case Op::concat_cols: {
            const std::vector<Id>& parts = aux_ids_[n.aux];
            size_t at = 0;
            for (Id p : parts) {
                const size_t w = val(p).cols();
                if (wants(p)) {
                    Mat<T>& dp = grad_of(p);
                    for (size_t i = 0; i < g.rows(); ++i) {
                        kernels::axpy(T(1), g.row(i) + at, dp.row(i), w);
                    }
                }
                at += w;
            }
            break;
        }
        case Op::softmax_rows: {
            if (wants(n.in[0])) {
                Mat<T>& da = grad_of(n.in[0]);
                for (size_t i = 0; i < g.rows(); ++i) {
                    numerics::detail::softmax_row_backward(n.value.row(i), g.row(i), da.row(i),
                                                           g.cols());
                }
            }
            break;
        }
        case Op::softmax_masked_row: {
            if (wants(n.in[0])) {
                numerics::detail::softmax_row_backward(n.value.data(), g.data(),
                                                       grad_of(n.in[0]).data(), g.cols());
            }
            break;
        }
        case Op::gelu: {
            if (wants(n.in[0])) {
                const Mat<T>& av = val(n.in[0]);
                Mat<T>& da = grad_of(n.in[0]);
                for (size_t k = 0; k < g.size(); ++k) {
                    da[k] += g[k] * numerics::detail::gelu_grad(av[k]);
                }
            }
            break;
        }
        case Op::layer_norm: {
            const Mat<T>& gv = val(n.in[1]);
            const size_t d = g.cols();
            const T invd = T(1) / static_cast<T>(d);
            Mat<T>* da = wants(n.in[0]) ? &grad_of(n.in[0]) : nullptr;
            Mat<T>* dgain = wants(n.in[1]) ? &grad_of(n.in[1]) : nullptr;
            Mat<T>* dbias = wants(n.in[2]) ? &grad_of(n.in[2]) : nullptr;
            std::vector<T> gg(d);
            for (size_t i = 0; i < g.rows(); ++i) {
                const T* gr = g.row(i);
                const T* xh = n.cache_mat.row(i);
                if (dgain) {
                    for (size_t j = 0; j < d; ++j) (*dgain)[j] += gr[j] * xh[j];
                }
                if (dbias) kernels::axpy(T(1), gr, dbias->data(), d);
                if (da) {
                    kernels::hadamard(gr, gv.data(), gg.data(), d);
                    const T mean_gg = kernels::sum(gg.data(), d) * invd;
                    const T mean_ggx = kernels::dot(gg.data(), xh, d) * invd;
                    const T is = n.cache_vec[i];
                    T* dar = da->row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dar[j] += is * (gg[j] - mean_gg - xh[j] * mean_ggx);
                    }
                }
            }
            break;
        }
        case Op::embed_mean: {
            const EmbedSpec& sp = aux_specs_[n.aux];
            Mat<T>* dtok = wants(n.in[0]) ? &grad_of(n.in[0]) : nullptr;
            Mat<T>* dpos = (sp.use_positions && wants(n.in[1])) ? &grad_of(n.in[1]) : nullptr;
            Mat<T>* dseg = (sp.use_segments && wants(n.in[2])) ? &grad_of(n.in[2]) : nullptr;
            const size_t d = g.cols();
            for (size_t i = 0; i < sp.seq_len(); ++i) {
                const T* gr = g.row(i);
                const int32_t lo = sp.bag_offsets[i];
                const int32_t hi = sp.bag_offsets[i + 1];
                if (dtok) {
                    const T w = T(1) / static_cast<T>(hi - lo);
                    for (int32_t k = lo; k < hi; ++k) {
                        kernels::axpy(w, gr, dtok->row(sp.flat_ids[k]), d);
                    }
                }
                if (dpos) kernels::axpy(T(1), gr, dpos->row(sp.position_ids[i]), d);
                if (dseg) kernels::axpy(T(1), gr, dseg->row(sp.segment_ids[i]), d);
            }
            break;
        }
        case Op::neg_log_pick: {
            if (wants(n.in[0])) {
                const Mat<T>& pv = val(n.in[0]);
                const T p = pv[n.i0];
                if (p > n.s0) grad_of(n.in[0])[n.i0] += -g[0] / p;
            }
            break;
        }
        case Op::reshape: {
            if (wants(n.in[0])) kernels::axpy(T(1), g.data(), grad_of(n.in[0]).data(), g.size());
            break;
        }
        case Op::leaf:
        case Op::input:
            break;
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<Id>> aux_ids_;
    std::vector<std::vector<uint8_t>> aux_masks_;
    std::vector<EmbedSpec> aux_specs_;
};

} // namespace tqa
