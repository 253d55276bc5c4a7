#pragma once

#include <cblas.h>

#include <cmath>
#include <deque>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

inline void check_finite(const char* what, double v) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value in ") + what);
}

inline void gemm_rm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
                    const float* b, int ldb, float* c, int ldc, float beta) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                m, n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm_rm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, int lda,
                    const double* b, int ldb, double* c, int ldc, double beta) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                m, n, k, 1.0, a, lda, b, ldb, beta, c, ldc);
}

// Reverse-mode tape. Nodes are appended in construction order, which is a
// valid topological order; backward() walks it in exact reverse.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    int leaf(Tensor<T> value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, nullptr);
    }

    const Tensor<T>& val(int id) const { return nodes_[id].value; }
    Tensor<T>& grad(int id) { return nodes_[id].grad; }
    size_t node_count() const { return nodes_.size(); }

    // ---- kernels -----------------------------------------------------------

    // a:[...,M,K] x b:[K,N] (or [N,K] when trans_b) -> [...,M,N]
    // a:[B,M,K]   x b:[B,K,N] (or [B,N,K])          -> [B,M,N]
    int matmul(int a, int b, bool trans_b = false) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (A.rank() < 2 || B.rank() < 2) throw std::invalid_argument("matmul: rank < 2");
        if (B.rank() == 2) {
            size_t K = A.shape.back();
            size_t N = trans_b ? B.dim(0) : B.dim(1);
            size_t Kb = trans_b ? B.dim(1) : B.dim(0);
            if (K != Kb) throw std::invalid_argument("matmul: inner dim mismatch");
            size_t M = A.size() / K;
            std::vector<size_t> out_shape(A.shape.begin(), A.shape.end() - 1);
            out_shape.push_back(N);
            Tensor<T> out(out_shape);
            gemm_rm(false, trans_b, (int)M, (int)N, (int)K, A.data.data(), (int)K,
                    B.data.data(), (int)B.dim(1), out.data.data(), (int)N, T(0));
            bool rg = needs_grad(a) || needs_grad(b);
            return push(std::move(out), rg, [a, b, trans_b, M, N, K](Tape& t, int self) {
                const Tensor<T>& Av = t.val(a);
                const Tensor<T>& Bv = t.val(b);
                const Tensor<T>& dC = t.grad(self);
                if (t.needs_grad(a)) {
                    // dA = dC * B^T (no trans) or dC * B (trans_b)
                    gemm_rm(false, !trans_b, (int)M, (int)K, (int)N, dC.data.data(), (int)N,
                            Bv.data.data(), (int)Bv.dim(1), t.grad(a).data.data(), (int)K, T(1));
                }
                if (t.needs_grad(b)) {
                    if (!trans_b) // dB = A^T * dC
                        gemm_rm(true, false, (int)K, (int)N, (int)M, Av.data.data(), (int)K,
                                dC.data.data(), (int)N, t.grad(b).data.data(), (int)N, T(1));
                    else // dB = dC^T * A
                        gemm_rm(true, false, (int)N, (int)K, (int)M, dC.data.data(), (int)N,
                                Av.data.data(), (int)K, t.grad(b).data.data(), (int)K, T(1));
                }
            });
        }
        // batched
        if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0))
            throw std::invalid_argument("matmul: batched operands must be rank-3 with equal batch");
        size_t Bn = A.dim(0), M = A.dim(1), K = A.dim(2);
        size_t N = trans_b ? B.dim(1) : B.dim(2);
        size_t Kb = trans_b ? B.dim(2) : B.dim(1);
        if (K != Kb) throw std::invalid_argument("matmul: inner dim mismatch");
        Tensor<T> out({Bn, M, N});
        size_t bstride = B.dim(1) * B.dim(2);
        for (size_t i = 0; i < Bn; ++i)
            gemm_rm(false, trans_b, (int)M, (int)N, (int)K, A.data.data() + i * M * K, (int)K,
                    B.data.data() + i * bstride, (int)B.dim(2),
                    out.data.data() + i * M * N, (int)N, T(0));
        bool rg = needs_grad(a) || needs_grad(b);
        return push(std::move(out), rg, [a, b, trans_b, Bn, M, N, K](Tape& t, int self) {
            const Tensor<T>& Av = t.val(a);
            const Tensor<T>& Bv = t.val(b);
            const Tensor<T>& dC = t.grad(self);
            size_t bstride = Bv.dim(1) * Bv.dim(2);
            for (size_t i = 0; i < Bn; ++i) {
                const T* Ai = Av.data.data() + i * M * K;
                const T* Bi = Bv.data.data() + i * bstride;
                const T* dCi = dC.data.data() + i * M * N;
                if (t.needs_grad(a))
                    gemm_rm(false, !trans_b, (int)M, (int)K, (int)N, dCi, (int)N, Bi,
                            (int)Bv.dim(2), t.grad(a).data.data() + i * M * K, (int)K, T(1));
                if (t.needs_grad(b)) {
                    if (!trans_b)
                        gemm_rm(true, false, (int)K, (int)N, (int)M, Ai, (int)K, dCi, (int)N,
                                t.grad(b).data.data() + i * bstride, (int)N, T(1));
                    else
                        gemm_rm(true, false, (int)N, (int)K, (int)M, dCi, (int)N, Ai, (int)K,
                                t.grad(b).data.data() + i * bstride, (int)K, T(1));
                }
            }
        });
    }

    // same shape, or b is a rank-1 bias broadcast over the last axis
    int add(int a, int b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        Tensor<T> out = A;
        if (B.same_shape(A)) {
            for (size_t i = 0; i < out.size(); ++i) out[i] += B[i];
            return push(std::move(out), needs_grad(a) || needs_grad(b), [a, b](Tape& t, int self) {
                const Tensor<T>& d = t.grad(self);
                if (t.needs_grad(a))
                    for (size_t i = 0; i < d.size(); ++i) t.grad(a)[i] += d[i];
                if (t.needs_grad(b))
                    for (size_t i = 0; i < d.size(); ++i) t.grad(b)[i] += d[i];
            });
        }
        if (B.rank() == 1 && B.dim(0) == A.cols()) {
            size_t rows = A.rows(), cols = A.cols();
            for (size_t r = 0; r < rows; ++r)
                for (size_t c = 0; c < cols; ++c) out[r * cols + c] += B[c];
            return push(std::move(out), needs_grad(a) || needs_grad(b), [a, b, rows, cols](Tape& t, int self) {
                const Tensor<T>& d = t.grad(self);
                if (t.needs_grad(a))
                    for (size_t i = 0; i < d.size(); ++i) t.grad(a)[i] += d[i];
                if (t.needs_grad(b))
                    for (size_t r = 0; r < rows; ++r)
                        for (size_t c = 0; c < cols; ++c) t.grad(b)[c] += d[r * cols + c];
            });
        }
        throw std::invalid_argument("add: incompatible shapes");
    }

    // a:[B,S,D] + b:[B,D] broadcast over the middle axis
    int add_rows(int a, int b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (A.rank() != 3 || B.rank() != 2 || A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1))
            throw std::invalid_argument("add_rows: incompatible shapes");
        size_t Bn = A.dim(0), S = A.dim(1), D = A.dim(2);
        Tensor<T> out = A;
        for (size_t i = 0; i < Bn; ++i)
            for (size_t s = 0; s < S; ++s)
                for (size_t d = 0; d < D; ++d) out[(i * S + s) * D + d] += B[i * D + d];
        return push(std::move(out), needs_grad(a) || needs_grad(b), [a, b, Bn, S, D](Tape& t, int self) {
            const Tensor<T>& g = t.grad(self);
            if (t.needs_grad(a))
                for (size_t i = 0; i < g.size(); ++i) t.grad(a)[i] += g[i];
            if (t.needs_grad(b))
                for (size_t i = 0; i < Bn; ++i)
                    for (size_t s = 0; s < S; ++s)
                        for (size_t d = 0; d < D; ++d) t.grad(b)[i * D + d] += g[(i * S + s) * D + d];
        });
    }

    // add a constant tensor whose shape is a suffix of a's shape (no gradient
    // flows into the constant); used for additive attention masks
    int add_const(int a, const Tensor<T>& c) {
        const Tensor<T>& A = val(a);
        if (c.rank() > A.rank()) throw std::invalid_argument("add_const: constant rank too large");
        for (size_t i = 0; i < c.rank(); ++i)
            if (c.shape[c.rank() - 1 - i] != A.shape[A.rank() - 1 - i])
                throw std::invalid_argument("add_const: shape is not a suffix");
        Tensor<T> out = A;
        size_t block = c.size();
        for (size_t i = 0; i < out.size(); ++i) out[i] += c[i % block];
        return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t i = 0; i < d.size(); ++i) t.grad(a)[i] += d[i];
        });
    }

    int scale(int a, T s) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v *= s;
        return push(std::move(out), needs_grad(a), [a, s](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t i = 0; i < d.size(); ++i) t.grad(a)[i] += s * d[i];
        });
    }

    int gelu(int a) {
        const Tensor<T>& A = val(a);
        Tensor<T> out(A.shape);
        for (size_t i = 0; i < A.size(); ++i) {
            T x = A[i];
            out[i] = x * T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
        }
        return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& Av = t.val(a);
            const Tensor<T>& d = t.grad(self);
            const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
            for (size_t i = 0; i < d.size(); ++i) {
                T x = Av[i];
                T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
                T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
                t.grad(a)[i] += d[i] * (cdf + x * pdf);
            }
        });
    }

    // softmax over the last axis, row-max subtracted
    int softmax(int a) {
        const Tensor<T>& A = val(a);
        Tensor<T> out(A.shape);
        size_t rows = A.rows(), cols = A.cols();
        for (size_t r = 0; r < rows; ++r) {
            const T* x = A.data.data() + r * cols;
            T* y = out.data.data() + r * cols;
            T mx = x[0];
            for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
            check_finite("softmax", mx);
            T sum = 0;
            for (size_t c = 0; c < cols; ++c) { y[c] = std::exp(x[c] - mx); sum += y[c]; }
            // max() skips NaN operands, but exp(NaN) poisons the sum
            check_finite("softmax", sum);
            for (size_t c = 0; c < cols; ++c) y[c] /= sum;
        }
        return push(std::move(out), needs_grad(a), [a, rows, cols](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& y = t.val(self);
            const Tensor<T>& d = t.grad(self);
            for (size_t r = 0; r < rows; ++r) {
                const T* yr = y.data.data() + r * cols;
                const T* dr = d.data.data() + r * cols;
                T dot = 0;
                for (size_t c = 0; c < cols; ++c) dot += yr[c] * dr[c];
                for (size_t c = 0; c < cols; ++c) t.grad(a)[r * cols + c] += yr[c] * (dr[c] - dot);
            }
        });
    }

    // layer norm over the last axis with rank-1 gain/bias
    int layernorm(int a, int gain, int bias, T eps) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& G = val(gain);
        const Tensor<T>& Bi = val(bias);
        size_t cols = A.cols(), rows = A.rows();
        if (G.size() != cols || Bi.size() != cols) throw std::invalid_argument("layernorm: gain/bias size");
        Tensor<T> out(A.shape);
        std::vector<T> inv_sigma(rows), mean(rows);
        for (size_t r = 0; r < rows; ++r) {
            const T* x = A.data.data() + r * cols;
            T mu = 0;
            for (size_t c = 0; c < cols; ++c) mu += x[c];
            mu /= T(cols);
            T var = 0;
            for (size_t c = 0; c < cols; ++c) { T dlt = x[c] - mu; var += dlt * dlt; }
            var /= T(cols);
            T is = T(1) / std::sqrt(var + eps);
            mean[r] = mu;
            inv_sigma[r] = is;
            for (size_t c = 0; c < cols; ++c)
                out[r * cols + c] = (x[c] - mu) * is * G[c] + Bi[c];
        }
        bool rg = needs_grad(a) || needs_grad(gain) || needs_grad(bias);
        return push(std::move(out), rg,
                    [a, gain, bias, rows, cols, mean = std::move(mean),
                     inv_sigma = std::move(inv_sigma)](Tape& t, int self) {
            const Tensor<T>& Av = t.val(a);
            const Tensor<T>& G = t.val(gain);
            const Tensor<T>& d = t.grad(self);
            for (size_t r = 0; r < rows; ++r) {
                const T* x = Av.data.data() + r * cols;
                const T* dr = d.data.data() + r * cols;
                T is = inv_sigma[r], mu = mean[r];
                T sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (size_t c = 0; c < cols; ++c) {
                    T xhat = (x[c] - mu) * is;
                    T dxhat = dr[c] * G[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (t.needs_grad(gain)) t.grad(gain)[c] += dr[c] * xhat;
                    if (t.needs_grad(bias)) t.grad(bias)[c] += dr[c];
                }
                if (t.needs_grad(a)) {
                    for (size_t c = 0; c < cols; ++c) {
                        T xhat = (x[c] - mu) * is;
                        T dxhat = dr[c] * G[c];
                        t.grad(a)[r * cols + c] +=
                            is * (dxhat - sum_dxhat / T(cols) - xhat * sum_dxhat_xhat / T(cols));
                    }
                }
            }
        });
    }

    // table:[V,D], ids.size()=N -> [N,D]
    int embedding(int table, std::vector<int> ids) {
        const Tensor<T>& Tb = val(table);
        if (Tb.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
        size_t V = Tb.dim(0), D = Tb.dim(1), N = ids.size();
        Tensor<T> out({N, D});
        for (size_t i = 0; i < N; ++i) {
            if (ids[i] < 0 || (size_t)ids[i] >= V) throw std::invalid_argument("embedding: id out of range");
            std::copy_n(Tb.data.data() + (size_t)ids[i] * D, D, out.data.data() + i * D);
        }
        return push(std::move(out), needs_grad(table), [table, D, ids = std::move(ids)](Tape& t, int self) {
            if (!t.needs_grad(table)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t i = 0; i < ids.size(); ++i)
                for (size_t c = 0; c < D; ++c)
                    t.grad(table)[(size_t)ids[i] * D + c] += d[i * D + c];
        });
    }

    // logits:[N,V]; per-row targets with non-negative weights; returns the
    // weighted mean negative log-likelihood in nats (scalar node)
    int cross_entropy(int logits, std::vector<int> targets, std::vector<T> weights) {
        const Tensor<T>& L = val(logits);
        size_t rows = L.rows(), cols = L.cols();
        if (targets.size() != rows || weights.size() != rows)
            throw std::invalid_argument("cross_entropy: targets/weights size mismatch");
        T wsum = 0;
        for (T w : weights) wsum += w;
        if (wsum <= T(0)) throw std::invalid_argument("cross_entropy: zero total weight");
        T total = 0;
        for (size_t r = 0; r < rows; ++r) {
            if (weights[r] == T(0)) continue;
            const T* x = L.data.data() + r * cols;
            T mx = x[0];
            for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
            check_finite("cross_entropy", mx);
            T lse = 0;
            for (size_t c = 0; c < cols; ++c) lse += std::exp(x[c] - mx);
            check_finite("cross_entropy", lse);
            lse = mx + std::log(lse);
            total += weights[r] * (lse - x[targets[r]]);
        }
        Tensor<T> out({1});
        out[0] = total / wsum;
        return push(std::move(out), needs_grad(logits),
                    [logits, rows, cols, wsum, targets = std::move(targets),
                     weights = std::move(weights)](Tape& t, int self) {
            if (!t.needs_grad(logits)) return;
            const Tensor<T>& L = t.val(logits);
            T up = t.grad(self)[0];
            for (size_t r = 0; r < rows; ++r) {
                if (weights[r] == T(0)) continue;
                const T* x = L.data.data() + r * cols;
                T mx = x[0];
                for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
                T sum = 0;
                for (size_t c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
                T coef = up * weights[r] / wsum;
                for (size_t c = 0; c < cols; ++c) {
                    T p = std::exp(x[c] - mx) / sum;
                    t.grad(logits)[r * cols + c] += coef * (p - ((size_t)targets[r] == c ? T(1) : T(0)));
                }
            }
        });
    }

    int reshape(int a, std::vector<size_t> new_shape) {
        const Tensor<T>& A = val(a);
        if (Tensor<T>::count(new_shape) != A.size()) throw std::invalid_argument("reshape: element count");
        Tensor<T> out(new_shape, A.data);
        return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t i = 0; i < d.size(); ++i) t.grad(a)[i] += d[i];
        });
    }

    // [B,S,H*Dh] -> [B*H,S,Dh]
    int split_heads(int a, size_t n_heads) {
        const Tensor<T>& A = val(a);
        if (A.rank() != 3 || A.dim(2) % n_heads != 0) throw std::invalid_argument("split_heads: shape");
        size_t B = A.dim(0), S = A.dim(1), D = A.dim(2), Dh = D / n_heads;
        Tensor<T> out({B * n_heads, S, Dh});
        for (size_t b = 0; b < B; ++b)
            for (size_t s = 0; s < S; ++s)
                for (size_t h = 0; h < n_heads; ++h)
                    std::copy_n(A.data.data() + (b * S + s) * D + h * Dh, Dh,
                                out.data.data() + ((b * n_heads + h) * S + s) * Dh);
        return push(std::move(out), needs_grad(a), [a, B, S, D, Dh, n_heads](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t b = 0; b < B; ++b)
                for (size_t s = 0; s < S; ++s)
                    for (size_t h = 0; h < n_heads; ++h)
                        for (size_t c = 0; c < Dh; ++c)
                            t.grad(a)[(b * S + s) * D + h * Dh + c] +=
                                d[((b * n_heads + h) * S + s) * Dh + c];
        });
    }

    // [B*H,S,Dh] -> [B,S,H*Dh]
    int merge_heads(int a, size_t n_heads) {
        const Tensor<T>& A = val(a);
        if (A.rank() != 3 || A.dim(0) % n_heads != 0) throw std::invalid_argument("merge_heads: shape");
        size_t B = A.dim(0) / n_heads, S = A.dim(1), Dh = A.dim(2), D = n_heads * Dh;
        Tensor<T> out({B, S, D});
        for (size_t b = 0; b < B; ++b)
            for (size_t s = 0; s < S; ++s)
                for (size_t h = 0; h < n_heads; ++h)
                    std::copy_n(A.data.data() + ((b * n_heads + h) * S + s) * Dh, Dh,
                                out.data.data() + (b * S + s) * D + h * Dh);
        return push(std::move(out), needs_grad(a), [a, B, S, D, Dh, n_heads](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            const Tensor<T>& d = t.grad(self);
            for (size_t b = 0; b < B; ++b)
                for (size_t s = 0; s < S; ++s)
                    for (size_t h = 0; h < n_heads; ++h)
                        for (size_t c = 0; c < Dh; ++c)
                            t.grad(a)[((b * n_heads + h) * S + s) * Dh + c] +=
                                d[(b * S + s) * D + h * Dh + c];
        });
    }

    int sum(int a) {
        const Tensor<T>& A = val(a);
        Tensor<T> out({1});
        for (T v : A.data) out[0] += v;
        return push(std::move(out), needs_grad(a), [a](Tape& t, int self) {
            if (!t.needs_grad(a)) return;
            T up = t.grad(self)[0];
            for (auto& g : t.grad(a).data) g += up;
        });
    }

    // ---- backward ----------------------------------------------------------

    void backward(int loss) {
        if (val(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor<T>(n.value.shape);
        }
        nodes_[loss].grad[0] = T(1);
        for (int i = loss; i >= 0; --i) {
            if (nodes_[i].backward && nodes_[i].requires_grad) nodes_[i].backward(*this, i);
        }
    }

    bool needs_grad(int id) const { return nodes_[id].requires_grad; }

private:
    // Finiteness is enforced at the reductions (softmax, cross_entropy): a NaN
    // anywhere upstream propagates into the row max and is caught there.
    int push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
        nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad, std::move(fn)});
        return (int)nodes_.size() - 1;
    }

    std::deque<Node> nodes_;
};

} // namespace parlab
