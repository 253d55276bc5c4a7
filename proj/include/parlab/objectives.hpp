#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "parlab/corpus.hpp"
#include "parlab/rng.hpp"
#include "parlab/tape.hpp"

namespace parlab {

// cosine masking schedule: probability a token is masked at noise level t
inline double gamma_schedule(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("gamma: t outside [0,1]");
    double c = std::cos(std::numbers::pi * t / 2.0);
    return 1.0 - c * c;
}

struct MaskRealization {
    double t = 0.0;
    std::vector<uint8_t> mask;  // 1 = masked
    TokenSeq corrupted;

    size_t masked_count() const {
        size_t n = 0;
        for (uint8_t m : mask) n += m;
        return n;
    }
};

// Raised when a sampled batch has no masked position at all; the trainer
// responds by resampling t rather than dividing by zero.
struct ResampleNeeded : std::runtime_error {
    ResampleNeeded() : std::runtime_error("mdlm batch has zero masked positions; resample t") {}
};

inline MaskRealization apply_mask(const TokenSeq& seq, double t, Rng& rng) {
    double g = gamma_schedule(t); // validates t
    MaskRealization out;
    out.t = t;
    out.mask.resize(seq.size());
    out.corrupted = seq;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] == vocab::MASK) throw std::invalid_argument("apply_mask: input already contains MASK");
        bool m = rng.uniform() < g;
        out.mask[i] = m;
        if (m) out.corrupted[i] = vocab::MASK;
    }
    return out;
}

// Eq-style next-token loss: positions 0..T-2 predict tokens 1..T-1; mean
// cross-entropy in nats over all predicted positions.
template <typename T>
int ar_loss(Tape<T>& tape, int logits, const std::vector<TokenSeq>& targets) {
    const Tensor<T>& L = tape.val(logits);
    if (L.rank() != 3) throw std::invalid_argument("ar_loss: logits must be [B,S,V]");
    size_t B = L.dim(0), S = L.dim(1), V = L.dim(2);
    if (S < 2) throw std::invalid_argument("ar_loss: sequence length must be >= 2");
    if (targets.size() != B) throw std::invalid_argument("ar_loss: batch size mismatch");
    std::vector<int> tgt(B * S, 0);
    std::vector<T> w(B * S, T(0));
    for (size_t b = 0; b < B; ++b) {
        if (targets[b].size() != S) throw std::invalid_argument("ar_loss: target length mismatch");
        for (size_t s = 0; s + 1 < S; ++s) {
            tgt[b * S + s] = targets[b][s + 1];
            w[b * S + s] = T(1);
        }
    }
    return tape.cross_entropy(tape.reshape(logits, {B * S, V}), std::move(tgt), std::move(w));
}

// Masked-token loss: mean cross-entropy over masked positions only; unmasked
// positions carry zero weight and contribute neither value nor gradient.
template <typename T>
int mdlm_loss(Tape<T>& tape, int logits, const std::vector<TokenSeq>& original,
              const std::vector<MaskRealization>& realizations) {
    const Tensor<T>& L = tape.val(logits);
    if (L.rank() != 3) throw std::invalid_argument("mdlm_loss: logits must be [B,S,V]");
    size_t B = L.dim(0), S = L.dim(1), V = L.dim(2);
    if (original.size() != B || realizations.size() != B)
        throw std::invalid_argument("mdlm_loss: batch size mismatch");
    std::vector<int> tgt(B * S, 0);
    std::vector<T> w(B * S, T(0));
    size_t masked_total = 0;
    for (size_t b = 0; b < B; ++b) {
        if (original[b].size() != S || realizations[b].mask.size() != S)
            throw std::invalid_argument("mdlm_loss: sequence length mismatch");
        for (size_t s = 0; s < S; ++s) {
            tgt[b * S + s] = original[b][s];
            if (realizations[b].mask[s]) {
                w[b * S + s] = T(1);
                ++masked_total;
            }
        }
    }
    if (masked_total == 0) throw ResampleNeeded{};
    return tape.cross_entropy(tape.reshape(logits, {B * S, V}), std::move(tgt), std::move(w));
}

} // namespace parlab
