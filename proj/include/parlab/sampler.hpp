#pragma once

#include <cstdint>
#include <vector>

#include "parlab/model.hpp"

namespace parlab {

struct GenerationConfig {
    int length = 128;
    // AR branch
    double top_p = 0.9;
    double temperature = 0.8;
    // MDLM branch
    int steps = 100;
    double tau_start = 1.2;
    double tau_end = 0.5;
    double repetition_penalty = 1.3;
    uint64_t seed = 0;

    void validate() const {
        if (length < 1) throw std::invalid_argument("generation: length must be >= 1");
        if (!(top_p > 0 && top_p <= 1)) throw std::invalid_argument("generation: top_p must be in (0,1]");
        if (!(temperature > 0) || !(tau_start > 0) || !(tau_end > 0))
            throw std::invalid_argument("generation: temperatures must be > 0");
        if (steps < 1) throw std::invalid_argument("generation: steps must be >= 1");
        if (!(repetition_penalty >= 1)) throw std::invalid_argument("generation: penalty must be >= 1");
    }
};

// Keep the smallest set of highest-probability tokens with cumulative mass
// >= p; zero out the rest and renormalize.
std::vector<double> nucleus_filter(const std::vector<double>& probs, double p);

// linear annealing tau(s) from tau_start at s=0 to tau_end at s=S-1
double anneal_temperature(int s, int S, double tau_start, double tau_end);

// Per-step unmask counts: S' = min(S, L), base floor(L/S'), remainder spread
// over the earliest steps; counts sum to exactly L.
std::vector<int> unmask_quota(int L, int S);

// Sign-aware suppression of already-committed token ids: positive logits are
// divided by the penalty, negative logits multiplied, so the adjustment
// always lowers the token's probability.
void apply_repetition_penalty(std::vector<float>& logits, const std::vector<uint8_t>& committed,
                              double penalty);

// Left-to-right nucleus sampling, primed with a single EOS.
TokenSeq ar_generate(const Model<float>& model, const GenerationConfig& cfg);

// Confidence-based iterative unmasking from an all-MASK sequence.
TokenSeq mdlm_generate(const Model<float>& model, const GenerationConfig& cfg);

// Batched drivers: sample i uses the seed derived from (cfg.seed, i), so the
// output is independent of the internal batching.
std::vector<TokenSeq> ar_generate_batch(const Model<float>& model, const GenerationConfig& cfg,
                                        int n_samples, int batch = 16);
std::vector<TokenSeq> mdlm_generate_batch(const Model<float>& model, const GenerationConfig& cfg,
                                          int n_samples, int batch = 16);

} // namespace parlab
