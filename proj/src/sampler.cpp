#include "parlab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "parlab/rng.hpp"

namespace parlab {

namespace {

constexpr uint64_t STREAM_SAMPLE = 7;

Rng sample_rng(uint64_t seed, uint64_t index) { return Rng(hash_mix(seed ^ hash_mix(index))); }

std::vector<double> stable_softmax(const std::vector<double>& x) {
    double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> y(x.size());
    double sum = 0;
    for (size_t i = 0; i < x.size(); ++i) { y[i] = std::exp(x[i] - mx); sum += y[i]; }
    for (auto& v : y) v /= sum;
    return y;
}

// The corruption sentinels are never valid output tokens; excluding them
// keeps generation well-defined even on untrained weights.
void forbid_specials(std::vector<double>& z) {
    if (z.size() > (size_t)vocab::MASK) z[vocab::MASK] = -1e30;
    if (z.size() > (size_t)vocab::PAD) z[vocab::PAD] = -1e30;
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    double cum = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return (int)i;
    }
    // guard against rounding; the last positive entry wins
    for (size_t i = probs.size(); i-- > 0;)
        if (probs[i] > 0) return (int)i;
    throw std::runtime_error("sample_categorical: degenerate distribution");
}

} // namespace

std::vector<double> nucleus_filter(const std::vector<double>& probs, double p) {
    if (!(p > 0 && p <= 1)) throw std::invalid_argument("nucleus_filter: p must be in (0,1]");
    std::vector<size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return probs[a] > probs[b]; });
    std::vector<double> out(probs.size(), 0.0);
    double cum = 0.0;
    for (size_t i : idx) {
        out[i] = probs[i];
        cum += probs[i];
        if (cum >= p - 1e-12) break;
    }
    for (auto& v : out) v /= cum;
    return out;
}

double anneal_temperature(int s, int S, double tau_start, double tau_end) {
    if (s < 0 || s >= S) throw std::invalid_argument("anneal_temperature: step out of range");
    if (S == 1) return tau_end;
    return tau_start + (tau_end - tau_start) * (double)s / (double)(S - 1);
}

std::vector<int> unmask_quota(int L, int S) {
    if (L < 1 || S < 1) throw std::invalid_argument("unmask_quota: L and S must be >= 1");
    int Se = std::min(S, L);
    int base = L / Se, rem = L % Se;
    std::vector<int> counts(Se, base);
    for (int i = 0; i < rem; ++i) counts[i] += 1;
    return counts;
}

void apply_repetition_penalty(std::vector<float>& logits, const std::vector<uint8_t>& committed,
                              double penalty) {
    if (!(penalty >= 1)) throw std::invalid_argument("apply_repetition_penalty: penalty must be >= 1");
    if (committed.size() != logits.size())
        throw std::invalid_argument("apply_repetition_penalty: size mismatch");
    for (size_t i = 0; i < logits.size(); ++i) {
        if (!committed[i]) continue;
        logits[i] = logits[i] > 0 ? (float)(logits[i] / penalty) : (float)(logits[i] * penalty);
    }
}

std::vector<TokenSeq> ar_generate_batch(const Model<float>& model, const GenerationConfig& cfg,
                                        int n_samples, int batch) {
    cfg.validate();
    if (model.cfg.attention_mode != AttentionMode::causal || model.cfg.timestep_conditioning)
        throw std::invalid_argument("ar_generate: checkpoint is not an AR model");
    int V = model.cfg.vocab_size;
    size_t ctx_max = (size_t)model.cfg.seq_len;
    std::vector<TokenSeq> out(n_samples);
    for (int s0 = 0; s0 < n_samples; s0 += batch) {
        int nb = std::min(batch, n_samples - s0);
        std::vector<TokenSeq> toks(nb, TokenSeq{vocab::EOS}); // document-start prime
        std::vector<Rng> rngs;
        for (int j = 0; j < nb; ++j) rngs.push_back(sample_rng(cfg.seed, (uint64_t)(s0 + j)));
        for (int i = 0; i < cfg.length; ++i) {
            std::vector<TokenSeq> ctx(nb);
            for (int j = 0; j < nb; ++j) {
                size_t len = std::min(toks[j].size(), ctx_max);
                ctx[j].assign(toks[j].end() - len, toks[j].end());
            }
            Tape<float> tape;
            auto fw = model.forward(tape, ctx, std::nullopt);
            const Tensor<float>& logits = tape.val(fw.logits);
            size_t S = ctx[0].size();
            for (int j = 0; j < nb; ++j) {
                std::vector<double> z(V);
                const float* row = logits.data.data() + ((size_t)j * S + (S - 1)) * V;
                for (int c = 0; c < V; ++c) z[c] = row[c] / cfg.temperature;
                forbid_specials(z);
                auto probs = nucleus_filter(stable_softmax(z), cfg.top_p);
                toks[j].push_back(sample_categorical(probs, rngs[j]));
            }
        }
        for (int j = 0; j < nb; ++j)
            out[s0 + j].assign(toks[j].begin() + 1, toks[j].end());
    }
    return out;
}

TokenSeq ar_generate(const Model<float>& model, const GenerationConfig& cfg) {
    return ar_generate_batch(model, cfg, 1, 1)[0];
}

std::vector<TokenSeq> mdlm_generate_batch(const Model<float>& model, const GenerationConfig& cfg,
                                          int n_samples, int batch) {
    cfg.validate();
    if (model.cfg.attention_mode != AttentionMode::bidirectional || !model.cfg.timestep_conditioning)
        throw std::invalid_argument("mdlm_generate: checkpoint is not an MDLM model");
    int L = cfg.length, V = model.cfg.vocab_size;
    if (L > model.cfg.seq_len) throw std::invalid_argument("mdlm_generate: length exceeds model seq_len");
    std::vector<int> quota = unmask_quota(L, cfg.steps);
    int Se = (int)quota.size();
    std::vector<TokenSeq> out(n_samples);
    for (int s0 = 0; s0 < n_samples; s0 += batch) {
        int nb = std::min(batch, n_samples - s0);
        std::vector<TokenSeq> toks(nb, TokenSeq(L, vocab::MASK));
        std::vector<std::vector<uint8_t>> committed(nb, std::vector<uint8_t>(V, 0));
        std::vector<int> masked(nb, L);
        std::vector<Rng> rngs;
        for (int j = 0; j < nb; ++j) rngs.push_back(sample_rng(cfg.seed, (uint64_t)(s0 + j)));
        for (int s = 0; s < Se; ++s) {
            double tau = anneal_temperature(s, Se, cfg.tau_start, cfg.tau_end);
            std::vector<float> ts(nb);
            for (int j = 0; j < nb; ++j) ts[j] = (float)masked[j] / (float)L;
            Tape<float> tape;
            auto fw = model.forward(tape, toks, std::make_optional(ts));
            const Tensor<float>& logits = tape.val(fw.logits);
            for (int j = 0; j < nb; ++j) {
                struct Cand { int pos; int token; double conf; double tie; };
                std::vector<Cand> cands;
                for (int pos = 0; pos < L; ++pos) {
                    if (toks[j][pos] != vocab::MASK) continue;
                    std::vector<float> row(logits.data.data() + ((size_t)j * L + pos) * V,
                                           logits.data.data() + ((size_t)j * L + pos + 1) * V);
                    apply_repetition_penalty(row, committed[j], cfg.repetition_penalty);
                    std::vector<double> z(V);
                    for (int c = 0; c < V; ++c) z[c] = row[c] / tau;
                    forbid_specials(z);
                    auto probs = stable_softmax(z);
                    int tok = sample_categorical(probs, rngs[j]);
                    double tie = rngs[j].uniform();
                    cands.push_back({pos, tok, probs[tok], tie});
                }
                int k = std::min(quota[s], (int)cands.size());
                std::partial_sort(cands.begin(), cands.begin() + k, cands.end(),
                                  [](const Cand& a, const Cand& b) {
                                      if (a.conf != b.conf) return a.conf > b.conf;
                                      return a.tie < b.tie;
                                  });
                for (int c = 0; c < k; ++c) {
                    toks[j][cands[c].pos] = cands[c].token;
                    committed[j][cands[c].token] = 1;
                    masked[j] -= 1;
                }
            }
        }
        for (int j = 0; j < nb; ++j) {
            for (int tok : toks[j])
                if (tok == vocab::MASK) throw std::runtime_error("mdlm_generate: MASK survived denoising");
            out[s0 + j] = std::move(toks[j]);
        }
    }
    return out;
}

TokenSeq mdlm_generate(const Model<float>& model, const GenerationConfig& cfg) {
    return mdlm_generate_batch(model, cfg, 1, 1)[0];
}

} // namespace parlab
