#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parlab/corpus.hpp"
#include "parlab/rng.hpp"
#include "parlab/tape.hpp"
#include "parlab/tensor.hpp"

namespace parlab {

enum class AttentionMode { causal, bidirectional };
enum class Paradigm { AR, MDLM };

inline const char* to_string(Paradigm p) { return p == Paradigm::AR ? "ar" : "mdlm"; }

struct ModelConfig {
    int vocab_size = vocab::SIZE;
    int d_model = 128;
    int n_layers = 4;
    int n_heads = 4;
    int ffn_dim = 512;
    int seq_len = 128;
    AttentionMode attention_mode = AttentionMode::causal;
    bool timestep_conditioning = false;
    bool tie_output_head = false;

    void validate() const {
        if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
            throw std::invalid_argument("config: d_model must be divisible by n_heads");
        if (seq_len < 2) throw std::invalid_argument("config: seq_len must be >= 2");
        if (n_layers < 0 || ffn_dim <= 0 || vocab_size <= 0)
            throw std::invalid_argument("config: invalid dimensions");
        if (timestep_conditioning && d_model % 2 != 0)
            throw std::invalid_argument("config: timestep conditioning needs even d_model");
    }

    // paradigm presets: the two models differ only in these switches
    static ModelConfig for_paradigm(ModelConfig shared, Paradigm p) {
        shared.attention_mode = p == Paradigm::AR ? AttentionMode::causal : AttentionMode::bidirectional;
        shared.timestep_conditioning = p == Paradigm::MDLM;
        return shared;
    }
};

// closed-form parameter count; must match the constructed tensors exactly
inline long long count_params(const ModelConfig& c) {
    c.validate();
    long long d = c.d_model, V = c.vocab_size, F = c.ffn_dim;
    long long n = V * d + (long long)c.seq_len * d; // token + positional embeddings
    n += (long long)c.n_layers * (2 * d               // ln1
                                  + 4 * (d * d + d)   // q,k,v,o projections
                                  + 2 * d             // ln2
                                  + d * F + F         // ffn up
                                  + F * d + d);       // ffn down
    n += 2 * d; // final layer norm
    if (!c.tie_output_head) n += d * V;
    if (c.timestep_conditioning) n += (d * d + d) + (d * d + d); // two-layer timestep MLP
    return n;
}

// raw sinusoidal features: interleaved (sin(t*w_i), cos(t*w_i)),
// w_i = 10000^(-2i/dim)
template <typename T>
std::vector<T> timestep_sinusoid(T t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("timestep_sinusoid: dim must be even");
    std::vector<T> out(dim);
    for (int i = 0; i < dim / 2; ++i) {
        T w = std::pow(T(10000), T(-2.0 * i / dim));
        out[2 * i] = std::sin(t * w);
        out[2 * i + 1] = std::cos(t * w);
    }
    return out;
}

template <typename T>
struct Parameters {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;

    void add(std::string name, std::vector<size_t> shape) {
        names.push_back(std::move(name));
        tensors.emplace_back(std::move(shape));
    }
    int index(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return (int)i;
        throw std::out_of_range("parameter not found: " + name);
    }
    Tensor<T>& get(const std::string& name) { return tensors[index(name)]; }
    const Tensor<T>& get(const std::string& name) const { return tensors[index(name)]; }

    long long element_count() const {
        long long n = 0;
        for (const auto& t : tensors) n += (long long)t.size();
        return n;
    }

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        out.names = names;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
};

template <typename T>
struct ForwardNodes {
    int logits = -1;                 // [B, S, V]
    std::vector<int> param_nodes;    // aligned with Parameters order
};

template <typename T>
class Model {
public:
    ModelConfig cfg;
    Parameters<T> params;

    explicit Model(ModelConfig c) : cfg(c) {
        cfg.validate();
        size_t d = cfg.d_model, V = cfg.vocab_size, F = cfg.ffn_dim;
        params.add("tok_emb", {V, d});
        params.add("pos_emb", {(size_t)cfg.seq_len, d});
        for (int l = 0; l < cfg.n_layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            params.add(p + "ln1.g", {d});
            params.add(p + "ln1.b", {d});
            for (const char* w : {"wq", "wk", "wv", "wo"}) {
                params.add(p + "attn." + w, {d, d});
                params.add(p + "attn.b" + std::string(w + 1), {d});
            }
            params.add(p + "ln2.g", {d});
            params.add(p + "ln2.b", {d});
            params.add(p + "ffn.w1", {d, F});
            params.add(p + "ffn.b1", {F});
            params.add(p + "ffn.w2", {F, d});
            params.add(p + "ffn.b2", {d});
        }
        params.add("lnf.g", {d});
        params.add("lnf.b", {d});
        if (!cfg.tie_output_head) params.add("head.w", {d, V});
        if (cfg.timestep_conditioning) {
            params.add("time.w1", {d, d});
            params.add("time.b1", {d});
            params.add("time.w2", {d, d});
            params.add("time.b2", {d});
        }
    }

    void init_weights(uint64_t seed) {
        Rng rng(derive_seed(seed, 0x1717, 0));
        for (size_t i = 0; i < params.names.size(); ++i) {
            const std::string& n = params.names[i];
            Tensor<T>& t = params.tensors[i];
            if (t.rank() == 1) {
                // layer-norm gains start at 1, every other vector (biases) at 0
                T fill = n.ends_with(".g") ? T(1) : T(0);
                for (auto& v : t.data) v = fill;
            } else {
                for (auto& v : t.data) v = T(0.02) * T(rng.normal());
            }
        }
    }

    // tokens: batch of equal-length sequences (length S <= seq_len);
    // t: per-example timesteps, present iff timestep conditioning is on
    ForwardNodes<T> forward(Tape<T>& tape, const std::vector<TokenSeq>& tokens,
                            const std::optional<std::vector<T>>& t) const {
        if (tokens.empty()) throw std::invalid_argument("forward: empty batch");
        size_t B = tokens.size(), S = tokens[0].size();
        if (S < 1 || S > (size_t)cfg.seq_len) throw std::invalid_argument("forward: bad sequence length");
        for (const auto& seq : tokens)
            if (seq.size() != S) throw std::invalid_argument("forward: ragged batch");
        if (cfg.timestep_conditioning != t.has_value())
            throw std::invalid_argument("forward: timestep argument does not match configuration");
        if (t) {
            if (t->size() != B) throw std::invalid_argument("forward: timestep batch size mismatch");
            for (T tv : *t)
                if (!(tv >= T(0) && tv <= T(1))) throw std::invalid_argument("forward: t outside [0,1]");
        }

        ForwardNodes<T> out;
        out.param_nodes.reserve(params.tensors.size());
        for (const auto& p : params.tensors) out.param_nodes.push_back(tape.leaf(p, true));
        auto pn = [&](const std::string& name) { return out.param_nodes[params.index(name)]; };

        size_t d = cfg.d_model;
        std::vector<int> flat_ids, pos_ids;
        flat_ids.reserve(B * S);
        pos_ids.reserve(B * S);
        for (const auto& seq : tokens)
            for (int id : seq) flat_ids.push_back(id);
        for (size_t b = 0; b < B; ++b)
            for (size_t s = 0; s < S; ++s) pos_ids.push_back((int)s);

        int x = tape.reshape(tape.embedding(pn("tok_emb"), flat_ids), {B, S, d});
        int pe = tape.reshape(tape.embedding(pn("pos_emb"), pos_ids), {B, S, d});
        x = tape.add(x, pe);

        if (cfg.timestep_conditioning) {
            Tensor<T> sinus({B, d});
            for (size_t b = 0; b < B; ++b) {
                auto row = timestep_sinusoid((*t)[b], (int)d);
                std::copy(row.begin(), row.end(), sinus.data.begin() + b * d);
            }
            int h = tape.leaf(std::move(sinus), false);
            h = tape.add(tape.matmul(h, pn("time.w1")), pn("time.b1"));
            h = tape.gelu(h);
            h = tape.add(tape.matmul(h, pn("time.w2")), pn("time.b2"));
            x = tape.add_rows(x, h);
        }

        std::optional<Tensor<T>> mask;
        if (cfg.attention_mode == AttentionMode::causal) {
            mask.emplace(std::vector<size_t>{S, S});
            for (size_t i = 0; i < S; ++i)
                for (size_t j = 0; j < S; ++j) (*mask)[i * S + j] = j <= i ? T(0) : T(-1e9);
        }

        size_t H = cfg.n_heads, dh = d / H;
        T att_scale = T(1) / std::sqrt(T(dh));
        for (int l = 0; l < cfg.n_layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            int a_in = tape.layernorm(x, pn(p + "ln1.g"), pn(p + "ln1.b"), T(1e-5));
            int q = tape.split_heads(tape.add(tape.matmul(a_in, pn(p + "attn.wq")), pn(p + "attn.bq")), H);
            int k = tape.split_heads(tape.add(tape.matmul(a_in, pn(p + "attn.wk")), pn(p + "attn.bk")), H);
            int v = tape.split_heads(tape.add(tape.matmul(a_in, pn(p + "attn.wv")), pn(p + "attn.bv")), H);
            int scores = tape.scale(tape.matmul(q, k, /*trans_b=*/true), att_scale);
            if (mask) scores = tape.add_const(scores, *mask);
            int ctx = tape.merge_heads(tape.matmul(tape.softmax(scores), v), H);
            int proj = tape.add(tape.matmul(ctx, pn(p + "attn.wo")), pn(p + "attn.bo"));
            x = tape.add(x, proj);

            int f_in = tape.layernorm(x, pn(p + "ln2.g"), pn(p + "ln2.b"), T(1e-5));
            int h1 = tape.gelu(tape.add(tape.matmul(f_in, pn(p + "ffn.w1")), pn(p + "ffn.b1")));
            int h2 = tape.add(tape.matmul(h1, pn(p + "ffn.w2")), pn(p + "ffn.b2"));
            x = tape.add(x, h2);
        }

        x = tape.layernorm(x, pn("lnf.g"), pn("lnf.b"), T(1e-5));
        out.logits = cfg.tie_output_head ? tape.matmul(x, pn("tok_emb"), /*trans_b=*/true)
                                         : tape.matmul(x, pn("head.w"));
        return out;
    }
};

} // namespace parlab
