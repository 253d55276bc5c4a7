#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>

#include "parlab/grad_check.hpp"
#include "parlab/model.hpp"
#include "parlab/objectives.hpp"
#include "parlab/rng.hpp"

using namespace parlab;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.vocab_size = 23;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 2;
    c.ffn_dim = 32;
    c.seq_len = 8;
    return c;
}

template <typename T>
Tensor<T> run_forward(const Model<T>& m, const std::vector<TokenSeq>& toks,
                      const std::optional<std::vector<T>>& t) {
    Tape<T> tape;
    auto fwd = m.forward(tape, toks, t);
    return tape.val(fwd.logits);
}

} // namespace

TEST_CASE("count_params audit examples") {
    ModelConfig c;
    c.vocab_size = 10;
    c.d_model = 4;
    c.n_heads = 1;
    c.n_layers = 0;
    c.ffn_dim = 1;
    c.seq_len = 8;
    CHECK(count_params(c) == 120); // 10*4 + 8*4 + (4+4) + 4*10
    c.tie_output_head = true;
    CHECK(count_params(c) == 80);
    c.tie_output_head = false;
    long long base = count_params(c);
    c.timestep_conditioning = true;
    CHECK(count_params(c) - base == (4 * 4 + 4) + (4 * 4 + 4));
}

TEST_CASE("count_params matches constructed tensors for random configs") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig c;
        c.n_heads = 1 + (int)rng.uniform_int(4);
        c.d_model = c.n_heads * 2 * (1 + (int)rng.uniform_int(6));
        c.n_layers = (int)rng.uniform_int(4);
        c.ffn_dim = 1 + (int)rng.uniform_int(64);
        c.seq_len = 2 + (int)rng.uniform_int(30);
        c.vocab_size = 2 + (int)rng.uniform_int(300);
        c.tie_output_head = rng.uniform_int(2) == 0;
        c.timestep_conditioning = rng.uniform_int(2) == 0;
        CAPTURE(trial);
        Model<float> m(c);
        CHECK(count_params(c) == m.params.element_count());
    }
}

TEST_CASE("timestep sinusoid reference values") {
    auto v0 = timestep_sinusoid(0.0, 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(v0[2 * i] == doctest::Approx(0.0));
        CHECK(v0[2 * i + 1] == doctest::Approx(1.0));
    }
    auto v = timestep_sinusoid(0.5, 2); // w_0 = 1
    CHECK(v[0] == doctest::Approx(std::sin(0.5)).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(std::cos(0.5)).epsilon(1e-12));
    CHECK(timestep_sinusoid(0.5, 2)[0] == doctest::Approx(0.4794).epsilon(1e-4));
    CHECK(timestep_sinusoid(0.5, 2)[1] == doctest::Approx(0.8776).epsilon(1e-4));
    CHECK_THROWS_AS(timestep_sinusoid(0.5, 3), std::invalid_argument);
}

TEST_CASE("causal mode: perturbation only affects positions >= j") {
    auto cfg = tiny_cfg();
    Model<float> m(cfg);
    m.init_weights(123);
    std::vector<TokenSeq> toks = {{1, 2, 3, 4, 5, 6, 7, 8}};
    auto base = run_forward(m, toks, std::optional<std::vector<float>>{});
    size_t S = 8, V = cfg.vocab_size;
    for (size_t j = 0; j < S; ++j) {
        auto pert = toks;
        pert[0][j] = (pert[0][j] + 9) % cfg.vocab_size;
        auto out = run_forward(m, pert, std::optional<std::vector<float>>{});
        bool later_changed = false;
        for (size_t s = 0; s < S; ++s)
            for (size_t v = 0; v < V; ++v) {
                float a = base[s * V + v], b = out[s * V + v];
                if (s < j) {
                    CHECK(a == b); // bitwise unchanged before j
                } else if (a != b) {
                    later_changed = true;
                }
            }
        CHECK(later_changed);
    }
}

TEST_CASE("bidirectional mode: late perturbation reaches position 0") {
    auto cfg = tiny_cfg();
    cfg.attention_mode = AttentionMode::bidirectional;
    cfg.timestep_conditioning = true;
    Model<float> m(cfg);
    m.init_weights(99);
    std::vector<TokenSeq> toks = {{1, 2, 3, 4, 5, 6, 7, 8}};
    std::optional<std::vector<float>> t{{0.5f}};
    auto base = run_forward(m, toks, t);
    auto pert = toks;
    pert[0][7] = 20;
    auto out = run_forward(m, pert, t);
    size_t V = cfg.vocab_size;
    bool pos0_changed = false;
    for (size_t v = 0; v < V; ++v)
        if (base[v] != out[v]) pos0_changed = true;
    CHECK(pos0_changed);
}

TEST_CASE("timestep path is live and validated") {
    auto cfg = tiny_cfg();
    cfg.attention_mode = AttentionMode::bidirectional;
    cfg.timestep_conditioning = true;
    Model<float> m(cfg);
    m.init_weights(7);
    std::vector<TokenSeq> toks = {{3, 1, 4, 1, 5, 9, 2, 6}};
    auto z0 = run_forward(m, toks, std::optional<std::vector<float>>{{0.0f}});
    auto z1 = run_forward(m, toks, std::optional<std::vector<float>>{{1.0f}});
    float max_diff = 0;
    for (size_t i = 0; i < z0.size(); ++i) max_diff = std::max(max_diff, std::abs(z0[i] - z1[i]));
    CHECK(max_diff > 0.0f);

    Tape<float> tape;
    CHECK_THROWS_AS(m.forward(tape, toks, std::nullopt), std::invalid_argument);
    CHECK_THROWS_AS(m.forward(tape, toks, std::optional<std::vector<float>>{{1.5f}}),
                    std::invalid_argument);
    Model<float> ar(tiny_cfg());
    ar.init_weights(7);
    CHECK_THROWS_AS(ar.forward(tape, toks, std::optional<std::vector<float>>{{0.5f}}),
                    std::invalid_argument);
}

TEST_CASE("forward is deterministic") {
    auto cfg = tiny_cfg();
    Model<float> m(cfg);
    m.init_weights(5);
    std::vector<TokenSeq> toks = {{0, 1, 2, 3, 4, 5, 6, 7}, {7, 6, 5, 4, 3, 2, 1, 0}};
    auto a = run_forward(m, toks, std::optional<std::vector<float>>{});
    auto b = run_forward(m, toks, std::optional<std::vector<float>>{});
    CHECK(a.data == b.data);
}

TEST_CASE("init_weights: norm gains one, biases zero, matrices spread") {
    Model<float> m(tiny_cfg());
    m.init_weights(42);
    for (float g : m.params.get("lnf.g").data) CHECK(g == 1.0f);
    for (float b : m.params.get("layer0.attn.bq").data) CHECK(b == 0.0f);
    const auto& w = m.params.get("layer0.attn.wq");
    double sum = 0, sq = 0;
    for (float v : w.data) { sum += v; sq += (double)v * v; }
    double mean = sum / w.size(), sd = std::sqrt(sq / w.size() - mean * mean);
    CHECK(std::abs(mean) < 0.01);
    CHECK(sd == doctest::Approx(0.02).epsilon(0.3));
}

TEST_CASE("tied output head reuses the token embedding") {
    auto cfg = tiny_cfg();
    cfg.tie_output_head = true;
    Model<float> m(cfg);
    m.init_weights(3);
    CHECK_THROWS_AS(m.params.get("head.w"), std::out_of_range);
    std::vector<TokenSeq> toks = {{1, 2, 3, 4, 5, 6, 7, 8}};
    auto z = run_forward(m, toks, std::optional<std::vector<float>>{});
    CHECK(z.size() == 8u * cfg.vocab_size);
    for (float v : z.data) CHECK(std::isfinite(v));
}

TEST_CASE("end-to-end gradient check through the full model") {
    ModelConfig cfg;
    cfg.vocab_size = 11;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.ffn_dim = 12;
    cfg.seq_len = 5;

    for (bool mdlm : {false, true}) {
        CAPTURE(mdlm);
        auto c = mdlm ? ModelConfig::for_paradigm(cfg, Paradigm::MDLM) : cfg;
        Model<double> m(c);
        m.init_weights(17);
        std::vector<TokenSeq> toks = {{1, 4, 2, 9, 3}, {5, 5, 0, 7, 8}};
        std::optional<std::vector<double>> ts;
        if (mdlm) ts = std::vector<double>{0.3, 0.8};
        std::vector<int> targets = {2, 9, 3, 1, 1, 5, 0, 7, 8, 10};
        std::vector<double> weights = {1, 1, 1, 0, 1, 1, 0, 1, 1, 1};

        auto loss_of = [&](const Parameters<double>& p) {
            Model<double> mm(c);
            mm.params = p;
            Tape<double> tape;
            auto fwd = mm.forward(tape, toks, ts);
            int flat = tape.reshape(fwd.logits, {toks.size() * toks[0].size(), (size_t)c.vocab_size});
            return tape.val(tape.cross_entropy(flat, targets, weights))[0];
        };

        Tape<double> tape;
        auto fwd = m.forward(tape, toks, ts);
        int flat = tape.reshape(fwd.logits, {toks.size() * toks[0].size(), (size_t)c.vocab_size});
        int loss = tape.cross_entropy(flat, targets, weights);
        tape.backward(loss);
        std::vector<Tensor<double>> analytic;
        for (int id : fwd.param_nodes) analytic.push_back(tape.grad(id));

        Rng rng(23);
        auto rep = grad_check(m.params, analytic, loss_of, 80, 1e-5, rng);
        CHECK(rep.coords_checked == 80);
        // looser than the per-kernel bound: deep composition amplifies
        // finite-difference cancellation noise
        CHECK(rep.max_rel_err < 1e-4);
    }
}
