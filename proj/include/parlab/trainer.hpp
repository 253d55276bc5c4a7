#pragma once

#include <optional>
#include <string>
#include <vector>

#include "parlab/kv.hpp"
#include "parlab/model.hpp"
#include "parlab/objectives.hpp"

namespace parlab {

struct TrainConfig {
    long long steps = 2000;
    int batch_size = 16;
    double lr = 3e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long warmup_steps = -1; // -1: default to steps/100
    long long eval_every = 100;
    uint64_t seed = 0;
    double clip_norm = 1.0;

    long long effective_warmup() const { return warmup_steps >= 0 ? warmup_steps : steps / 100; }
    void validate() const {
        if (steps <= 0) throw std::invalid_argument("train config: steps must be > 0");
        if (batch_size <= 0) throw std::invalid_argument("train config: batch_size must be > 0");
        if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
        if (eval_every <= 0) throw std::invalid_argument("train config: eval_every must be > 0");
        if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
            throw std::invalid_argument("train config: betas must be in [0,1)");
    }
};

struct OptimizerState {
    std::vector<Tensor<float>> m, v; // aligned with Parameters order
    long long step = 0;

    static OptimizerState zeros_like(const Parameters<float>& p) {
        OptimizerState s;
        for (const auto& t : p.tensors) {
            s.m.emplace_back(t.shape);
            s.v.emplace_back(t.shape);
        }
        return s;
    }
};

// one AdamW update with decoupled weight decay; grads aligned with params
void adamw_step(Parameters<float>& params, const std::vector<Tensor<float>>& grads,
                OptimizerState& state, const TrainConfig& cfg, double lr_now);

struct LogRecord {
    long long step = 0;
    std::string split; // "train" | "val"
    double loss_nats = 0.0;
    double wall_ms = 0.0;       // cumulative since run start
    double tokens_per_sec = 0.0;
};

struct ConvergenceLog {
    std::vector<LogRecord> records;

    // include_timing=false drops the wall-clock columns, giving a
    // byte-identical stream across reruns of the same (config, seed)
    std::string to_csv(bool include_timing = true) const;
    static ConvergenceLog from_csv(const std::string& text);
    void validate() const; // non-decreasing steps etc.
};

// steady-state tokens/sec over train records after the warm-in window
double measure_throughput(const ConvergenceLog& log, long long skip_steps = 50);

struct Checkpoint {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    Parameters<float> params;
    OptimizerState opt;
    long long step = 0;
    double best_val_loss = 0.0;
    long long best_step = -1;
    uint64_t master_seed = 0;
    std::string role; // "best" | "last"
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

KvMap model_config_to_kv(const ModelConfig& c);
ModelConfig model_config_from_kv(const KvMap& kv, const std::string& prefix = "model.");
KvMap train_config_to_kv(const TrainConfig& c);
TrainConfig train_config_from_kv(const KvMap& kv, const std::string& prefix = "train.");

// Deterministic validation loss. AR: mean next-token loss over all val
// chunks. MDLM: stratified timestep grid t in {0.1..0.9} assigned cyclically
// over chunks with fixed masking seeds, so repeated evaluation is bitwise
// identical.
double evaluate(const Model<float>& model, const std::vector<TokenSeq>& val, Paradigm paradigm,
                int batch_size, uint64_t seed);

struct TrainResult {
    ConvergenceLog log;
    long long best_step = -1;
    double best_val_loss = 0.0;
    double final_val_loss = 0.0;
};

// Full optimization loop; writes ckpt_best / ckpt_last under out_dir (when
// non-empty) and returns the convergence log. `resume_from` restarts an
// interrupted run from a saved last-checkpoint.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const CorpusSplit& data,
                  Paradigm paradigm, const std::string& out_dir,
                  const std::optional<std::string>& resume_from = std::nullopt,
                  Model<float>* trained_out = nullptr);

} // namespace parlab
