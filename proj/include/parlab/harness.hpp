#pragma once

#include <optional>
#include <string>
#include <vector>

#include "parlab/metrics.hpp"
#include "parlab/sampler.hpp"
#include "parlab/trainer.hpp"

namespace parlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string corpus_path;
    double split_fraction = 0.05;
    ModelConfig shared_model;   // paradigm switches are derived, not configured
    TrainConfig train;
    GenerationConfig gen_ar;
    GenerationConfig gen_mdlm;
    int num_samples = 200;
    std::string output_dir;
    uint64_t seed = 0;

    KvMap to_kv() const;
    static ExperimentConfig from_kv(const KvMap& kv);
    static ExperimentConfig from_file(const std::string& path);
    std::string snapshot() const { return emit_kv(to_kv()); }
    std::string hash() const; // FNV-1a of the snapshot, hex
    void validate() const;
};

struct ParadigmSummary {
    long long best_step = -1;
    double best_val_loss = 0.0;
    double final_val_loss = 0.0;
    double tokens_per_sec = 0.0;
};

struct ComparisonReport {
    ParadigmSummary ar, mdlm;
    double throughput_ratio = 0.0; // mdlm / ar
    PairedReport diversity;
    std::vector<std::string> notes;
    std::string config_hash;

    // deterministic artifact: summaries + diversity rows, no wall-clock data
    std::string to_csv() const;
    std::string to_markdown() const;
};

struct RunOptions {
    std::optional<Paradigm> only;
    std::optional<int> num_samples;
    std::optional<int> length;
    bool resume = false;
    bool force = false;
    bool dry_run = false;
};

ComparisonReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

// recompute a report from two archived paradigm directories (log.csv +
// samples.txt each) without retraining
ComparisonReport compare(const std::string& dir_a, const std::string& dir_b,
                         bool allow_mixed = false, uint64_t seed = 0);

// loss-curve and throughput figures; CSVs always, SVGs alongside
void emit_figures(const ConvergenceLog& ar_log, const ConvergenceLog& mdlm_log,
                  const std::string& figures_dir, const std::string& config_hash);

// samples.txt: "#" header with provenance, then one escaped sample per line
void write_samples_file(const std::string& path, const SampleSet& set, const std::string& header);
SampleSet read_samples_file(const std::string& path, std::string* header_out = nullptr);

// corpus file -> chunked split at the model's sequence length
CorpusSplit load_corpus(const std::string& path, int seq_len, double fraction);

uint64_t fnv1a(const std::string& s);

} // namespace parlab
