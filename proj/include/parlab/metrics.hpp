#pragma once

#include <optional>
#include <string>
#include <vector>

#include "parlab/corpus.hpp"

namespace parlab {

struct SampleSet {
    std::vector<std::string> texts;
    std::vector<TokenSeq> token_samples;
    std::string provenance; // checkpoint hash + generation settings

    static SampleSet from_tokens(std::vector<TokenSeq> tokens, std::string provenance = "");
    // canonical form: token_samples re-derived from the texts, so a set built
    // from generated tokens and one re-read from a samples file are identical
    static SampleSet from_texts(std::vector<std::string> texts, std::string provenance = "");
    void validate() const;
};

struct DiversityReport {
    std::optional<double> distinct_n[4]; // n = 1..4; absent if no sample long enough
    double self_bleu = 0.0;
    long long vocab_used = 0;
    double unique_first_word_fraction = 0.0;
    double unique_first_5gram_fraction = 0.0;
    size_t sample_count = 0;
};

// ratio of unique token-id n-grams to total n-gram slots, corpus-aggregated
std::optional<double> distinct_n(const SampleSet& set, int n);

// mean multi-reference BLEU (n-grams 1..4, uniform weights, brevity penalty,
// epsilon-smoothed precisions) of each sample against refs_per_sample random
// others drawn without replacement
double self_bleu(const SampleSet& set, int refs_per_sample, uint64_t seed);

long long vocab_used(const SampleSet& set);

// fraction of samples whose first k whitespace-delimited words are shared by
// no other sample's opening
double unique_openings(const SampleSet& set, int k);

DiversityReport diversity_report(const SampleSet& set, uint64_t seed, int refs_per_sample = 50);

struct MetricRow {
    std::string metric;
    std::optional<double> a, b;
    std::string verdict; // label_a | label_b | "tie" | "n/a"
};

struct PairedReport {
    DiversityReport report_a, report_b;
    std::vector<MetricRow> rows;
    std::string label_a, label_b;

    std::string to_csv() const; // metric,set_a,set_b,verdict
    std::string to_table() const;
};

PairedReport compile_report(const SampleSet& set_a, const SampleSet& set_b, uint64_t seed,
                            const std::string& label_a = "set_a", const std::string& label_b = "set_b",
                            int refs_per_sample = 50);

} // namespace parlab
