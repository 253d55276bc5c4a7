#include "parlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "parlab/rng.hpp"

namespace parlab {

namespace {

constexpr uint64_t STREAM_BLEU = 11;
constexpr double BLEU_EPS = 1e-9;

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(std::move(w));
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts count_ngrams(const TokenSeq& s, int n) {
    NgramCounts out;
    for (size_t i = 0; i + n <= s.size(); ++i)
        out[std::vector<int>(s.begin() + i, s.begin() + i + n)] += 1;
    return out;
}

double bleu(const TokenSeq& cand, const std::vector<const TokenSeq*>& refs) {
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        NgramCounts cc = count_ngrams(cand, n);
        NgramCounts max_ref;
        for (const TokenSeq* r : refs)
            for (auto& [g, c] : count_ngrams(*r, n)) max_ref[g] = std::max(max_ref[g], c);
        long long clipped = 0, total = 0;
        for (auto& [g, c] : cc) {
            total += c;
            auto it = max_ref.find(g);
            clipped += std::min<long long>(c, it == max_ref.end() ? 0 : it->second);
        }
        double p = total > 0 && clipped > 0 ? (double)clipped / (double)total : BLEU_EPS;
        log_sum += 0.25 * std::log(p);
    }
    // brevity penalty against the closest reference length (shorter on ties)
    size_t c = cand.size();
    size_t r_best = refs[0]->size();
    for (const TokenSeq* r : refs) {
        size_t rl = r->size();
        auto dist = [&](size_t x) { return x > c ? x - c : c - x; };
        if (dist(rl) < dist(r_best) || (dist(rl) == dist(r_best) && rl < r_best)) r_best = rl;
    }
    double bp = c >= r_best ? 1.0 : std::exp(1.0 - (double)r_best / (double)c);
    return bp * std::exp(log_sum);
}

} // namespace

SampleSet SampleSet::from_tokens(std::vector<TokenSeq> tokens, std::string provenance) {
    SampleSet out;
    out.token_samples = std::move(tokens);
    out.provenance = std::move(provenance);
    out.texts.reserve(out.token_samples.size());
    for (const auto& t : out.token_samples) out.texts.push_back(detokenize(t));
    return out;
}

SampleSet SampleSet::from_texts(std::vector<std::string> texts, std::string provenance) {
    SampleSet out;
    out.texts = std::move(texts);
    out.provenance = std::move(provenance);
    out.token_samples.reserve(out.texts.size());
    for (const auto& t : out.texts) out.token_samples.push_back(tokenize(t));
    return out;
}

void SampleSet::validate() const {
    if (texts.size() != token_samples.size())
        throw std::invalid_argument("sample set: text/token lists not parallel");
    if (texts.empty()) throw std::invalid_argument("sample set: empty");
}

std::optional<double> distinct_n(const SampleSet& set, int n) {
    set.validate();
    if (n < 1) throw std::invalid_argument("distinct_n: n must be >= 1");
    std::set<std::vector<int>> unique;
    long long total = 0;
    for (const auto& s : set.token_samples) {
        for (size_t i = 0; i + n <= s.size(); ++i) {
            unique.insert(std::vector<int>(s.begin() + i, s.begin() + i + n));
            ++total;
        }
    }
    if (total == 0) return std::nullopt;
    return (double)unique.size() / (double)total;
}

double self_bleu(const SampleSet& set, int refs_per_sample, uint64_t seed) {
    set.validate();
    int n = (int)set.token_samples.size();
    if (n < 2) throw std::invalid_argument("self_bleu: need at least 2 samples");
    int refs = refs_per_sample;
    if (n <= refs) {
        refs = n - 1;
        std::cerr << "self_bleu: only " << n << " samples; reducing references to " << refs << "\n";
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        std::vector<int> others;
        others.reserve(n - 1);
        for (int j = 0; j < n; ++j)
            if (j != i) others.push_back(j);
        Rng rng(derive_seed(seed, STREAM_BLEU, (uint64_t)i));
        rng.shuffle(others);
        std::vector<const TokenSeq*> chosen;
        for (int j = 0; j < refs; ++j) chosen.push_back(&set.token_samples[others[j]]);
        sum += bleu(set.token_samples[i], chosen);
    }
    return sum / n;
}

long long vocab_used(const SampleSet& set) {
    set.validate();
    std::set<int> ids;
    for (const auto& s : set.token_samples) ids.insert(s.begin(), s.end());
    return (long long)ids.size();
}

double unique_openings(const SampleSet& set, int k) {
    set.validate();
    if (k < 1) throw std::invalid_argument("unique_openings: k must be >= 1");
    std::vector<std::vector<std::string>> openings;
    for (const auto& t : set.texts) {
        auto w = words_of(t);
        if ((int)w.size() > k) w.resize(k);
        openings.push_back(std::move(w));
    }
    size_t n = openings.size(), unique = 0;
    for (size_t i = 0; i < n; ++i) {
        // sample i is non-unique if any other sample's opening starts with
        // sample i's (possibly shorter than k) opening
        bool shared = false;
        for (size_t j = 0; j < n && !shared; ++j) {
            if (j == i) continue;
            if (openings[j].size() < openings[i].size()) continue;
            shared = std::equal(openings[i].begin(), openings[i].end(), openings[j].begin());
        }
        if (!shared) ++unique;
    }
    return (double)unique / (double)n;
}

DiversityReport diversity_report(const SampleSet& set, uint64_t seed, int refs_per_sample) {
    set.validate();
    DiversityReport r;
    for (int n = 1; n <= 4; ++n) r.distinct_n[n - 1] = distinct_n(set, n);
    r.self_bleu = self_bleu(set, refs_per_sample, seed);
    r.vocab_used = vocab_used(set);
    r.unique_first_word_fraction = unique_openings(set, 1);
    r.unique_first_5gram_fraction = unique_openings(set, 5);
    r.sample_count = set.texts.size();
    return r;
}

PairedReport compile_report(const SampleSet& set_a, const SampleSet& set_b, uint64_t seed,
                            const std::string& label_a, const std::string& label_b,
                            int refs_per_sample) {
    PairedReport out;
    out.label_a = label_a;
    out.label_b = label_b;
    out.report_a = diversity_report(set_a, seed, refs_per_sample);
    out.report_b = diversity_report(set_b, seed, refs_per_sample);

    // higher_wins: which direction counts as "more diverse" for the row
    auto row = [&](const std::string& name, std::optional<double> a, std::optional<double> b,
                   bool higher_wins) {
        MetricRow r{name, a, b, "n/a"};
        if (a && b) {
            if (*a == *b) r.verdict = "tie";
            else r.verdict = (*a > *b) == higher_wins ? label_a : label_b;
        }
        out.rows.push_back(std::move(r));
    };
    for (int n = 1; n <= 4; ++n)
        row("distinct_" + std::to_string(n), out.report_a.distinct_n[n - 1],
            out.report_b.distinct_n[n - 1], true);
    row("self_bleu", out.report_a.self_bleu, out.report_b.self_bleu, false);
    row("vocab_used", (double)out.report_a.vocab_used, (double)out.report_b.vocab_used, true);
    row("unique_first_words", out.report_a.unique_first_word_fraction,
        out.report_b.unique_first_word_fraction, true);
    row("unique_first_5grams", out.report_a.unique_first_5gram_fraction,
        out.report_b.unique_first_5gram_fraction, true);
    return out;
}

std::string PairedReport::to_csv() const {
    std::ostringstream os;
    os << "metric," << label_a << "," << label_b << ",verdict\n";
    for (const auto& r : rows) {
        os << r.metric << "," << (r.a ? fmt(*r.a) : "absent") << "," << (r.b ? fmt(*r.b) : "absent")
           << "," << r.verdict << "\n";
    }
    return os.str();
}

std::string PairedReport::to_table() const {
    std::ostringstream os;
    os << "| Metric | " << label_a << " | " << label_b << " | More diverse |\n";
    os << "|---|---|---|---|\n";
    for (const auto& r : rows)
        os << "| " << r.metric << " | " << (r.a ? fmt(*r.a) : "absent") << " | "
           << (r.b ? fmt(*r.b) : "absent") << " | " << r.verdict << " |\n";
    return os.str();
}

} // namespace parlab
