#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "parlab/harness.hpp"

namespace py = pybind11;
using namespace parlab;

namespace {

SampleSet set_from_texts(const std::vector<std::string>& texts) {
    return SampleSet::from_texts(texts);
}

} // namespace

PYBIND11_MODULE(_parlab, m) {
    m.doc() = "paradigm lab core: byte tokenizer, masking schedule, sampler "
              "primitives, and diversity metrics";

    // corpus
    m.def("tokenize", &tokenize, py::arg("text"));
    m.def("detokenize", &detokenize, py::arg("tokens"));
    m.attr("VOCAB_SIZE") = py::int_(vocab::SIZE);
    m.attr("EOS") = py::int_(vocab::EOS);
    m.attr("PAD") = py::int_(vocab::PAD);
    m.attr("MASK") = py::int_(vocab::MASK);

    // masking schedule
    m.def("gamma_schedule", &gamma_schedule, py::arg("t"));
    m.def(
        "apply_mask",
        [](const TokenSeq& seq, double t, uint64_t seed) {
            Rng rng(seed);
            auto r = apply_mask(seq, t, rng);
            return py::make_tuple(r.corrupted, r.mask, r.t);
        },
        py::arg("tokens"), py::arg("t"), py::arg("seed"),
        "returns (corrupted, mask, t); mask[i]=1 where MASK was substituted");

    // sampler primitives
    m.def("nucleus_filter", &nucleus_filter, py::arg("probs"), py::arg("p"));
    m.def("anneal_temperature", &anneal_temperature, py::arg("s"), py::arg("steps"),
          py::arg("tau_start"), py::arg("tau_end"));
    m.def("unmask_quota", &unmask_quota, py::arg("length"), py::arg("steps"));
    m.def(
        "apply_repetition_penalty",
        [](std::vector<float> logits, const std::vector<uint8_t>& committed, double penalty) {
            apply_repetition_penalty(logits, committed, penalty);
            return logits;
        },
        py::arg("logits"), py::arg("committed"), py::arg("penalty"));

    // model accounting
    m.def(
        "count_params",
        [](int vocab_size, int d_model, int n_layers, int n_heads, int ffn_dim, int seq_len,
           bool timestep_conditioning, bool tie_output_head) {
            ModelConfig c;
            c.vocab_size = vocab_size;
            c.d_model = d_model;
            c.n_layers = n_layers;
            c.n_heads = n_heads;
            c.ffn_dim = ffn_dim;
            c.seq_len = seq_len;
            c.timestep_conditioning = timestep_conditioning;
            c.tie_output_head = tie_output_head;
            return count_params(c);
        },
        py::arg("vocab_size"), py::arg("d_model"), py::arg("n_layers"), py::arg("n_heads"),
        py::arg("ffn_dim"), py::arg("seq_len"), py::arg("timestep_conditioning") = false,
        py::arg("tie_output_head") = false);

    // diversity metrics over lists of generated texts
    m.def(
        "distinct_n",
        [](const std::vector<std::string>& texts, int n) -> py::object {
            auto v = distinct_n(set_from_texts(texts), n);
            return v ? py::cast(*v) : py::none();
        },
        py::arg("texts"), py::arg("n"));
    m.def(
        "self_bleu",
        [](const std::vector<std::string>& texts, int refs_per_sample, uint64_t seed) {
            return self_bleu(set_from_texts(texts), refs_per_sample, seed);
        },
        py::arg("texts"), py::arg("refs_per_sample") = 50, py::arg("seed") = 0);
    m.def(
        "vocab_used",
        [](const std::vector<std::string>& texts) { return vocab_used(set_from_texts(texts)); },
        py::arg("texts"));
    m.def(
        "unique_openings",
        [](const std::vector<std::string>& texts, int k) {
            return unique_openings(set_from_texts(texts), k);
        },
        py::arg("texts"), py::arg("k"));

    // harness utilities
    m.def("config_hash", [](const std::string& path) {
        return ExperimentConfig::from_file(path).hash();
    });
    m.def("fnv1a", [](const std::string& s) { return fnv1a(s); });
}
