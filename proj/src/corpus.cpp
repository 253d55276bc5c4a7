#include "parlab/corpus.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace parlab {

TokenSeq tokenize(std::string_view text) {
    TokenSeq out;
    out.reserve(text.size() + 1);
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\n' && i + 1 < text.size() && text[i + 1] == '\n') {
            out.push_back(vocab::EOS);
            i += 2;
        } else {
            out.push_back(static_cast<unsigned char>(text[i]));
            ++i;
        }
    }
    out.push_back(vocab::EOS);
    return out;
}

std::string detokenize(const TokenSeq& ids) {
    std::vector<std::string> docs(1);
    for (int id : ids) {
        if (id >= 0 && id < 256) {
            docs.back().push_back(static_cast<char>(id));
        } else if (id == vocab::EOS) {
            docs.emplace_back();
        } else if (id == vocab::PAD) {
            // skip
        } else if (id == vocab::MASK) {
            throw std::invalid_argument("detokenize: MASK id in sequence");
        } else {
            throw std::invalid_argument("detokenize: id out of range");
        }
    }
    // a trailing EOS terminates the last document without starting a new one
    if (!ids.empty() && ids.back() == vocab::EOS) docs.pop_back();
    std::string out;
    for (size_t d = 0; d < docs.size(); ++d) {
        if (d) out += "\n\n";
        out += docs[d];
    }
    return out;
}

std::vector<TokenSeq> build_chunks(const TokenSeq& tokens, size_t seq_len) {
    if (seq_len < 2) throw std::invalid_argument("build_chunks: seq_len must be >= 2");
    std::vector<TokenSeq> chunks;
    size_t n = tokens.size() / seq_len;
    chunks.reserve(n);
    for (size_t c = 0; c < n; ++c)
        chunks.emplace_back(tokens.begin() + c * seq_len, tokens.begin() + (c + 1) * seq_len);
    return chunks;
}

CorpusSplit split(std::vector<TokenSeq> chunks, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split: fraction must be in (0,1)");
    if (chunks.empty()) throw std::invalid_argument("split: no chunks");
    size_t n = chunks.size();
    size_t n_val = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (n_val >= n)
        throw std::invalid_argument("split: degenerate split, no training chunks remain");
    CorpusSplit out;
    out.split_fraction = fraction;
    out.val_chunks.assign(chunks.begin() + (n - n_val), chunks.end());
    chunks.resize(n - n_val);
    out.train_chunks = std::move(chunks);
    return out;
}

namespace {
template <typename U>
void put_le(std::ostream& os, U v) {
    unsigned char buf[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}
template <typename U>
U get_le(std::istream& is) {
    unsigned char buf[sizeof(U)];
    is.read(reinterpret_cast<char*>(buf), sizeof(U));
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}
} // namespace

void write_chunk_file(const std::string& path, const std::vector<TokenSeq>& chunks, uint32_t seq_len) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_chunk_file: cannot open " + path);
    os.write("PLCH", 4);
    put_le<uint16_t>(os, 1);
    put_le<uint32_t>(os, vocab::SIZE);
    put_le<uint32_t>(os, seq_len);
    put_le<uint64_t>(os, chunks.size());
    for (const auto& c : chunks) {
        if (c.size() != seq_len) throw std::invalid_argument("write_chunk_file: chunk length mismatch");
        for (int id : c) put_le<uint16_t>(os, static_cast<uint16_t>(id));
    }
    if (!os) throw std::runtime_error("write_chunk_file: write failed for " + path);
}

std::vector<TokenSeq> read_chunk_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_chunk_file: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PLCH", 4) != 0)
        throw std::runtime_error("read_chunk_file: bad magic in " + path);
    uint16_t version = get_le<uint16_t>(is);
    if (version != 1) throw std::runtime_error("read_chunk_file: unsupported version");
    uint32_t vsize = get_le<uint32_t>(is);
    if (vsize != vocab::SIZE) throw std::runtime_error("read_chunk_file: vocab size mismatch");
    uint32_t seq_len = get_le<uint32_t>(is);
    uint64_t count = get_le<uint64_t>(is);
    std::vector<TokenSeq> chunks(count);
    for (auto& c : chunks) {
        c.resize(seq_len);
        for (auto& id : c) id = get_le<uint16_t>(is);
    }
    if (!is) throw std::runtime_error("read_chunk_file: truncated file " + path);
    return chunks;
}

} // namespace parlab
