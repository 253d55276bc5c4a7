#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace parlab {

// Byte-level vocabulary: ids 0..255 are raw bytes, then three specials.
namespace vocab {
inline constexpr int PAD = 256;
inline constexpr int EOS = 257;
inline constexpr int MASK = 258;
inline constexpr int SIZE = 259;
} // namespace vocab

using TokenSeq = std::vector<int>;

struct CorpusSplit {
    std::vector<TokenSeq> train_chunks;
    std::vector<TokenSeq> val_chunks;
    double split_fraction = 0.0;
};

// One token per byte; EOS appended at each document boundary. Documents are
// separated by blank lines ("\n\n"); the separator itself is not emitted.
TokenSeq tokenize(std::string_view text);

// Inverse of tokenize: EOS back to blank-line separators, bytes unchanged.
std::string detokenize(const TokenSeq& ids);

// Non-overlapping windows of exactly seq_len tokens; remainder dropped.
std::vector<TokenSeq> build_chunks(const TokenSeq& tokens, size_t seq_len);

// Validation set is the final ceil(fraction*N) chunks, in corpus order.
CorpusSplit split(std::vector<TokenSeq> chunks, double fraction);

// Token-chunk file ("PLCH"): header + little-endian u16 id payloads.
void write_chunk_file(const std::string& path, const std::vector<TokenSeq>& chunks, uint32_t seq_len);
std::vector<TokenSeq> read_chunk_file(const std::string& path);

} // namespace parlab
