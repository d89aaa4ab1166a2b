#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pamtriage/features.hpp"

namespace pamtriage {

/// Binary embedding exchange format (little-endian):
///   "ACTEMB01" | u32 count | u32 dim | count x (u32 id_len | id bytes | u32 index | dim x f32)
inline constexpr char kEmbeddingMagic[8] = {'A', 'C', 'T', 'E', 'M', 'B', '0', '1'};

std::vector<std::uint8_t> encode_embeddings(std::span<const Embedding> embeddings);

/// Parses an exchange-format image. Rows must have `expected_dim` values and
/// unique snippet refs; order is preserved.
std::vector<Embedding> decode_embeddings(std::span<const std::uint8_t> bytes,
                                         std::size_t expected_dim = kEmbeddingDim,
                                         EmbeddingProvider provider = EmbeddingProvider::imported);

/// Writes via a temporary file and rename, so readers never see a partial file.
void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embeddings);

std::vector<Embedding> read_embeddings(const std::filesystem::path& path,
                                       std::size_t expected_dim = kEmbeddingDim,
                                       EmbeddingProvider provider = EmbeddingProvider::reference);

/// Reads an externally produced file; every row is tagged provider = imported.
inline std::vector<Embedding> import_embeddings(const std::filesystem::path& path,
                                                std::size_t expected_dim = kEmbeddingDim) {
  return read_embeddings(path, expected_dim, EmbeddingProvider::imported);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace pamtriage
