#include "pamtriage/embedding_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "pamtriage/error.hpp"

namespace pamtriage {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  float f32() {
    const std::uint32_t raw = u32();
    float f;
    std::memcpy(&f, &raw, sizeof f);
    return f;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::ParseError, "unexpected end of embedding file at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_embeddings(std::span<const Embedding> embeddings) {
  std::vector<std::uint8_t> out(std::begin(kEmbeddingMagic), std::end(kEmbeddingMagic));
  const std::size_t dim = embeddings.empty() ? kEmbeddingDim : embeddings.front().vector.size();
  put_u32(out, static_cast<std::uint32_t>(embeddings.size()));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) {
      throw Error(ErrorKind::DimensionMismatch, "mixed embedding dimensions in one file");
    }
    put_u32(out, static_cast<std::uint32_t>(e.ref.clip_id.size()));
    out.insert(out.end(), e.ref.clip_id.begin(), e.ref.clip_id.end());
    put_u32(out, e.ref.index);
    for (double v : e.vector) {
      const float f = static_cast<float>(v);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      put_u32(out, raw);
    }
  }
  return out;
}

std::vector<Embedding> decode_embeddings(std::span<const std::uint8_t> bytes, std::size_t expected_dim,
                                         EmbeddingProvider provider) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kEmbeddingMagic, 8) != 0) {
    throw Error(ErrorKind::ParseError, "missing ACTEMB01 magic");
  }
  Reader r(bytes.subspan(8));
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim != expected_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "file dim " + std::to_string(dim) + " != expected " + std::to_string(expected_dim));
  }
  std::vector<Embedding> out;
  // Bound the reservation by what the bytes could hold.
  out.reserve(std::min<std::size_t>(count, bytes.size() / (12 + 4 * static_cast<std::size_t>(dim))));
  std::unordered_set<SnippetRef, SnippetRefHash> seen;
  for (std::uint32_t row = 0; row < count; ++row) {
    Embedding e;
    e.provider = provider;
    const std::uint32_t id_len = r.u32();
    e.ref.clip_id = r.str(id_len);
    e.ref.index = r.u32();
    e.vector.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      const float f = r.f32();
      if (!std::isfinite(f)) {
        throw Error(ErrorKind::ParseError, "non-finite value in row " + std::to_string(row));
      }
      e.vector[j] = f;
    }
    if (!seen.insert(e.ref).second) {
      throw Error(ErrorKind::DuplicateSnippetRef, to_string(e.ref));
    }
    out.push_back(std::move(e));
  }
  if (!r.at_end()) throw Error(ErrorKind::ParseError, "trailing bytes after last row");
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "rename to " + path.string() + ": " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embeddings) {
  write_file_atomic(path, encode_embeddings(embeddings));
}

std::vector<Embedding> read_embeddings(const std::filesystem::path& path, std::size_t expected_dim,
                                       EmbeddingProvider provider) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_embeddings(bytes, expected_dim, provider);
}

}  // namespace pamtriage
