#include "pamtriage/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pamtriage/error.hpp"

namespace pamtriage {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<std::uint8_t> encode_header(std::uint32_t rate, std::uint16_t format,
                                        std::uint16_t bits, std::uint32_t data_bytes) {
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  const std::uint16_t block_align = bits / 8;
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * block_align);
  put_u16(out, block_align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  return out;
}

}  // namespace

std::int16_t to_pcm16(double amplitude) {
  const double scaled = std::round(amplitude * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

AudioClip parse_wav(std::span<const std::uint8_t> bytes, const WavLoadOptions& options,
                    WavLoadReport* report) {
  if (bytes.empty()) throw Error(ErrorKind::EmptyFile, "file has no bytes");
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::CorruptHeader, "missing RIFF/WAVE signature");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw Error(ErrorKind::CorruptHeader, "truncated fmt chunk");
      }
      const std::uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw Error(ErrorKind::CorruptHeader, "truncated extensible fmt chunk");
        // Sub-format GUID starts with the plain format code.
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Some writers leave the size at 0 or 0xFFFFFFFF when streaming.
      data_size = std::min<std::size_t>(size, bytes.size() - std::min(body, bytes.size()));
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw Error(ErrorKind::CorruptHeader, "no fmt chunk");
  if (data == nullptr) throw Error(ErrorKind::CorruptHeader, "no data chunk");
  if (channels == 0 || rate == 0) throw Error(ErrorKind::CorruptHeader, "zero channels or rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorKind::UnsupportedFormat,
                "format " + std::to_string(format) + " with " + std::to_string(bits) +
                    " bits per sample (need PCM16 or float32)");
  }

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data + i * frame_bytes;
    if (pcm16) {
      clip.samples[i] = static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    } else {
      const std::uint32_t raw = read_u32(p);
      float value;
      std::memcpy(&value, &raw, sizeof value);
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::CorruptHeader, "non-finite float sample at frame " + std::to_string(i));
      }
      double v = value;
      if (v > 1.0 || v < -1.0) {
        ++clamped;
        v = std::clamp(v, -1.0, 1.0);
      }
      clip.samples[i] = v;
    }
  }
  if (frames > 0 && static_cast<double>(clamped) / frames > options.max_clip_fraction) {
    throw Error(ErrorKind::ExcessiveClipping, std::to_string(clamped) + " of " +
                                                  std::to_string(frames) + " samples clip");
  }
  if (report != nullptr) {
    report->channels = channels;
    report->bits_per_sample = bits;
    report->is_float = float32;
    report->clamped_samples = clamped;
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path, const WavLoadOptions& options,
                   WavLoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  AudioClip clip = parse_wav(bytes, options, report);
  clip.id = path.stem().string();
  clip.source_path = path.string();
  return clip;
}

std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples, std::uint32_t rate) {
  auto out = encode_header(rate, kFormatPcm, 16, static_cast<std::uint32_t>(samples.size() * 2));
  for (double s : samples) put_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

std::vector<std::uint8_t> encode_wav_float32(std::span<const double> samples, std::uint32_t rate) {
  auto out = encode_header(rate, kFormatFloat, 32, static_cast<std::uint32_t>(samples.size() * 4));
  for (double s : samples) {
    const float f = static_cast<float>(s);
    std::uint32_t raw;
    std::memcpy(&raw, &f, sizeof raw);
    put_u32(out, raw);
  }
  return out;
}

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     std::uint32_t rate) {
  const auto bytes = encode_wav_pcm16(samples, rate);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

// ---------------------------------------------------------------------------

std::size_t samples_per_window(std::uint32_t rate, double seconds) {
  const double exact = rate * seconds;
  const double rounded = std::round(exact);
  if (seconds <= 0.0 || std::abs(exact - rounded) > 1e-6) {
    throw Error(ErrorKind::InvalidArgument,
                "rate x seconds must be a positive integer sample count");
  }
  return static_cast<std::size_t>(rounded);
}

std::size_t snippet_count(std::size_t n_samples, std::uint32_t rate, double duration_s,
                          double overlap_s) {
  if (!(overlap_s >= 0.0 && overlap_s < duration_s)) {
    throw Error(ErrorKind::InvalidArgument, "overlap must satisfy 0 <= overlap < duration");
  }
  const std::size_t window = samples_per_window(rate, duration_s);
  const std::size_t hop = samples_per_window(rate, duration_s - overlap_s);
  if (n_samples < window) return 0;
  return (n_samples - window) / hop + 1;
}

std::vector<Snippet> segment(const AudioClip& clip, double duration_s, double overlap_s) {
  const std::size_t count = snippet_count(clip.samples.size(), clip.sample_rate, duration_s, overlap_s);
  const std::size_t window = samples_per_window(clip.sample_rate, duration_s);
  const std::size_t hop = samples_per_window(clip.sample_rate, duration_s - overlap_s);
  std::vector<Snippet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * hop);
    out.push_back(Snippet{clip.id, static_cast<std::uint32_t>(i),
                          std::vector<double>(first, first + static_cast<std::ptrdiff_t>(window)),
                          clip.sample_rate, duration_s});
  }
  return out;
}

}  // namespace pamtriage
