#include "avdet/audio_clip.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "avdet/errors.hpp"

namespace avdet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 24) & 0xff);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
  require(clip.channels > 0 && clip.n_samples > 0, errc::shape, "write_wav: empty clip");
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(clip.n_samples * clip.channels * 2);
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate_hz));

  std::vector<std::uint8_t> hdr;
  hdr.reserve(44);
  hdr.insert(hdr.end(), {'R', 'I', 'F', 'F'});
  put_u32(hdr, 36 + data_bytes);
  hdr.insert(hdr.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(hdr, 16);
  put_u16(hdr, 1);  // PCM
  put_u16(hdr, static_cast<std::uint16_t>(clip.channels));
  put_u32(hdr, rate);
  put_u32(hdr, rate * clip.channels * 2);
  put_u16(hdr, static_cast<std::uint16_t>(clip.channels * 2));
  put_u16(hdr, 16);
  hdr.insert(hdr.end(), {'d', 'a', 't', 'a'});
  put_u32(hdr, data_bytes);

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, errc::io, "write_wav: cannot open " + path);
  require(std::fwrite(hdr.data(), 1, hdr.size(), fp.get()) == hdr.size(), errc::io,
          "write_wav: header write failed");

  // interleave in chunks to bound memory
  const std::int64_t chunk = 1 << 16;
  std::vector<std::int16_t> buf;
  for (std::int64_t start = 0; start < clip.n_samples; start += chunk) {
    const std::int64_t n = std::min(chunk, clip.n_samples - start);
    buf.assign(static_cast<std::size_t>(n) * clip.channels, 0);
    for (int c = 0; c < clip.channels; ++c) {
      const float* src = clip.channel(c) + start;
      for (std::int64_t i = 0; i < n; ++i) {
        const double v = std::clamp(static_cast<double>(src[i]), -1.0, 1.0);
        buf[static_cast<std::size_t>(i) * clip.channels + c] =
            static_cast<std::int16_t>(std::lround(v * 32767.0));
      }
    }
    require(std::fwrite(buf.data(), 2, buf.size(), fp.get()) == buf.size(), errc::io,
            "write_wav: data write failed");
  }
}

AudioClip read_wav(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, errc::missing_file, "read_wav: cannot open " + path);

  std::uint8_t riff[12];
  require(std::fread(riff, 1, 12, fp.get()) == 12, errc::io, "read_wav: truncated header");
  require(std::memcmp(riff, "RIFF", 4) == 0 && std::memcmp(riff + 8, "WAVE", 4) == 0, errc::io,
          "read_wav: not a RIFF/WAVE file: " + path);

  int channels = 0;
  std::uint32_t rate = 0;
  int bits = 0;
  std::vector<std::uint8_t> data;
  bool got_fmt = false, got_data = false;
  while (!got_data) {
    std::uint8_t chdr[8];
    if (std::fread(chdr, 1, 8, fp.get()) != 8) break;
    const std::uint32_t size = get_u32(chdr + 4);
    if (std::memcmp(chdr, "fmt ", 4) == 0) {
      std::vector<std::uint8_t> fmt(size);
      require(std::fread(fmt.data(), 1, size, fp.get()) == size, errc::io,
              "read_wav: truncated fmt chunk");
      require(get_u16(fmt.data()) == 1, errc::io, "read_wav: only PCM supported");
      channels = get_u16(fmt.data() + 2);
      rate = get_u32(fmt.data() + 4);
      bits = get_u16(fmt.data() + 14);
      require(bits == 16, errc::io, "read_wav: only 16-bit PCM supported");
      got_fmt = true;
    } else if (std::memcmp(chdr, "data", 4) == 0) {
      data.resize(size);
      require(std::fread(data.data(), 1, size, fp.get()) == size, errc::io,
              "read_wav: truncated data chunk");
      got_data = true;
    } else {
      std::fseek(fp.get(), static_cast<long>(size + (size & 1)), SEEK_CUR);
    }
  }
  require(got_fmt && got_data, errc::io, "read_wav: missing fmt or data chunk in " + path);
  require(channels > 0, errc::io, "read_wav: zero channels");

  const std::int64_t n = static_cast<std::int64_t>(data.size()) / (2 * channels);
  AudioClip clip(channels, n, static_cast<double>(rate));
  for (std::int64_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const std::uint8_t* p = data.data() + (i * channels + c) * 2;
      const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      clip.channel(c)[i] = static_cast<float>(v / 32767.0);
    }
  }
  return clip;
}

double channel_rms(const AudioClip& clip, int c) {
  require(c >= 0 && c < clip.channels, errc::channel, "channel_rms: channel out of range");
  double acc = 0.0;
  const float* s = clip.channel(c);
  for (std::int64_t i = 0; i < clip.n_samples; ++i) acc += static_cast<double>(s[i]) * s[i];
  return clip.n_samples > 0 ? std::sqrt(acc / clip.n_samples) : 0.0;
}

}  // namespace avdet
