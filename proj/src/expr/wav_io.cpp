#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "rhm/expr/expr.hpp"

namespace rhm::expr {

namespace {

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
  s.push_back((char)(v & 0xff));
  s.push_back((char)((v >> 8) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) |
         ((uint32_t)p[3] << 24);
}
uint16_t get_u16(const unsigned char* p) {
  return (uint16_t)((uint32_t)p[0] | ((uint32_t)p[1] << 8));
}

}  // namespace

void save_wav(const std::string& path, const AudioTrack& track) {
  if (track.sample_rate <= 0) {
    throw std::invalid_argument("save_wav: sample rate must be positive");
  }
  const uint32_t data_bytes = (uint32_t)(track.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, (uint32_t)track.sample_rate);
  put_u32(out, (uint32_t)track.sample_rate * 2);  // byte rate
  put_u16(out, 2);                                // block align
  put_u16(out, 16);                               // bits per sample
  out += "data";
  put_u32(out, data_bytes);
  for (float s : track.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const int16_t q = (int16_t)std::lround(c * 32767.0f);
    out.push_back((char)(q & 0xff));
    out.push_back((char)((q >> 8) & 0xff));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("save_wav: cannot open " + path);
  file.write(out.data(), (std::streamsize)out.size());
  if (!file) throw std::runtime_error("save_wav: write failed for " + path);
}

AudioTrack load_wav(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("load_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("load_wav: " + path + " is not a RIFF/WAVE file");
  }

  AudioTrack track;
  bool have_fmt = false, have_data = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint32_t chunk_size = get_u32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + chunk_size > bytes.size()) {
      throw std::runtime_error("load_wav: " + path + ": truncated chunk at offset " +
                               std::to_string(pos));
    }
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw std::runtime_error("load_wav: " + path + ": short fmt chunk");
      const uint16_t format = get_u16(body);
      const uint16_t channels = get_u16(body + 2);
      const uint16_t bits = get_u16(body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw std::runtime_error("load_wav: " + path + ": need PCM-16 mono, got format " +
                                 std::to_string(format) + ", " + std::to_string(channels) +
                                 " channel(s), " + std::to_string(bits) + " bits");
      }
      track.sample_rate = (int)get_u32(body + 4);
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      track.samples.resize(chunk_size / 2);
      for (size_t i = 0; i < track.samples.size(); ++i) {
        const int16_t q = (int16_t)get_u16(body + 2 * i);
        track.samples[i] = (float)q / 32767.0f;
      }
      have_data = true;
    }
    pos += 8 + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data) {
    throw std::runtime_error("load_wav: " + path + ": missing " +
                             (have_fmt ? "data" : "fmt") + " chunk");
  }
  return track;
}

}  // namespace rhm::expr
