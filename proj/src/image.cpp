#include "uni/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uni {

namespace {

uint8_t to_byte(float v) {
  float c = std::clamp(v, 0.f, 1.f);
  return static_cast<uint8_t>(std::lround(c * 255.f));
}

void put_u32_be(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void png_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  put_u32_be(out, static_cast<uint32_t>(data.size()));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, crc);
}

}  // namespace

double mse(const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w) throw std::invalid_argument("mse: image size mismatch");
  double s = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = static_cast<double>(a.px[i]) - b.px[i];
    s += d * d;
  }
  return s / static_cast<double>(a.px.size());
}

double psnr(const Image& a, const Image& b) {
  double m = mse(a, b);
  if (m <= 0) return 99.0;  // clamp for identical images
  return 10.0 * std::log10(1.0 / m);
}

std::vector<uint8_t> encode_ppm(const Image& img) {
  std::string header = "P6\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.px.size());
  for (float v : img.px) out.push_back(to_byte(v));
  return out;
}

Image decode_ppm(const std::vector<uint8_t>& bytes) {
  std::string s(bytes.begin(), bytes.end());
  if (s.rfind("P6", 0) != 0) throw std::invalid_argument("decode_ppm: not a P6 file");
  size_t pos = 2;
  auto next_int = [&]() {
    while (pos < s.size() && (std::isspace(static_cast<unsigned char>(s[pos])) || s[pos] == '#')) {
      if (s[pos] == '#')
        while (pos < s.size() && s[pos] != '\n') ++pos;
      else
        ++pos;
    }
    int v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
      v = v * 10 + (s[pos++] - '0');
    return v;
  };
  int w = next_int(), h = next_int(), maxv = next_int();
  ++pos;  // single whitespace after maxval
  if (w <= 0 || h <= 0 || maxv != 255) throw std::invalid_argument("decode_ppm: bad header");
  if (bytes.size() < pos + static_cast<size_t>(w) * h * 3) throw std::invalid_argument("decode_ppm: truncated");
  Image img(h, w);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<float>(bytes[pos + i]) / 255.f;
  return img;
}

std::vector<uint8_t> encode_png(const Image& img) {
  // Raw scanlines, filter type 0 per row.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.h) * (1 + static_cast<size_t>(img.w) * 3));
  for (int r = 0; r < img.h; ++r) {
    raw.push_back(0);
    for (int c = 0; c < img.w; ++c) {
      const float* p = img.at(r, c);
      raw.push_back(to_byte(p[0]));
      raw.push_back(to_byte(p[1]));
      raw.push_back(to_byte(p[2]));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw std::runtime_error("png: zlib compress failed");
  compressed.resize(bound);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(img.w));
  put_u32_be(ihdr, static_cast<uint32_t>(img.h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", compressed);
  png_chunk(out, "IEND", {});
  return out;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_image(const Image& img, const std::string& path) {
  bool png = path.size() > 4 && path.substr(path.size() - 4) == ".png";
  write_file(path, png ? encode_png(img) : encode_ppm(img));
}

Image load_ppm(const std::string& path) { return decode_ppm(read_file(path)); }

}  // namespace uni
