#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uni {

// HxWx3 row-major float image, channels in [0,1].
struct Image {
  int h = 0, w = 0;
  std::vector<float> px;  // size h*w*3

  Image() = default;
  Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, fill) {}

  float* at(int r, int c) { return px.data() + (static_cast<size_t>(r) * w + c) * 3; }
  const float* at(int r, int c) const { return px.data() + (static_cast<size_t>(r) * w + c) * 3; }

  void set(int r, int c, float R, float G, float B) {
    float* p = at(r, c);
    p[0] = R; p[1] = G; p[2] = B;
  }
};

double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);  // peak = 1.0

std::vector<uint8_t> encode_ppm(const Image& img);
std::vector<uint8_t> encode_png(const Image& img);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);
Image decode_ppm(const std::vector<uint8_t>& bytes);

// Writes PNG when path ends in .png, otherwise PPM.
void save_image(const Image& img, const std::string& path);
Image load_ppm(const std::string& path);

}  // namespace uni
