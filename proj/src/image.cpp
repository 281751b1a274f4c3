#include "blinkline/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blinkline/errors.hpp"

namespace blinkline {

GrayImage make_image(int width, int height, double fill) {
  if (width < 1 || height < 1) throw std::invalid_argument("make_image: dimensions must be >= 1");
  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.assign(std::size_t(width) * height, fill);
  return img;
}

namespace {

// Cursor over a fully buffered PGM file; every failure reports the byte
// offset it happened at.
struct PgmCursor {
  const std::string& path;
  const std::string& data;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw io_error(path + ": " + what + " at byte " + std::to_string(pos));
  }

  bool eof() const { return pos >= data.size(); }

  void skip_space_and_comments() {
    while (!eof()) {
      const char c = data[pos];
      if (c == '#') {
        while (!eof() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* name) {
    skip_space_and_comments();
    if (eof()) fail(std::string("truncated header, missing ") + name);
    if (!std::isdigit(static_cast<unsigned char>(data[pos])))
      fail(std::string("malformed header, expected ") + name);
    long v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(data[pos]))) {
      v = v * 10 + (data[pos] - '0');
      if (v > 1000000000L) fail(std::string("malformed header, ") + name + " out of range");
      ++pos;
    }
    return v;
  }
};

}  // namespace

GrayImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  PgmCursor cur{path, data};
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '2'))
    cur.fail("malformed header, expected P5 or P2 magic");
  const bool binary = data[1] == '5';
  cur.pos = 2;

  const long w = cur.read_uint("width");
  const long h = cur.read_uint("height");
  if (w < 1 || h < 1) cur.fail("malformed header, dimensions must be >= 1");
  const long maxval = cur.read_uint("maxval");
  if (maxval < 1) cur.fail("malformed header, maxval must be >= 1");
  if (maxval > 255) cur.fail("unsupported maxval " + std::to_string(maxval) + " (limit 255)");

  GrayImage img = make_image(int(w), int(h));
  const std::size_t n = img.pixels.size();

  if (binary) {
    if (cur.eof() || !std::isspace(static_cast<unsigned char>(data[cur.pos])))
      cur.fail("malformed header, expected single whitespace after maxval");
    ++cur.pos;
    if (data.size() - cur.pos < n) {
      cur.pos = data.size();
      cur.fail("truncated pixel data, expected " + std::to_string(n) + " bytes");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char b = static_cast<unsigned char>(data[cur.pos]);
      if (b > maxval) cur.fail("pixel value exceeds maxval");
      img.pixels[i] = double(b);
      ++cur.pos;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      cur.skip_space_and_comments();
      if (cur.eof()) cur.fail("truncated pixel data, expected " + std::to_string(n) + " samples");
      const long v = cur.read_uint("pixel value");
      if (v > maxval) cur.fail("pixel value exceeds maxval");
      img.pixels[i] = double(v);
    }
  }
  return img;
}

void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path + ": cannot open file for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::string bytes(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 255.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::llround(v)));
  }
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw io_error(path + ": write failed");
}

GrayImage downscale_bilinear(const GrayImage& img) {
  if (img.width < 2 || img.height < 2)
    throw std::invalid_argument("downscale_bilinear: output dimension would be 0");
  const int dw = img.width * 5 / 6;
  const int dh = img.height * 5 / 6;
  GrayImage out = make_image(dw, dh);

  const double rx = double(img.width) / dw;
  const double ry = double(img.height) / dh;
  for (int y = 0; y < dh; ++y) {
    double sy = (y + 0.5) * ry - 0.5;
    sy = std::clamp(sy, 0.0, double(img.height - 1));
    const int y0 = int(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < dw; ++x) {
      double sx = (x + 0.5) * rx - 0.5;
      sx = std::clamp(sx, 0.0, double(img.width - 1));
      const int x0 = int(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
      const double bot = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
      out.at(x, y) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

Pyramid build_pyramid(const GrayImage& img, int window) {
  Pyramid pyr;
  pyr.levels.push_back(img);
  pyr.cumulative_scale.push_back(1.0);
  while (true) {
    const GrayImage& cur = pyr.levels.back();
    if (cur.width < 2 || cur.height < 2) break;
    const int nw = cur.width * 5 / 6;
    const int nh = cur.height * 5 / 6;
    if (nw < window || nh < window) break;
    pyr.levels.push_back(downscale_bilinear(cur));
    pyr.cumulative_scale.push_back(std::pow(5.0 / 6.0, double(pyr.levels.size() - 1)));
  }
  return pyr;
}

}  // namespace blinkline
