#include "homoscale/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "homoscale/errors.hpp"

namespace homoscale {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image from_rows(const std::vector<std::vector<png_byte>>& rows, int w, int h,
                int channels) {
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[c](y, x) = rows[y][x * channels + c] / 255.f;
  return img;
}

Image load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw MissingFile("cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  std::vector<std::vector<png_byte>> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("invalid PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("unsupported PNG channel count");
  }
  rows.assign(h, std::vector<png_byte>(png_get_rowbytes(png, info)));
  std::vector<png_bytep> row_ptrs(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rows(rows, w, h, channels);
}

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  int channels = 0;
  if (magic[0] == 'P' && magic[1] == '6') channels = 3;
  else if (magic[0] == 'P' && magic[1] == '5') channels = 1;
  else throw ParseError("not a binary PPM/PGM: " + path.string());

  const int w = read_pnm_token(in);
  const int h = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (w < 2 || h < 2 || maxval <= 0 || maxval > 255)
    throw ParseError("unsupported PNM header in " + path.string());
  in.get();  // single whitespace after maxval

  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!in) throw ParseError("truncated PNM payload in " + path.string());

  Image img(w, h, channels);
  const float scale = 1.f / static_cast<float>(maxval);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[c](y, x) = buf[(static_cast<std::size_t>(y) * w + x) * channels + c] * scale;
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw MissingFile("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (!png_sig_cmp(sig, 0, 8)) return load_png(path);
  if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return load_pnm(path);
  throw ParseError("unrecognized image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const int color_type =
      img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels());
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const float v = std::clamp(img.planes[c](y, x), 0.f, 1.f);
        row[static_cast<std::size_t>(x) * img.channels() + c] =
            static_cast<png_byte>(std::lround(v * 255.f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_mask_png(const std::filesystem::path& path, const ValidityMask& m) {
  Image img(m.width, m.height, 1);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      img.planes[0](y, x) = m.valid(y, x) ? 1.f : 0.f;
  write_png(path, img);
}

ValidityMask load_mask_png(const std::filesystem::path& path) {
  const Image img = to_gray(load_image(path));
  ValidityMask m(img.width, img.height, false);
  m.valid = img.planes[0] >= 0.5f;
  return m;
}

}  // namespace homoscale
