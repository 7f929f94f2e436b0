#include "homoscale/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "homoscale/errors.hpp"

namespace homoscale {

nlohmann::json homography_to_json(const Homography& h) {
  nlohmann::json j;
  Eigen::Matrix3d m;
  bool frobenius = false;
  try {
    m = h.matrix_h33();
  } catch (const DegenerateNormalization&) {
    m = h.matrix();
    frobenius = true;
  }
  std::vector<double> values;
  values.reserve(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) values.push_back(m(r, c));
  j["h"] = values;
  if (frobenius) j["normalization"] = "frobenius";
  return j;
}

Homography homography_from_json(const nlohmann::json& j) {
  if (!j.contains("h") || !j["h"].is_array() || j["h"].size() != 9)
    throw ParseError("homography JSON needs an \"h\" array of 9 numbers");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j["h"][3 * r + c].get<double>();
  return Homography::from_matrix(m);
}

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32le(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(out, bits);
}

float get_f32le(std::istream& in) {
  const std::uint32_t bits = get_u32le(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_flow(const std::filesystem::path& path, const HomographyFlow& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("HFLO", 4);
  put_u32le(out, static_cast<std::uint32_t>(f.width));
  put_u32le(out, static_cast<std::uint32_t>(f.height));
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      put_f32le(out, static_cast<float>(f.u(y, x)));
      put_f32le(out, static_cast<float>(f.v(y, x)));
    }
  if (!out) throw IoError("flow write failed: " + path.string());
}

HomographyFlow read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HFLO", 4) != 0)
    throw ParseError("bad flow magic in " + path.string());
  const int w = static_cast<int>(get_u32le(in));
  const int h = static_cast<int>(get_u32le(in));
  if (w < 2 || h < 2 || w > (1 << 20) || h > (1 << 20))
    throw ParseError("implausible flow dimensions in " + path.string());
  HomographyFlow f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = get_f32le(in);
      f.v(y, x) = get_f32le(in);
    }
  if (!in) throw ParseError("truncated flow payload in " + path.string());
  return f;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace homoscale
