#include "lact/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lact/error.hpp"

namespace lact::io {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("failed to format number");
  return std::string(buf.data(), ptr);
}

namespace {

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw ParseError(path, 0, "cannot open file");
  return f;
}

double parse_double(const std::string& path, std::size_t line, std::string_view tok) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw ParseError(path, line, "invalid number '" + std::string(tok) + "'");
  if (!std::isfinite(v)) throw ParseError(path, line, "non-finite value");
  return v;
}

}  // namespace

void write_matrix_csv(const std::string& path, const Matrix& m) {
  auto f = open_out(path);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) f << ',';
      f << format_double(m(r, c));
    }
    f << '\n';
  }
  if (!f) throw Error("failed writing " + path);
}

Matrix read_matrix_csv(const std::string& path) {
  auto f = open_in(path);
  Matrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      m.values.push_back(parse_double(path, lineno, rest.substr(0, comma)));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (m.rows == 0) {
      m.cols = count;
    } else if (count != m.cols) {
      throw ParseError(path, lineno, "ragged row: " + std::to_string(count) + " values, expected " + std::to_string(m.cols));
    }
    ++m.rows;
  }
  if (m.rows == 0) throw ParseError(path, 0, "empty matrix");
  return m;
}

std::string meta_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".meta");
  return p.string();
}

void write_sinogram(const std::string& path, const Sinogram& sino) {
  const auto& g = sino.geometry;
  if (sino.values.rows != g.n_angles() || sino.values.cols != g.detector_bins)
    throw ShapeError("write_sinogram: values do not match geometry");
  const double step = g.n_angles() > 1 ? g.angles_deg[1] - g.angles_deg[0] : 1.0;
  for (std::size_t i = 1; i < g.n_angles(); ++i)
    if (std::abs(g.angles_deg[i] - (g.angles_deg[0] + step * static_cast<double>(i))) > 1e-9)
      throw ValueError("write_sinogram: angles must be uniformly spaced for the .meta sidecar");
  write_matrix_csv(path, sino.values);
  auto f = open_out(meta_path(path));
  f << "n_angles=" << g.n_angles() << '\n'
    << "angle_start_deg=" << format_double(g.angles_deg[0]) << '\n'
    << "angle_step_deg=" << format_double(step) << '\n'
    << "detector_bins=" << g.detector_bins << '\n';
  if (g.ray_step != 1.0) f << "ray_step=" << format_double(g.ray_step) << '\n';
  if (g.image_side != g.detector_bins) f << "image_side=" << g.image_side << '\n';
}

Sinogram read_sinogram(const std::string& path) {
  const auto mpath = meta_path(path);
  if (!std::filesystem::exists(mpath)) throw ParseError(mpath, 0, "missing sinogram sidecar");
  auto f = open_in(mpath);
  std::string line;
  std::size_t lineno = 0;
  double n_angles = -1, start = 0, step = -1, bins = -1, ray_step = 1.0, side = -1;
  bool have_start = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(mpath, lineno, "expected key=value");
    const std::string key = line.substr(0, eq);
    const double v = parse_double(mpath, lineno, std::string_view(line).substr(eq + 1));
    if (key == "n_angles") n_angles = v;
    else if (key == "angle_start_deg") { start = v; have_start = true; }
    else if (key == "angle_step_deg") step = v;
    else if (key == "detector_bins") bins = v;
    else if (key == "ray_step") ray_step = v;
    else if (key == "image_side") side = v;
    else throw ParseError(mpath, lineno, "unknown key '" + key + "'");
  }
  if (n_angles < 1 || !have_start || step <= 0 || bins < 2)
    throw ParseError(mpath, lineno, "sidecar needs n_angles, angle_start_deg, angle_step_deg, detector_bins");
  Sinogram s;
  s.values = read_matrix_csv(path);
  Geometry g;
  g.detector_bins = static_cast<std::size_t>(bins);
  g.image_side = side > 0 ? static_cast<std::size_t>(side) : g.detector_bins;
  g.angles_deg = angle_list(start, step, static_cast<std::size_t>(n_angles));
  g.ray_step = ray_step;
  g.validate();
  if (s.values.rows != g.n_angles() || s.values.cols != g.detector_bins)
    throw ParseError(path, 0, "sinogram is " + std::to_string(s.values.rows) + "x" + std::to_string(s.values.cols) +
                                  " but sidecar declares " + std::to_string(g.n_angles()) + "x" +
                                  std::to_string(g.detector_bins));
  s.geometry = std::move(g);
  return s;
}

void write_pgm(const std::string& path, const Image& img) {
  auto f = open_out(path, true);
  f << "P5\n" << img.cols << ' ' << img.rows << "\n255\n";
  std::string bytes(img.size(), '\0');
  for (std::size_t i = 0; i < img.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(img.values[i], 0.0, 1.0))));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

Image read_pgm(const std::string& path) {
  auto f = open_in(path, true);
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P5") throw ParseError(path, 1, "bad magic, expected P5");
  long w = -1, h = -1, maxv = -1;
  try {
    w = std::stol(token());
    h = std::stol(token());
    maxv = std::stol(token());
  } catch (const std::exception&) {
    throw ParseError(path, 0, "bad PGM header");
  }
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255) throw ParseError(path, 0, "unsupported PGM dimensions or depth");
  std::string bytes(static_cast<std::size_t>(w * h), '\0');
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(path, 0, "truncated PGM data");
  Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.values[i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / static_cast<double>(maxv);
  return img;
}

namespace {
bool is_pgm(const std::string& path) { return std::filesystem::path(path).extension() == ".pgm"; }
}  // namespace

void write_image(const std::string& path, const Image& img) {
  if (is_pgm(path)) write_pgm(path, img);
  else write_matrix_csv(path, img);
}

Image read_image(const std::string& path) { return is_pgm(path) ? read_pgm(path) : read_matrix_csv(path); }

namespace {

template <typename T>
void put(std::ostream& o, T v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& i, const std::string& path) {
  T v{};
  i.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!i) throw ParseError(path, 0, "truncated model file");
  return v;
}

constexpr char kMagic[8] = {'L', 'A', 'C', 'T', 'M', 'D', 'L', '1'};

}  // namespace

void write_tensors(const std::string& path, const NamedTensors& tensors) {
  auto f = open_out(path, true);
  f.write(kMagic, 8);
  put<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(f, d);
    for (double v : t.data()) put<double>(f, v);
  }
  if (!f) throw Error("failed writing " + path);
}

NamedTensors read_tensors(const std::string& path) {
  auto f = open_in(path, true);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0) throw ParseError(path, 0, "bad magic, expected LACTMDL1");
  const auto count = get<std::uint32_t>(f, path);
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(f, path);
    if (len > 4096) throw ParseError(path, 0, "implausible tensor name length");
    std::string name(len, '\0');
    f.read(name.data(), len);
    const auto rank = get<std::uint32_t>(f, path);
    if (rank == 0 || rank > 8) throw ParseError(path, 0, "implausible tensor rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(f, path);
    const auto n = numel(shape);
    if (n > (std::size_t{1} << 32)) throw ParseError(path, 0, "implausible tensor size for '" + name + "'");
    std::vector<double> data(n);
    for (auto& v : data) v = get<double>(f, path);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace lact::io
