#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/io.hpp"
#include "lact/phantom.hpp"
#include "support.hpp"

using namespace lact;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lact_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("csv round trip is exact") {
  TempDir dir;
  Rng rng(1);
  Matrix m(3, 4);
  m.values = testing::random_vector(12, rng, -1e3, 1e3);
  m.values[0] = 1e-300;
  m.values[1] = -0.0;
  io::write_matrix_csv(dir / "m.csv", m);
  CHECK(io::read_matrix_csv(dir / "m.csv") == m);
}

TEST_CASE("csv parsing") {
  TempDir dir;
  write_text(dir / "a.csv", "0,1\n1,0\n");
  CHECK(io::read_matrix_csv(dir / "a.csv") == testing::matrix(2, 2, {0, 1, 1, 0}));
  write_text(dir / "r.csv", "0,1\n1,0,2\n");
  try {
    io::read_matrix_csv(dir / "r.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  write_text(dir / "b.csv", "0,1\n1,x\n");
  CHECK_THROWS_AS(io::read_matrix_csv(dir / "b.csv"), ParseError);
  CHECK_THROWS_AS(io::read_matrix_csv(dir / "missing.csv"), ParseError);
}

TEST_CASE("sinogram sidecar") {
  TempDir dir;
  ScanSpec scan;
  PhantomSpec ps;
  ps.side = 48;
  auto s = simulate_scan(generate_phantom(ps), scan);
  io::write_sinogram(dir / "s.csv", s);
  CHECK(io::meta_path(dir / "s.csv") == dir / "s.meta");
  auto back = io::read_sinogram(dir / "s.csv");
  CHECK(back.values == s.values);
  CHECK(back.geometry == s.geometry);

  write_text(dir / "t.csv", "1,2,3\n");
  CHECK_THROWS_AS(io::read_sinogram(dir / "t.csv"), ParseError);
  // a hand-written sidecar with 61 angles
  Matrix rows(61, 3, 0.0);
  io::write_matrix_csv(dir / "u.csv", rows);
  write_text(dir / "u.meta", "n_angles=61\nangle_start_deg=0\nangle_step_deg=0.5\ndetector_bins=3\n");
  auto u = io::read_sinogram(dir / "u.csv");
  REQUIRE(u.geometry.n_angles() == 61);
  for (std::size_t i = 0; i < 61; ++i) CHECK(u.geometry.angles_deg[i] == doctest::Approx(0.5 * i));
  write_text(dir / "u.meta", "n_angles=60\nangle_start_deg=0\nangle_step_deg=0.5\ndetector_bins=3\n");
  CHECK_THROWS_AS(io::read_sinogram(dir / "u.csv"), ParseError);
}

TEST_CASE("pgm") {
  TempDir dir;
  io::write_pgm(dir / "g.pgm", Image(2, 3, 0.5));
  std::string bytes = read_bytes(dir / "g.pgm");
  CHECK(bytes.substr(0, 2) == "P5");
  CHECK(static_cast<unsigned char>(bytes.back()) == 128);
  io::write_pgm(dir / "o.pgm", Image(2, 2, 1.0));
  bytes = read_bytes(dir / "o.pgm");
  for (std::size_t i = bytes.size() - 4; i < bytes.size(); ++i) CHECK(static_cast<unsigned char>(bytes[i]) == 255);
  Image img = io::read_image(dir / "o.pgm");
  CHECK(img == Image(2, 2, 1.0));
  Image bin = testing::matrix(2, 3, {0, 1, 1, 0, 0, 1});
  io::write_image(dir / "b.pgm", bin);
  CHECK(io::read_image(dir / "b.pgm") == bin);
  write_text(dir / "bad.pgm", "P2\n2 2\n255\n....");
  CHECK_THROWS_AS(io::read_pgm(dir / "bad.pgm"), ParseError);
  write_text(dir / "short.pgm", std::string("P5\n4 4\n255\n") + "ab");
  CHECK_THROWS_AS(io::read_pgm(dir / "short.pgm"), ParseError);
}

TEST_CASE("tensor archive") {
  TempDir dir;
  io::NamedTensors t{{"a", Tensor::from({2, 2}, {1, 2, 3, 4})}, {"bias", Tensor::from({3}, {0.5, -1, 1e-9})}};
  io::write_tensors(dir / "t.bin", t);
  auto back = io::read_tensors(dir / "t.bin");
  REQUIRE(back.size() == 2);
  CHECK(back[1].first == "bias");
  CHECK(back[0].second.shape() == Shape{2, 2});
  CHECK(testing::vec(back[1].second) == testing::vec(t[1].second));
  write_text(dir / "bad.bin", "NOTAMODEL");
  CHECK_THROWS_AS(io::read_tensors(dir / "bad.bin"), ParseError);
}
