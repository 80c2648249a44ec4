#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "puiq/io.hpp"

using namespace puiq;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  const fs::path d = fs::temp_directory_path() / "puiq_io_tests";
  fs::create_directories(d);
  return d;
}

Grid random_grid(int h, int w, Rng& rng, double lo, double hi) {
  Grid g(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) g(r, c) = rng.uniform(lo, hi);
  return g;
}

}  // namespace

TEST_CASE("pfm round trip is float-exact") {
  const fs::path p = tmp_dir() / "rt.pfm";
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const int h = 1 + static_cast<int>(rng.uniform_int(16));
    const int w = 1 + static_cast<int>(rng.uniform_int(16));
    Grid g = random_grid(h, w, rng, -1e4, 1e4);
    // PFM stores 32-bit floats; quantize so the round trip is exact.
    g = g.cast<float>().cast<double>();
    write_pfm(p, g);
    const ImageFile back = read_pfm(p);
    REQUIRE(back.pixels.rows() == h);
    REQUIRE(back.pixels.cols() == w);
    CHECK((back.pixels == g).all());
    CHECK(back.tag == ColorspaceTag::LinearLuminance);
  }
}

TEST_CASE("pfm header oracle: known bytes decode to known grid") {
  // 2x2, little-endian, bottom-to-top rows: file rows are [bottom, top].
  const fs::path p = tmp_dir() / "oracle.pfm";
  {
    std::ofstream f(p, std::ios::binary);
    f << "Pf\n2 2\n-1.0\n";
    const float bottom[2] = {3.0f, 4.0f};
    const float top[2] = {1.0f, 2.0f};
    f.write(reinterpret_cast<const char*>(bottom), 8);
    f.write(reinterpret_cast<const char*>(top), 8);
  }
  const ImageFile img = read_pfm(p);
  CHECK(img.pixels(0, 0) == 1.0);
  CHECK(img.pixels(0, 1) == 2.0);
  CHECK(img.pixels(1, 0) == 3.0);
  CHECK(img.pixels(1, 1) == 4.0);
}

TEST_CASE("pfm rejects color and malformed headers") {
  const fs::path p = tmp_dir() / "bad.pfm";
  {
    std::ofstream f(p, std::ios::binary);
    f << "PF\n2 2\n-1.0\n";
    for (int i = 0; i < 12; ++i) {
      const float v = 0;
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  CHECK_THROWS_AS(read_pfm(p), DataError);
  {
    std::ofstream f(p, std::ios::binary);
    f << "Pf\n2 nonsense\n-1.0\n";
  }
  CHECK_THROWS_AS(read_pfm(p), ParseError);
  {
    std::ofstream f(p, std::ios::binary);
    f << "Pf\n4 4\n-1.0\n";  // truncated payload
    const float v = 0;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(read_pfm(p), ParseError);
}

TEST_CASE("png8 round trip at 8-bit precision") {
  const fs::path p = tmp_dir() / "rt.png";
  Rng rng(12);
  Grid g = random_grid(9, 13, rng, 0.0, 1.0);
  // Quantize to the 8-bit lattice so the round trip is exact.
  g = (g * 255.0).round() / 255.0;
  write_png8(p, g);
  const ImageFile back = read_png8(p);
  REQUIRE(back.pixels.rows() == 9);
  REQUIRE(back.pixels.cols() == 13);
  CHECK(back.tag == ColorspaceTag::DisplayEncodedSdr);
  CHECK(back.bit_depth == 8);
  CHECK(((back.pixels - g).abs() < 1e-12).all());
}

TEST_CASE("read_image dispatches on extension") {
  const fs::path d = tmp_dir();
  Grid g(2, 2);
  g << 0.0, 0.25, 0.5, 1.0;
  write_png8(d / "x.png", g);
  write_pfm(d / "x.pfm", g);
  CHECK(read_image(d / "x.png").tag == ColorspaceTag::DisplayEncodedSdr);
  CHECK(read_image(d / "x.pfm").tag == ColorspaceTag::LinearLuminance);
  CHECK_THROWS_AS(read_image(d / "x.jpg"), DataError);
}

TEST_CASE("manifest round trip is lossless") {
  const fs::path p = tmp_dir() / "m.csv";
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    DatasetManifest m;
    m.dir = tmp_dir();
    m.provenance["generator"] = "unit-test";
    m.provenance["seed"] = std::to_string(trial);
    const int n = 1 + static_cast<int>(rng.uniform_int(12));
    for (int i = 0; i < n; ++i) {
      DatasetRecord r;
      r.ref_path = "refs/r" + std::to_string(i) + ".png";
      r.dist_path = "dist/d" + std::to_string(trial) + "_" + std::to_string(i) + ".png";
      if (rng.uniform() < 0.8) r.label = rng.uniform(-9, 9);
      r.domain = rng.uniform() < 0.5 ? Domain::SDR : Domain::HDR;
      r.dtype = "gauss-noise";
      r.level = 1 + static_cast<int>(rng.uniform_int(5));
      if (r.domain == Domain::HDR) r.l_max = rng.uniform(900, 6000);
      m.records.push_back(r);
    }
    write_manifest(p, m);
    const DatasetManifest back = read_manifest(p);
    REQUIRE(back.records.size() == m.records.size());
    CHECK(back.provenance.at("generator") == "unit-test");
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      const auto& a = m.records[i];
      const auto& b = back.records[i];
      CHECK(a.ref_path == b.ref_path);
      CHECK(a.dist_path == b.dist_path);
      CHECK(a.label.has_value() == b.label.has_value());
      if (a.label) CHECK(*a.label == *b.label);  // %.17g is double-exact
      CHECK(a.domain == b.domain);
      CHECK(a.dtype == b.dtype);
      CHECK(a.level == b.level);
      CHECK(a.l_max.has_value() == b.l_max.has_value());
      if (a.l_max) CHECK(*a.l_max == *b.l_max);
    }
  }
}

TEST_CASE("manifest rejects duplicates and bad headers") {
  const fs::path p = tmp_dir() / "bad.csv";
  {
    std::ofstream f(p);
    f << "ref_path,dist_path,label,domain,dtype,level,l_max\n";
    f << "a.png,b.png,1,sdr,noise,1,\n";
    f << "a.png,b.png,2,sdr,noise,2,\n";  // duplicate (ref, dist)
  }
  CHECK_THROWS_AS(read_manifest(p), DataError);
  {
    std::ofstream f(p);
    f << "not,the,right,header\n";
  }
  CHECK_THROWS_AS(read_manifest(p), ParseError);
}

TEST_CASE("manifest resolve joins against its directory") {
  DatasetManifest m;
  m.dir = "/data/set1";
  CHECK(m.resolve("refs/a.png") == fs::path("/data/set1/refs/a.png"));
  CHECK(m.resolve("/abs/b.png") == fs::path("/abs/b.png"));
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("rng substreams are deterministic and distinct") {
  Rng a = Rng::substream(42, "alpha");
  Rng a2 = Rng::substream(42, "alpha");
  Rng b = Rng::substream(42, "beta");
  bool all_equal = true;
  bool any_cross_equal = false;
  Rng b2 = Rng::substream(42, "beta");
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    if (x != a2.next_u64()) all_equal = false;
    if (x == b.next_u64()) any_cross_equal = true;
    (void)b2.next_u64();
  }
  CHECK(all_equal);
  CHECK_FALSE(any_cross_equal);
}

TEST_CASE("rng uniform and normal have sane moments") {
  Rng rng(7);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));

  double nsum = 0, nsum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(2.0, 3.0);
    nsum += x;
    nsum2 += x * x;
  }
  const double mean = nsum / n;
  const double var = nsum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(var == doctest::Approx(9.0).epsilon(0.03));
}

TEST_CASE("rng uniform_int is unbiased over a small modulus") {
  Rng rng(9);
  int counts[5] = {0, 0, 0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(5)];
  for (int c : counts) CHECK(c == doctest::Approx(n / 5.0).epsilon(0.05));
}
