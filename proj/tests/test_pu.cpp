#include <doctest.h>

#include <cmath>

#include "puiq/pu.hpp"

using namespace puiq;

namespace {

// Independent scalar oracle for the PU21 banding+glare fit.
double pu21_oracle(double y) {
  const double p1 = 0.353487901, p2 = 0.3734658629, p3 = 8.277049286e-05,
               p4 = 0.9062562627, p5 = 0.09150303166, p6 = 0.9099517204,
               p7 = 596.3148142;
  y = std::min(std::max(y, 0.005), 10000.0);
  const double yp = std::pow(y, p4);
  return p7 * (std::pow((p1 + p2 * yp) / (1.0 + p3 * yp), p5) - p6);
}

// Independent SMPTE ST 2084 inverse-EOTF oracle.
double pq_oracle(double y) {
  const double m1 = 2610.0 / 16384.0, m2 = 2523.0 / 4096.0 * 128.0;
  const double c1 = 3424.0 / 4096.0, c2 = 2413.0 / 4096.0 * 32.0,
               c3 = 2392.0 / 4096.0 * 32.0;
  const double yn = std::pow(std::min(std::max(y, 0.0), 10000.0) / 10000.0, m1);
  return std::pow((c1 + c2 * yn) / (1.0 + c3 * yn), m2);
}

}  // namespace

TEST_CASE("pu21 anchors: ~100 cd/m^2 -> ~256, 10000 -> ~595") {
  CHECK(pu21_encode_scalar(100.0) == doctest::Approx(256.38).epsilon(1e-3));
  CHECK(pu21_encode_scalar(10000.0) == doctest::Approx(595.39).epsilon(1e-3));
  CHECK(std::abs(pu21_encode_scalar(0.005)) < 1.0);
  CHECK(pu21_peak() == pu21_encode_scalar(10000.0));
}

TEST_CASE("pu21 matches the independent oracle over the full range") {
  Rng rng(31);
  for (int i = 0; i < 20000; ++i) {
    const double y = std::pow(10.0, rng.uniform(-2.5, 4.0));
    CHECK(pu21_encode_scalar(y) ==
          doctest::Approx(pu21_oracle(y)).epsilon(1e-12));
  }
}

TEST_CASE("pu21 is strictly monotone over the calibrated range") {
  double prev = pu21_encode_scalar(0.005);
  for (int i = 1; i <= 10000; ++i) {
    const double y =
        0.005 * std::pow(10000.0 / 0.005, i / 10000.0);
    const double v = pu21_encode_scalar(y);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("pu21 clamps out-of-range luminance and reports counts") {
  CHECK(pu21_encode_scalar(1e-6) == pu21_encode_scalar(0.005));
  CHECK(pu21_encode_scalar(1e6) == pu21_encode_scalar(10000.0));
  Grid g(1, 4);
  g << 1e-6, 1.0, 100.0, 2e4;
  ClampStats stats;
  pu21_encode(g, &stats);
  CHECK(stats.below == 1);
  CHECK(stats.above == 1);
}

TEST_CASE("pu21 decode inverts encode") {
  Rng rng(32);
  for (int i = 0; i < 500; ++i) {
    const double y = std::pow(10.0, rng.uniform(-2.3, 4.0));
    const double v = pu21_encode_scalar(y);
    CHECK(pu21_decode_scalar(v) == doctest::Approx(y).epsilon(1e-9));
  }
  CHECK_THROWS_AS(pu21_decode_scalar(pu21_peak() + 10.0), DomainError);
  CHECK_THROWS_AS(pu21_decode_scalar(pu21_encode_scalar(0.005) - 10.0),
                  DomainError);
}

TEST_CASE("pq matches the ST 2084 oracle and pins its anchors") {
  Rng rng(33);
  for (int i = 0; i < 20000; ++i) {
    const double y = std::pow(10.0, rng.uniform(-3.0, 4.0));
    CHECK(pq_encode_scalar(y) == doctest::Approx(pq_oracle(y)).epsilon(1e-12));
  }
  CHECK(pq_encode_scalar(10000.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pq_encode_scalar(100.0) ==
        doctest::Approx(0.508078421517399).epsilon(1e-12));
}

TEST_CASE("pq grid encode honors the scale255 flag and raw_peak") {
  Grid g(1, 2);
  g << 100.0, 10000.0;
  const EncodedImage scaled = pq_encode(g, true);
  CHECK(scaled.values(0, 1) == doctest::Approx(255.0).epsilon(1e-12));
  CHECK(scaled.raw_peak == doctest::Approx(255.0).epsilon(1e-12));
  const EncodedImage unit = pq_encode(g, false);
  CHECK(unit.values(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(unit.encoder == EncoderKind::PQ255);
}

TEST_CASE("normalization anchors") {
  // Pmax: 255 PU maps near 0.43; Div255: the 10000 cd/m^2 peak maps near 2.33.
  Grid g(1, 1);
  g << 10000.0;
  const EncodedImage raw = pu21_encode(g);

  EncodedImage at255 = raw;
  at255.values.setConstant(255.0);
  const EncodedImage pmax = normalize(at255, NormScheme::Pmax);
  CHECK(pmax.values(0, 0) == doctest::Approx(0.4283).epsilon(0.005));

  const EncodedImage div255 = normalize(raw, NormScheme::Div255);
  CHECK(div255.values(0, 0) == doctest::Approx(2.3349).epsilon(0.005));
}

TEST_CASE("double normalization is a state error") {
  Grid g(1, 1);
  g << 100.0;
  const EncodedImage once = normalize(pu21_encode(g), NormScheme::Pmax);
  CHECK_THROWS_AS(normalize(once, NormScheme::Pmax), StateError);
  CHECK_THROWS_AS(normalize(once, NormScheme::Div255), StateError);
}

TEST_CASE("pmax normalization of PQ uses the PQ peak") {
  Grid g(1, 1);
  g << 10000.0;
  const EncodedImage pq = normalize(pq_encode(g, true), NormScheme::Pmax);
  CHECK(pq.values(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scheme_from_string") {
  CHECK(scheme_from_string("pmax") == NormScheme::Pmax);
  CHECK(scheme_from_string("255") == NormScheme::Div255);
  CHECK(scheme_from_string("none") == NormScheme::None);
  CHECK_THROWS_AS(scheme_from_string("bogus"), ConfigError);
}

TEST_CASE("dynamic-range span: 0.1..100 cd/m^2 covers ~250 PU units") {
  const double span = pu21_encode_scalar(100.0) - pu21_encode_scalar(0.1);
  CHECK(span == doctest::Approx(250.67).epsilon(1e-3));
}
