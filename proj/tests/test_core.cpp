#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "avdet/assignment.hpp"
#include "avdet/audio_clip.hpp"
#include "avdet/checkpoint.hpp"
#include "avdet/errors.hpp"
#include "avdet/fft.hpp"
#include "avdet/geometry.hpp"
#include "avdet/image.hpp"
#include "avdet/rng.hpp"

using namespace avdet;
namespace fs = std::filesystem;

namespace {
std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("avdet_core_" + name)).string();
}
}  // namespace

TEST_CASE("rng: same seed, same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: substreams are independent and deterministic") {
  Rng base(7);
  Rng s1 = base.stream(1), s1b = Rng(7).stream(1), s2 = base.stream(2);
  bool all_equal = true;
  for (int i = 0; i < 50; ++i) {
    const auto v1 = s1.next_u64();
    CHECK(v1 == s1b.next_u64());
    if (v1 != s2.next_u64()) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng: uniform bounds and moments") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = rng.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("rng: normal moments") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("rng: shuffle is a permutation and uniform_int stays in range") {
  Rng rng(5);
  std::vector<int> v(37);
  std::iota(v.begin(), v.end(), 0);
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);
  for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(7) < 7);
}

TEST_CASE("errors carry their category") {
  try {
    fail(errc::sample_rate_mismatch, "boom");
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::sample_rate_mismatch);
    CHECK(std::string(e.what()).find("sample_rate_mismatch") != std::string::npos);
  }
}

TEST_CASE("geometry basics") {
  const Vec3 a{1.0, 2.0, 2.0};
  CHECK(a.norm() == doctest::Approx(3.0));
  CHECK(distance({0, 0, 0}, {3, 4, 0}) == doctest::Approx(5.0));
  CHECK(deg_to_rad(180.0) == doctest::Approx(kPi));
}

// -----------------------------------------------------------------------------
// assignment vs brute force

namespace {

double brute_force_assignment(const std::vector<double>& cost, int nr, int nc) {
  // min over injections of the smaller side into the larger
  const bool rows_small = nr <= nc;
  const int k = rows_small ? nr : nc;
  const int m = rows_small ? nc : nr;
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      const int r = rows_small ? i : perm[i];
      const int c = rows_small ? perm[i] : i;
      total += cost[static_cast<std::size_t>(r) * nc + c];
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("assignment matches brute force on 1000 random instances") {
  Rng rng(99);
  for (int iter = 0; iter < 1000; ++iter) {
    const int nr = 1 + static_cast<int>(rng.uniform_int(6));
    const int nc = 1 + static_cast<int>(rng.uniform_int(6));
    std::vector<double> cost(static_cast<std::size_t>(nr) * nc);
    for (double& v : cost) v = rng.uniform(0.0, 10.0);
    std::vector<int> r2c;
    const double got = solve_assignment(cost, nr, nc, r2c);
    const double want = brute_force_assignment(cost, nr, nc);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    // solution structure: min(nr,nc) matched, no duplicate columns
    std::vector<int> used;
    double total = 0.0;
    for (int r = 0; r < nr; ++r) {
      if (r2c[r] < 0) continue;
      used.push_back(r2c[r]);
      total += cost[static_cast<std::size_t>(r) * nc + r2c[r]];
    }
    CHECK(static_cast<int>(used.size()) == std::min(nr, nc));
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    CHECK(total == doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("assignment: empty sides") {
  std::vector<int> r2c;
  CHECK(solve_assignment({}, 0, 0, r2c) == 0.0);
  CHECK(solve_assignment({}, 0, 3, r2c) == 0.0);
}

// -----------------------------------------------------------------------------
// image

TEST_CASE("png round trip at 8-bit precision") {
  Image img(17, 9);
  Rng rng(1);
  for (double& v : img.data) v = rng.uniform();
  const std::string path = tmp_path("roundtrip.png");
  write_png(path, img);
  const Image back = read_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255 + 1e-9);
  // a second write of the same image is byte-identical
  const std::string path2 = tmp_path("roundtrip2.png");
  write_png(path2, img);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("read_png on missing file reports missing_file") {
  CHECK_THROWS_WITH_AS(read_png(tmp_path("nope.png")), doctest::Contains("missing"), Error);
}

TEST_CASE("resize_bilinear: identity and constant images") {
  Image img(8, 6);
  for (double& v : img.data) v = 0.37;
  const Image big = resize_bilinear(img, 23, 11);
  CHECK(big.width == 23);
  CHECK(big.height == 11);
  for (double v : big.data) CHECK(v == doctest::Approx(0.37));
  const Image same = resize_bilinear(img, 8, 6);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(img.data[i]));
}

TEST_CASE("to_gray averages channels") {
  Image img(2, 1);
  img.at(0, 0, 0) = 0.3;
  img.at(0, 0, 1) = 0.6;
  img.at(0, 0, 2) = 0.9;
  const auto g = to_gray(img);
  CHECK(g[0] == doctest::Approx(0.6));
}

// -----------------------------------------------------------------------------
// audio

TEST_CASE("wav round trip at 16-bit precision") {
  AudioClip clip(3, 500, 44100.0);
  Rng rng(2);
  for (float& v : clip.samples) v = static_cast<float>(rng.uniform(-0.9, 0.9));
  const std::string path = tmp_path("roundtrip.wav");
  write_wav(path, clip);
  const AudioClip back = read_wav(path);
  REQUIRE(back.channels == 3);
  REQUIRE(back.n_samples == 500);
  CHECK(back.sample_rate_hz == doctest::Approx(44100.0));
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32767 + 1e-9);
}

TEST_CASE("channel_rms of a known sine") {
  AudioClip clip(1, 44100, 44100.0);
  for (int i = 0; i < 44100; ++i)
    clip.channel(0)[i] = static_cast<float>(0.5 * std::sin(2.0 * kPi * 100.0 * i / 44100.0));
  CHECK(channel_rms(clip, 0) == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-3));
}

TEST_CASE("read_wav on missing file reports missing_file") {
  try {
    read_wav(tmp_path("nope.wav"));
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::missing_file);
  }
}

// -----------------------------------------------------------------------------
// fft

TEST_CASE("fft of an impulse is flat") {
  RealFft fft(64);
  std::vector<double> x(64, 0.0);
  x[0] = 1.0;
  std::vector<std::complex<double>> out(33);
  fft.transform(x.data(), out.data());
  for (const auto& v : out) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fft matches a direct DFT") {
  const int n = 32;
  RealFft fft(n);
  Rng rng(4);
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fft.transform(x.data(), out.data());
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int i = 0; i < n; ++i)
      acc += x[i] * std::exp(std::complex<double>(0.0, -2.0 * kPi * k * i / n));
    CHECK(std::abs(out[k] - acc) < 1e-9);
  }
}

TEST_CASE("fft Parseval energy identity") {
  const int n = 256;
  RealFft fft(n);
  Rng rng(5);
  std::vector<double> x(n);
  double time_energy = 0.0;
  for (double& v : x) {
    v = rng.uniform(-1.0, 1.0);
    time_energy += v * v;
  }
  std::vector<std::complex<double>> out(n / 2 + 1);
  fft.transform(x.data(), out.data());
  double freq_energy = std::norm(out[0]) + std::norm(out[n / 2]);
  for (int k = 1; k < n / 2; ++k) freq_energy += 2.0 * std::norm(out[k]);
  CHECK(freq_energy / n == doctest::Approx(time_energy).epsilon(1e-10));
}

// -----------------------------------------------------------------------------
// checkpoint

TEST_CASE("checkpoint round trip preserves meta and arrays at float32") {
  const std::string path = tmp_path("ck.bin");
  std::vector<double> a = {1.0, -2.5, 3.25};
  std::vector<double> b = {0.125};
  save_checkpoint(path, {{"kind", "test"}, {"n", 3}}, {{"a", &a}, {"b", &b}});
  const LoadedCheckpoint ck = load_checkpoint(path);
  CHECK(ck.meta.at("kind").get<std::string>() == "test");
  CHECK(ck.meta.at("n").get<int>() == 3);
  CHECK(ck.find("a") == a);  // exactly representable values
  CHECK(ck.find("b") == b);
  CHECK_THROWS_AS(ck.find("c"), Error);
}

TEST_CASE("checkpoint rejects bad magic") {
  const std::string path = tmp_path("bad.bin");
  std::ofstream(path) << "not a checkpoint";
  try {
    load_checkpoint(path);
    FAIL("unreachable");
  } catch (const Error& e) {
    CHECK(e.code() == errc::io);
  }
}
