#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "prionvit/image_io.hpp"
#include "prionvit/pipeline.hpp"
#include "prionvit/specklegen.hpp"

using namespace prionvit;
namespace fs = std::filesystem;

namespace {

speckle::ModeSetParams small_modes(std::uint64_t seed) {
  speckle::ModeSetParams p;
  p.width = 48;
  p.height = 40;
  p.mode_count = 12;
  p.seed = seed;
  return p;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("prionvit_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("specklegen") {
  TEST_CASE("mode set is deterministic and thermally sensitive") {
    const auto a = speckle::make_mode_set(small_modes(3));
    const auto b = speckle::make_mode_set(small_modes(3));
    CHECK(a.kappa == b.kappa);
    CHECK(a.pattern_re == b.pattern_re);
    for (double k : a.kappa) {
      CHECK(k >= 0.02);
      CHECK(k <= 0.20);
    }
    for (auto amp : a.amplitude) CHECK(std::abs(amp) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("render: deterministic, in [0,1], max exactly 1") {
    const auto modes = speckle::make_mode_set(small_modes(4));
    const auto i1 = speckle::render_specklegram(modes, 37.4);
    const auto i2 = speckle::render_specklegram(modes, 37.4);
    CHECK(i1 == i2);
    double lo = 1.0, hi = 0.0;
    for (double v : i1.pixels) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0);
    CHECK(hi == 1.0);
    CHECK_THROWS(speckle::render_specklegram(speckle::FiberModeSet{}, 1.0));
    CHECK_THROWS(speckle::render_specklegram(modes, NAN));
  }

  TEST_CASE("zncc examples") {
    const auto modes = speckle::make_mode_set(small_modes(5));
    const auto a = speckle::render_specklegram(modes, 10.0);
    const auto b = speckle::render_specklegram(modes, 11.0);
    CHECK(std::abs(speckle::zncc(a, a) - 1.0) <= 1e-12);
    speckle::SpeckleImage neg = a;
    for (double& v : neg.pixels) v = 3.0 - v;
    CHECK(speckle::zncc(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(speckle::zncc(a, b) - speckle::zncc(b, a)) <= 1e-12);
    speckle::SpeckleImage flat = a;
    std::fill(flat.pixels.begin(), flat.pixels.end(), 0.5);
    CHECK_THROWS_AS(speckle::zncc(a, flat), speckle::UndefinedCorrelation);
  }

  TEST_CASE("decorrelation grows with temperature offset (20 seeds)") {
    double near = 0, mid = 0, far = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto modes = speckle::make_mode_set(small_modes(100 + s));
      const auto base = speckle::render_specklegram(modes, 50.0);
      near += speckle::zncc(base, speckle::render_specklegram(modes, 50.2));
      mid += speckle::zncc(base, speckle::render_specklegram(modes, 52.0));
      far += speckle::zncc(base, speckle::render_specklegram(modes, 70.0));
    }
    CHECK(near >= mid);
    CHECK(mid >= far);
    CHECK(near > far);
  }

  TEST_CASE("temperature grid") {
    CHECK(speckle::temperature_grid(0, 120, 0.2).size() == 601);
    CHECK(speckle::temperature_grid(0, 1, 1) == std::vector<double>{0.0, 1.0});
    CHECK_THROWS(speckle::temperature_grid(5, 4, 0.1));
    CHECK_THROWS(speckle::temperature_grid(0, 1, 0));
    CHECK_THROWS(speckle::temperature_grid(0, 1, -0.5));
  }

  TEST_CASE("file naming") {
    CHECK(speckle::image_filename(0.0) == "speckle_T000000.png");
    CHECK(speckle::image_filename(12.4) == "speckle_T012400.png");
    CHECK(speckle::image_filename(120.0) == "speckle_T120000.png");
  }

  TEST_CASE("generate_dataset writes manifest and images, byte-identical across runs") {
    const auto modes = speckle::make_mode_set(small_modes(6));
    const fs::path d1 = scratch("gen1"), d2 = scratch("gen2");
    const auto m1 = speckle::generate_dataset(modes, 0, 1, 0.5, d1);
    speckle::generate_dataset(modes, 0, 1, 0.5, d2);
    REQUIRE(m1.size() == 3);
    const std::string csv = slurp(d1 / speckle::kManifestName);
    CHECK(csv ==
          "filename,temperature_c\nspeckle_T000000.png,0.0\nspeckle_T000500.png,0.5\nspeckle_T001000.png,1.0\n");
    for (const auto& row : m1.rows) CHECK(slurp(d1 / row.filename) == slurp(d2 / row.filename));
    const auto back = speckle::read_manifest(d1);
    CHECK(back.size() == 3);
    CHECK(back.rows[1].temperature_c == 0.5);

    // 8-bit round trip.
    const auto img = io::read_gray(d1 / m1.rows[0].filename);
    const auto orig = speckle::render_specklegram(modes, 0.0);
    REQUIRE(img.width == orig.width);
    REQUIRE(img.height == orig.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) REQUIRE(std::abs(img.pixels[i] - orig.pixels[i]) <= 0.5 / 255 + 1e-12);
  }

  TEST_CASE("manifest header is validated") {
    const fs::path d = scratch("badmanifest");
    std::ofstream(d / speckle::kManifestName) << "file,temp\nx.png,1.0\n";
    CHECK_THROWS(speckle::read_manifest(d));
  }
}

TEST_SUITE("pipeline") {
  TEST_CASE("sobel: constant image") {
    const auto r = pipeline::sobel(Tensor(Shape{5, 6}, 0.7));
    for (std::size_t i = 0; i < r.gx.numel(); ++i) {
      CHECK(r.gx[i] == 0.0);
      CHECK(r.gy[i] == 0.0);
      CHECK(r.magnitude[i] == 0.0);
    }
  }

  TEST_CASE("sobel: step edge and ramp against the brute-force oracle") {
    Tensor step(Shape{7, 8});
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 8; ++c) step.at({r, c}) = c >= 4 ? 1.0 : 0.0;
    const auto s = pipeline::sobel(step);
    const auto oracle = oracles::sobel_direct(step);
    CHECK(s.gx == oracle.gx);
    CHECK(s.gy == oracle.gy);
    double mx = 0;
    for (std::size_t i = 0; i < s.gx.numel(); ++i) mx = std::max(mx, std::abs(s.gx[i]));
    CHECK(mx == 4.0);
    for (std::size_t r = 0; r < 7; ++r) {
      CHECK(s.gx.at({r, 3}) == 4.0);
      CHECK(s.gx.at({r, 4}) == 4.0);
    }

    Tensor ramp(Shape{6, 9});
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 9; ++c) ramp.at({r, c}) = static_cast<double>(c);
    const auto rr = pipeline::sobel(ramp);
    CHECK(rr.gx == oracles::sobel_direct(ramp).gx);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 1; c + 1 < 9; ++c) CHECK(rr.gx.at({r, c}) == 8.0);
  }

  TEST_CASE("sobel: random images match the oracle") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      Tensor img(Shape{3 + rng.uniform_index(10), 3 + rng.uniform_index(10)});
      for (std::size_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
      const auto s = pipeline::sobel(img);
      const auto o = oracles::sobel_direct(img);
      // Tap grouping differs from the oracle, so allow rounding.
      REQUIRE(max_abs_diff(s.gx, o.gx) <= 1e-14);
      REQUIRE(max_abs_diff(s.gy, o.gy) <= 1e-14);
      REQUIRE(max_abs_diff(s.magnitude, o.magnitude) <= 1e-14);
    }
    CHECK_THROWS(pipeline::sobel(Tensor(Shape{2, 5})));
  }

  TEST_CASE("resize_bilinear examples") {
    const Tensor img = Tensor::from_rows({{0, 1}, {0, 1}});
    const Tensor up = pipeline::resize_bilinear(img, 2, 4);
    const Tensor expect = Tensor::from_rows({{0, 1.0 / 3, 2.0 / 3, 1}, {0, 1.0 / 3, 2.0 / 3, 1}});
    CHECK(max_abs_diff(up, expect) <= 1e-15);
    CHECK(pipeline::resize_bilinear(expect, 2, 4) == expect);
    const Tensor c = pipeline::resize_bilinear(Tensor(Shape{5, 7, 3}, 0.25), 13, 4);
    CHECK(c.shape() == Shape{13, 4, 3});
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == 0.25);
  }

  TEST_CASE("preprocess") {
    speckle::SpeckleImage flat{20, 17, std::vector<double>(20 * 17, 0.4)};
    const Tensor z = pipeline::preprocess(flat, 32);
    CHECK(z.shape() == Shape{32, 32, 3});
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);

    const auto modes = speckle::make_mode_set(small_modes(8));
    const Tensor p = pipeline::preprocess(speckle::render_specklegram(modes, 3.0));
    CHECK(p.shape() == Shape{128, 128, 3});
    for (std::size_t i = 0; i < p.numel(); ++i) {
      REQUIRE(p[i] >= 0.0);
      REQUIRE(p[i] <= 1.0);
    }
  }

  TEST_CASE("min-max normalization is idempotent on a [0,1]-spanning channel") {
    std::vector<double> v{0.0, 0.3, 1.0, 0.7};
    const auto before = v;
    pipeline::min_max_normalize(v);
    CHECK(v == before);
  }

  TEST_CASE("augment") {
    Rng rng(1);
    pipeline::Sample s{Tensor(Shape{16, 16, 3}), 42.0};
    for (std::size_t i = 0; i < s.image.numel(); ++i) s.image[i] = rng.uniform();

    pipeline::AugmentConfig off{true, 0.0, 0.0, 0.0, 0.0, 0.0};
    Rng r1(5);
    CHECK(pipeline::augment(s, off, r1).image == s.image);
    Rng r1b(5);
    CHECK(pipeline::augment(s, pipeline::AugmentConfig::identity(), r1b).image == s.image);

    CHECK(pipeline::flip_horizontal(pipeline::flip_horizontal(s.image)) == s.image);
    CHECK(pipeline::flip_vertical(pipeline::flip_vertical(s.image)) == s.image);
    CHECK(pipeline::rotate_bilinear(s.image, 0.0) == s.image);

    pipeline::AugmentConfig on;
    Rng a(9), b(9);
    const auto x = pipeline::augment(s, on, a);
    const auto y = pipeline::augment(s, on, b);
    CHECK(x.image == y.image);
    for (int t = 0; t < 50; ++t) {
      const auto z = pipeline::augment(s, on, a);
      REQUIRE(z.label == 42.0);
      for (std::size_t i = 0; i < z.image.numel(); ++i) {
        REQUIRE(z.image[i] >= 0.0);
        REQUIRE(z.image[i] <= 1.0);
      }
    }
    pipeline::AugmentConfig bad;
    bad.noise_sigma = -1;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("split examples and partition property") {
    const auto s = pipeline::split_dataset(601, {0.7, 0.2, 0.1, 0});
    CHECK(s.train.size() == 420);
    CHECK(s.test.size() == 120);
    CHECK(s.val.size() == 61);
    const auto t = pipeline::split_dataset(10, {0.7, 0.2, 0.1, 0});
    CHECK(t.train.size() == 7);
    CHECK(t.test.size() == 2);
    CHECK(t.val.size() == 1);
    CHECK(pipeline::split_dataset(601, {0.7, 0.2, 0.1, 4}).train == pipeline::split_dataset(601, {0.7, 0.2, 0.1, 4}).train);
    CHECK_THROWS(pipeline::split_dataset(0, {}));
    CHECK_THROWS(pipeline::split_dataset(10, {0.7, 0.2, 0.2, 0}));

    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng.uniform_index(300);
      const auto sp = pipeline::split_dataset(n, {0.7, 0.2, 0.1, rng.next_u64()});
      std::set<std::size_t> all;
      for (auto* list : {&sp.train, &sp.test, &sp.val}) all.insert(list->begin(), list->end());
      REQUIRE(all.size() == n);
      REQUIRE(sp.train.size() + sp.test.size() + sp.val.size() == n);
      REQUIRE(*all.rbegin() == n - 1);
    }
  }

  TEST_CASE("make_batches") {
    std::vector<std::size_t> idx(10);
    for (std::size_t i = 0; i < 10; ++i) idx[i] = i;
    Rng r1(3), r2(3);
    const auto keep = pipeline::make_batches(idx, 4, r1, false);
    REQUIRE(keep.size() == 3);
    CHECK(keep[0].size() == 4);
    CHECK(keep[1].size() == 4);
    CHECK(keep[2].size() == 2);
    CHECK(pipeline::make_batches(idx, 4, r2, true).size() == 2);
    Rng r3(3);
    CHECK(pipeline::make_batches(idx, 4, r3, false) == keep);
    CHECK_THROWS(pipeline::make_batches(idx, 0, r3, false));
  }

  TEST_CASE("cache round trip and dataset loading") {
    const auto modes = speckle::make_mode_set(small_modes(10));
    const fs::path dir = scratch("load");
    const auto manifest = speckle::generate_dataset(modes, 0, 2, 1, dir);
    const auto fresh = pipeline::load_dataset(manifest, 32, dir / "cache");
    const auto cached = pipeline::load_dataset(manifest, 32, dir / "cache");
    REQUIRE(fresh.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(fresh.samples[i].image == cached.samples[i].image);
      CHECK(fresh.samples[i].label == manifest.rows[i].temperature_c);
    }
    const std::string raw = slurp(dir / "cache" / "speckle_T000000_32.spkl");
    CHECK(raw.substr(0, 4) == "SPKL");
    CHECK(raw.size() == 16 + 32 * 32 * 3 * 8);

    const std::vector<std::size_t> pick{2, 0};
    const Tensor batch = pipeline::stack_images(fresh.samples, pick);
    CHECK(batch.shape() == Shape{2, 32, 32, 3});
    CHECK(pipeline::stack_labels(fresh.samples, pick) == Tensor(Shape{2, 1}, std::vector<double>{2.0, 0.0}));
  }
}
