// Copyright 2026 The Tamperloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "tamperloc/data_pipeline.hpp"
#include "tamperloc/errors.hpp"

namespace tamperloc::data {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tamperloc_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RawSample random_sample(int h, int w, std::mt19937_64& rng) {
  RawSample s{Image(h, w), oracle::random_mask(h, w, rng)};
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : s.image.data) v = u(rng);
  return s;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

TEST(Manifest, AuthenticRowGetsZeroMask) {
  const auto dir = scratch("manifest2");
  std::mt19937_64 rng(1);
  write_image(dir / "a.png", random_sample(20, 30, rng).image);
  write_image(dir / "b.png", random_sample(20, 30, rng).image);
  Mask m(20, 30);
  m.at(3, 4) = 1;
  write_mask(dir / "a_mask.png", m);
  write_lines(dir / "m.jsonl", {R"({"image":"a.png","mask":"a_mask.png","label":"manipulated"})",
                                R"({"image":"b.png","mask":null,"label":"authentic"})"});
  const auto manifest = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(manifest.entries.size(), 2u);
  EXPECT_EQ(manifest.count(Label::kAuthentic), 1u);
  const auto second = load_sample(manifest.entries[1]);
  EXPECT_EQ(second.mask.height, 20);
  EXPECT_EQ(second.mask.width, 30);
  EXPECT_TRUE(second.mask.empty());
  EXPECT_EQ(load_sample(manifest.entries[0]).mask, m);
}

TEST(Manifest, ManipulatedRowWithoutMaskIsRejected) {
  const auto dir = scratch("nomask");
  std::mt19937_64 rng(2);
  write_image(dir / "a.png", random_sample(8, 8, rng).image);
  write_lines(dir / "m.jsonl", {R"({"image":"a.png","label":"manipulated"})"});
  EXPECT_THROW(load_manifest(dir / "m.jsonl"), DataError);
}

TEST(Manifest, MissingFilesAreRejected) {
  const auto dir = scratch("missing");
  EXPECT_THROW(load_manifest(dir / "absent.jsonl"), DataError);
  write_lines(dir / "m.jsonl", {R"({"image":"nowhere.png","label":"authentic"})"});
  EXPECT_THROW(load_manifest(dir / "m.jsonl"), DataError);
}

TEST(Manifest, LargeManifestCountsAreEchoed) {
  const auto dir = scratch("large");
  std::mt19937_64 rng(3);
  write_image(dir / "img.png", random_sample(8, 8, rng).image);
  write_mask(dir / "mask.png", Mask(8, 8));
  std::vector<std::string> lines;
  for (int i = 0; i < 7491; ++i) lines.push_back(R"({"image":"img.png","mask":null,"label":"authentic"})");
  for (int i = 0; i < 5063; ++i) lines.push_back(R"({"image":"img.png","mask":"mask.png","label":"manipulated"})");
  write_lines(dir / "m.jsonl", lines);
  const auto manifest = load_manifest(dir / "m.jsonl");
  EXPECT_EQ(manifest.entries.size(), 12554u);
  EXPECT_EQ(manifest.summary(), "12554 entries (7491 authentic, 5063 manipulated)");
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = scratch("roundtrip");
  std::mt19937_64 rng(4);
  write_image(dir / "x.png", random_sample(8, 8, rng).image);
  write_mask(dir / "x_mask.png", Mask(8, 8, 1));
  DatasetManifest m;
  m.entries.push_back({dir / "x.png", dir / "x_mask.png", Label::kManipulated});
  m.entries.push_back({dir / "x.png", std::nullopt, Label::kAuthentic});
  save_manifest(dir / "out.jsonl", m);
  const auto back = load_manifest(dir / "out.jsonl");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(fs::canonical(back.entries[0].image_path), fs::canonical(dir / "x.png"));
  EXPECT_FALSE(back.entries[1].mask_path.has_value());
}

TEST(Codec, MaskThresholdAt128) {
  const auto dir = scratch("threshold");
  // Hand-written 4x1 binary PGM: 0, 127, 128, 255.
  std::ofstream f(dir / "m.pgm", std::ios::binary);
  f << "P5\n4 1\n255\n";
  const unsigned char px[4] = {0, 127, 128, 255};
  f.write(reinterpret_cast<const char*>(px), 4);
  f.close();
  const Mask m = read_mask(dir / "m.pgm");
  EXPECT_EQ(m.data, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST(Padding, FullSizeIsIdentity) {
  std::mt19937_64 rng(5);
  const auto s = random_sample(32, 32, rng);
  const auto p = pad_to_canvas(s, 32, 32);
  EXPECT_EQ(p.image, s.image);
  EXPECT_EQ(p.mask, s.mask);
  EXPECT_EQ(p.orig_extent, (Extent{32, 32}));
}

TEST(Padding, ContentTopLeftZerosElsewhere) {
  std::mt19937_64 rng(6);
  const auto s = random_sample(384, 256, rng);
  const auto p = pad_to_canvas(s, 1024, 1024);
  EXPECT_EQ(p.orig_extent, (Extent{384, 256}));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 1024; ++y)
      for (int x = 0; x < 1024; ++x) {
        const float expected = (y < 384 && x < 256) ? s.image.at(c, y, x) : 0.0f;
        ASSERT_EQ(p.image.at(c, y, x), expected) << c << "," << y << "," << x;
      }
  for (int y = 0; y < 1024; ++y)
    for (int x = 0; x < 1024; ++x) ASSERT_EQ(p.mask.at(y, x), (y < 384 && x < 256) ? s.mask.at(y, x) : 0);
}

TEST(Padding, CropInvertsPadAndPadIsIdempotent) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const int h = 1 + static_cast<int>(rng() % 64), w = 1 + static_cast<int>(rng() % 64);
    const auto s = random_sample(h, w, rng);
    const auto p = pad_to_canvas(s, 64, 64);
    const auto back = crop_to_extent(p);
    ASSERT_EQ(back.image, s.image);
    ASSERT_EQ(back.mask, s.mask);
    const auto again = pad_to_canvas(back, 64, 64);
    ASSERT_EQ(again.image, p.image);
    ASSERT_EQ(again.mask, p.mask);
  }
}

TEST(Resize, LongSideBecomesLimit) {
  RawSample s{Image(3744, 5616, 0.5f), Mask(3744, 5616)};
  for (int y = 1000; y < 2000; ++y)
    for (int x = 3000; x < 4000; ++x) s.mask.at(y, x) = 1;
  const auto r = resize_oversized(s, 1024);
  EXPECT_EQ(r.image.width, 1024);
  EXPECT_EQ(r.image.height, 683);
  EXPECT_EQ(r.mask.width, 1024);
  EXPECT_EQ(r.mask.height, 683);
  EXPECT_TRUE(r.mask.is_binary());
  EXPECT_GT(r.mask.count(), 0u);
}

TEST(Resize, SmallSamplePassesThrough) {
  std::mt19937_64 rng(8);
  const auto s = random_sample(512, 1024, rng);
  const auto r = resize_oversized(s, 1024);
  EXPECT_EQ(r.image, s.image);
  EXPECT_EQ(r.mask, s.mask);
}

TEST(Resize, PortraitAspectWithinOnePixel) {
  std::mt19937_64 rng(9);
  const auto s = random_sample(300, 170, rng);
  const auto r = resize_oversized(s, 128);
  EXPECT_EQ(r.image.height, 128);
  EXPECT_LE(std::abs(r.image.width - 170.0 * 128.0 / 300.0), 1.0);
  EXPECT_TRUE(r.mask.is_binary());
}

TEST(Synthesis, DeterministicAndMaskIsRectangle) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    RawSample clean{render_synthetic_image(96, 80, seed), Mask(96, 80)};
    TamperRecord rec_a, rec_b;
    const auto a = synthesize_manipulation(clean, seed * 7 + 1, &rec_a);
    const auto b = synthesize_manipulation(clean, seed * 7 + 1, &rec_b);
    ASSERT_EQ(a.image, b.image);
    ASSERT_EQ(a.mask, b.mask);
    ASSERT_EQ(rec_a.mode, rec_b.mode);
    EXPECT_EQ(a.mask.count(), static_cast<std::size_t>(rec_a.height * rec_a.width));
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 80; ++x) {
        const bool inside = y >= rec_a.y && y < rec_a.y + rec_a.height && x >= rec_a.x && x < rec_a.x + rec_a.width;
        ASSERT_EQ(a.mask.at(y, x), inside ? 1 : 0);
        if (!inside) ASSERT_EQ(a.image.at(0, y, x), clean.image.at(0, y, x));
      }
  }
}

TEST(Synthesis, CopyMoveRegionEqualsSource) {
  int seen = 0;
  for (std::uint64_t seed = 0; seed < 64 && seen < 5; ++seed) {
    RawSample clean{render_synthetic_image(64, 64, 100 + seed), Mask(64, 64)};
    TamperRecord rec;
    const auto out = synthesize_manipulation(clean, seed, &rec);
    if (rec.mode != TamperMode::kCopyMove) continue;
    ++seen;
    const bool disjoint = rec.y + rec.height <= rec.src_y || rec.src_y + rec.height <= rec.y ||
                          rec.x + rec.width <= rec.src_x || rec.src_x + rec.width <= rec.x;
    EXPECT_TRUE(disjoint);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x)
          ASSERT_EQ(out.image.at(c, rec.y + y, rec.x + x), clean.image.at(c, rec.src_y + y, rec.src_x + x));
  }
  EXPECT_EQ(seen, 5);
}

TEST(Synthesis, TinyImagesRejected) {
  RawSample s{Image(16, 40), Mask(16, 40)};
  EXPECT_THROW(synthesize_manipulation(s, 1), DataError);
}

TEST(Synthesis, DatasetIsDeterministic) {
  const auto a = synthetic_dataset(3, 48, 48, 11);
  const auto b = synthetic_dataset(3, 48, 48, 11);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_FALSE(a[i].mask.empty());
  }
  EXPECT_NE(a[0].image, synthetic_dataset(1, 48, 48, 12)[0].image);
}

TEST(Augment, DisabledIsIdentity) {
  std::mt19937_64 rng(10);
  const auto s = random_sample(20, 24, rng);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = augment(s, seed, AugmentConfig::disabled());
    EXPECT_EQ(a.image, s.image);
    EXPECT_EQ(a.mask, s.mask);
  }
}

TEST(Augment, FlipIsEquivariant) {
  std::mt19937_64 rng(11);
  auto s = random_sample(10, 14, rng);
  // Encode the mask into channel 0 so image and mask must move together.
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 14; ++x) s.image.at(0, y, x) = s.mask.at(y, x);
  for (const auto& f : {flip_horizontal(s), flip_vertical(s), rotate90(s)}) {
    for (int y = 0; y < f.mask.height; ++y)
      for (int x = 0; x < f.mask.width; ++x) ASSERT_EQ(f.image.at(0, y, x), f.mask.at(y, x));
  }
  const auto h = flip_horizontal(s);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 14; ++x) ASSERT_EQ(h.mask.at(y, x), s.mask.at(y, 13 - x));
}

TEST(Augment, Rotate90MovesRectangleAnalytically) {
  const int h = 20, w = 30, y0 = 2, y1 = 7, x0 = 18, x1 = 27;
  RawSample s{Image(h, w), Mask(h, w)};
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) s.mask.at(y, x) = 1;
  const auto r = rotate90(s);
  ASSERT_EQ(r.mask.height, w);
  ASSERT_EQ(r.mask.width, h);
  // Clockwise: rows [x0, x1), cols [h - y1, h - y0).
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < h; ++x) {
      const bool inside = y >= x0 && y < x1 && x >= h - y1 && x < h - y0;
      ASSERT_EQ(r.mask.at(y, x), inside ? 1 : 0) << y << "," << x;
    }
}

TEST(Augment, DeterministicAndBinary) {
  std::mt19937_64 rng(12);
  const auto s = random_sample(40, 36, rng);
  AugmentConfig cfg;
  cfg.hflip_prob = cfg.vflip_prob = cfg.rot90_prob = cfg.rescale_prob = cfg.blur_prob = 0.5;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto a = augment(s, seed, cfg), b = augment(s, seed, cfg);
    ASSERT_EQ(a.image, b.image);
    ASSERT_EQ(a.mask, b.mask);
    ASSERT_TRUE(a.mask.is_binary());
    ASSERT_EQ(a.mask.height, a.image.height);
    ASSERT_EQ(a.mask.width, a.image.width);
  }
}

TEST(Distortion, NoneIsIdentity) {
  std::mt19937_64 rng(13);
  const auto s = random_sample(12, 12, rng);
  const auto d = apply_distortion(s, DistortionSpec::none());
  EXPECT_EQ(d.image, s.image);
  EXPECT_EQ(d.mask, s.mask);
}

TEST(Distortion, BlurMatchesDirectConvolution) {
  std::mt19937_64 rng(14);
  const auto s = random_sample(8, 8, rng);
  const auto d = apply_distortion(s, DistortionSpec::blur(5));
  const auto ref = oracle::blur(s.image, 5);
  for (std::size_t i = 0; i < ref.data.size(); ++i) ASSERT_NEAR(d.image.data[i], ref.data[i], 1e-6);
  EXPECT_EQ(d.mask, s.mask);
}

TEST(Distortion, KernelsAreNormalized) {
  for (int k = 3; k <= 49; k += 2) {
    const auto g = gaussian_kernel(k);
    double sum = 0;
    for (double v : g) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-6) << k;
  }
}

TEST(Distortion, JpegErrorGrowsAsQualityDrops) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Image img = render_synthetic_image(64, 64, seed);
    auto err = [&](int q) {
      const Image out = jpeg_roundtrip(jpeg_roundtrip(img, q), q);
      double acc = 0;
      for (std::size_t i = 0; i < img.data.size(); ++i) acc += std::abs(out.data[i] - img.data[i]);
      return acc / static_cast<double>(img.data.size());
    };
    EXPECT_GT(err(50), err(100));
  }
}

TEST(Distortion, InvalidSpecsRejected) {
  RawSample s{Image(8, 8), Mask(8, 8)};
  EXPECT_THROW(apply_distortion(s, DistortionSpec::blur(4)), ConfigError);
  EXPECT_THROW(apply_distortion(s, DistortionSpec::blur(1)), ConfigError);
  EXPECT_THROW(apply_distortion(s, DistortionSpec::jpeg(49)), ConfigError);
  EXPECT_THROW(apply_distortion(s, DistortionSpec::jpeg(101)), ConfigError);
}

TEST(Validate, MismatchedOrNonBinaryRejected) {
  RawSample s{Image(8, 8), Mask(8, 9)};
  EXPECT_THROW(validate(s), DataError);
  RawSample t{Image(8, 8), Mask(8, 8)};
  t.mask.at(0, 0) = 3;
  EXPECT_THROW(validate(t), DataError);
}

}  // namespace
}  // namespace tamperloc::data
