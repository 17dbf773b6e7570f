#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sac/dataset.hpp"

using namespace sac;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sac_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image flat_image(int h, int w, double v) { return Image(h, w, 3, v); }

}  // namespace

TEST_CASE("prepare_sample thresholds the 3x3 mask example") {
  Image img = flat_image(3, 3, 200.0);
  Image mask(3, 3, 1, 0.0);
  mask.at(0, 1) = 255.0;
  mask.at(1, 1) = 255.0;
  ImageSample s = prepare_sample(img, mask, 3);
  double expect[9] = {0, 1, 0, 0, 1, 0, 0, 0, 0};
  for (int i = 0; i < 9; ++i) CHECK(s.mask[i] == expect[i]);
  for (size_t i = 0; i < s.image.numel(); ++i)
    CHECK(s.image[i] == doctest::Approx(200.0 / 255.0));
}

TEST_CASE("prepare_sample resizes 448 -> 256") {
  Image img = flat_image(448, 448, 128.0);
  Image mask(448, 448, 1, 0.0);
  for (int y = 100; y < 130; ++y)
    for (int x = 0; x < 448; ++x) mask.at(y, x) = 255.0;
  ImageSample s = prepare_sample(img, mask, 256);
  CHECK(s.image.shape == std::vector<int>({256, 256, 3}));
  CHECK(s.mask.shape == std::vector<int>({256, 256}));
  double pos = 0;
  for (size_t i = 0; i < s.mask.numel(); ++i) pos += s.mask[i];
  CHECK(pos > 0);
  for (size_t i = 0; i < s.mask.numel(); ++i)
    CHECK((s.mask[i] == 0.0 || s.mask[i] == 1.0));
}

TEST_CASE("prepare_sample is the identity on already-prepared input") {
  // binary {0,255} mask at target size: values must survive untouched
  Image img(4, 4, 3);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = (i * 37) % 256;
  Image mask(4, 4, 1, 0.0);
  mask.at(1, 2) = 255.0;
  ImageSample s1 = prepare_sample(img, mask, 4);
  CHECK(s1.mask.data[1 * 4 + 2] == 1.0);

  // idempotency: feeding a prepared sample back through changes nothing
  Image img2(4, 4, 3);
  for (size_t i = 0; i < img2.px.size(); ++i) img2.px[i] = s1.image[i];
  Image mask2(4, 4, 1);
  for (size_t i = 0; i < mask2.px.size(); ++i) mask2.px[i] = s1.mask[i];
  ImageSample s2 = prepare_sample(img2, mask2, 4);
  for (size_t i = 0; i < s1.image.numel(); ++i) CHECK(s2.image[i] == s1.image[i]);
  for (size_t i = 0; i < s1.mask.numel(); ++i) CHECK(s2.mask[i] == s1.mask[i]);
}

TEST_CASE("binarization commutes with nearest-neighbor resize on binary input") {
  Rng rng(99);
  for (int it = 0; it < 20; ++it) {
    Image mask(10, 10, 1, 0.0);
    for (auto& v : mask.px) v = rng.uniform() < 0.3 ? 255.0 : 0.0;
    int target = 5 + static_cast<int>(rng.below(12));
    // resize then threshold
    Image r = resize_nearest(mask, target, target);
    // threshold then resize
    Image t(10, 10, 1, 0.0);
    for (size_t i = 0; i < mask.px.size(); ++i) t.px[i] = mask.px[i] > 127 ? 1.0 : 0.0;
    Image rt = resize_nearest(t, target, target);
    for (size_t i = 0; i < r.px.size(); ++i) CHECK((r.px[i] > 127 ? 1.0 : 0.0) == rt.px[i]);
  }
}

TEST_CASE("prepare_sample rejects malformed input") {
  CHECK_THROWS_AS(prepare_sample(flat_image(4, 4, 1), Image(5, 4, 1), 4), Error);
  CHECK_THROWS_AS(prepare_sample(flat_image(4, 4, 1), Image(4, 4, 1), 0), Error);
}

TEST_CASE("manifest round trip, pairing and consistency errors") {
  TempDir tmp("manifest");
  // build a 2-entry dataset on disk
  save_png((tmp.path / "a_img.png").string(), flat_image(6, 6, 120));
  save_png((tmp.path / "a_mask.png").string(), Image(6, 6, 1, 255.0));
  save_png((tmp.path / "b_img.png").string(), flat_image(6, 6, 90));
  save_png((tmp.path / "b_mask.png").string(), Image(6, 6, 1, 0.0));

  DatasetManifest m;
  m.name = "mini";
  m.split = Split::test;
  m.entries = {{"a_img.png", "a_mask.png"}, {"b_img.png", "b_mask.png"}};
  save_manifest(m, (tmp.path / "manifest.json").string());

  DatasetManifest loaded = load_manifest((tmp.path / "manifest.json").string());
  CHECK(loaded.size() == 2);
  CHECK(loaded.split == Split::test);
  // every entry yielded exactly once, in order
  CHECK(loaded.entries[0].image == "a_img.png");
  CHECK(loaded.entries[1].image == "b_img.png");

  ImageSample s = load_sample(loaded, 0, 6);
  CHECK(s.id == "a_img");
  CHECK(s.mask[0] == 1.0);

  // empty manifest is fine
  DatasetManifest empty;
  empty.name = "none";
  empty.split = Split::val;
  save_manifest(empty, (tmp.path / "empty.json").string());
  CHECK(load_manifest((tmp.path / "empty.json").string()).size() == 0);

  // image without mask -> pairing error
  std::ofstream bad1(tmp.path / "orphan.json");
  bad1 << R"({"name":"x","split":"train","entries":[{"image":"a_img.png"}]})";
  bad1.close();
  CHECK_THROWS_AS(load_manifest((tmp.path / "orphan.json").string()), Error);

  // declared_size mismatch -> consistency error
  std::ofstream bad2(tmp.path / "declared.json");
  bad2 << R"({"name":"x","split":"train","declared_size":3,)"
       << R"("entries":[{"image":"a_img.png","mask":"a_mask.png"}]})";
  bad2.close();
  CHECK_THROWS_AS(load_manifest((tmp.path / "declared.json").string()), Error);

  // missing file -> load error naming the path
  std::ofstream bad3(tmp.path / "missing.json");
  bad3 << R"({"name":"x","split":"train","entries":[{"image":"ghost.png","mask":"a_mask.png"}]})";
  bad3.close();
  try {
    load_manifest((tmp.path / "missing.json").string());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ghost.png") != std::string::npos);
  }
}

TEST_CASE("synthetic dataset: determinism, mask budget, nonempty") {
  TempDir tmp("synth");
  DatasetManifest m1 =
      synth_crack_dataset(20, 64, 7, (tmp.path / "d1").string(), "synth", Split::train);
  DatasetManifest m2 =
      synth_crack_dataset(20, 64, 7, (tmp.path / "d2").string(), "synth", Split::train);
  CHECK(m1.size() == 20);

  // bit-identical outputs under the same (n, size, seed)
  for (int i = 0; i < 20; ++i) {
    std::ifstream f1(tmp.path / "d1" / m1.entries[i].image, std::ios::binary);
    std::ifstream f2(tmp.path / "d2" / m2.entries[i].image, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
  }

  // every mask nonempty with positive fraction < 0.25
  for (int i = 0; i < 20; ++i) {
    ImageSample s = load_sample(m1, static_cast<size_t>(i), 64);
    double pos = 0;
    for (size_t k = 0; k < s.mask.numel(); ++k) pos += s.mask[k];
    double frac = pos / static_cast<double>(s.mask.numel());
    CHECK(frac > 0.0);
    CHECK(frac < 0.25);
  }

  DatasetManifest single =
      synth_crack_dataset(1, 32, 123, (tmp.path / "one").string(), "one", Split::val);
  CHECK(single.size() == 1);
  ImageSample s = load_sample(single, 0, 32);
  double pos = 0;
  for (size_t k = 0; k < s.mask.numel(); ++k) pos += s.mask[k];
  CHECK(pos > 0);

  CHECK_THROWS_AS(synth_crack_dataset(0, 32, 1, (tmp.path / "zero").string()), Error);
}

TEST_CASE("mask budget holds across a 200-sample generation") {
  auto samples = synth_samples(200, 64, 7);
  for (const auto& s : samples) {
    double pos = 0;
    for (size_t k = 0; k < s.mask.numel(); ++k) pos += s.mask[k];
    double frac = pos / static_cast<double>(s.mask.numel());
    CHECK(frac > 0.0);
    CHECK(frac < 0.25);
  }
}

TEST_CASE("in-memory synth matches the documented contract") {
  auto samples = synth_samples(8, 48, 3);
  CHECK(samples.size() == 8);
  for (const auto& s : samples) {
    CHECK(s.image.shape == std::vector<int>({48, 48, 3}));
    for (size_t i = 0; i < s.image.numel(); ++i) {
      CHECK(s.image[i] >= 0.0);
      CHECK(s.image[i] <= 1.0);
    }
  }
  auto again = synth_samples(8, 48, 3);
  for (size_t i = 0; i < samples.size(); ++i)
    for (size_t k = 0; k < samples[i].image.numel(); ++k)
      CHECK(samples[i].image[k] == again[i].image[k]);
}
