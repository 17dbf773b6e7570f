#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "sac/image.hpp"
#include "sac/rng.hpp"

using namespace sac;
namespace fs = std::filesystem;

TEST_CASE("png round trip, rgb and gray") {
  fs::path dir = fs::temp_directory_path() / ("sac_img_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  Image rgb(9, 7, 3);
  Rng rng(5);
  for (auto& v : rgb.px) v = std::floor(rng.uniform(0, 256));
  save_png((dir / "rgb.png").string(), rgb);
  Image back = load_image((dir / "rgb.png").string(), 3);
  REQUIRE(back.h == 9);
  REQUIRE(back.w == 7);
  for (size_t i = 0; i < rgb.px.size(); ++i) CHECK(back.px[i] == rgb.px[i]);

  Image gray(5, 5, 1);
  for (auto& v : gray.px) v = std::floor(rng.uniform(0, 256));
  save_png((dir / "gray.png").string(), gray);
  Image gback = load_image((dir / "gray.png").string(), 1);
  for (size_t i = 0; i < gray.px.size(); ++i) CHECK(gback.px[i] == gray.px[i]);

  CHECK_THROWS_AS(load_image((dir / "nope.png").string()), Error);
  fs::remove_all(dir);
}

TEST_CASE("same-size resizes are exact identities") {
  Rng rng(7);
  Image img(11, 13, 3);
  for (auto& v : img.px) v = rng.uniform(0, 255);
  Image b = resize_bilinear(img, 11, 13);
  Image n = resize_nearest(img, 11, 13);
  for (size_t i = 0; i < img.px.size(); ++i) {
    CHECK(b.px[i] == img.px[i]);
    CHECK(n.px[i] == img.px[i]);
  }
}

TEST_CASE("bilinear downscale of a constant image stays constant") {
  Image img(8, 8, 1, 42.0);
  Image half = resize_bilinear(img, 4, 4);
  for (double v : half.px) CHECK(v == doctest::Approx(42.0));
}

TEST_CASE("bilinear 2x upscale interpolates midpoints") {
  Image img(1, 2, 1);
  img.at(0, 0) = 0.0;
  img.at(0, 1) = 100.0;
  Image up = resize_bilinear(img, 1, 4);
  // centers at src coords -0.25, 0.25, 0.75, 1.25 (clamped)
  CHECK(up.at(0, 0) == doctest::Approx(0.0));
  CHECK(up.at(0, 1) == doctest::Approx(25.0));
  CHECK(up.at(0, 2) == doctest::Approx(75.0));
  CHECK(up.at(0, 3) == doctest::Approx(100.0));
}

TEST_CASE("nearest keeps the value set") {
  Image img(3, 3, 1, 0.0);
  img.at(1, 1) = 255.0;
  Image up = resize_nearest(img, 9, 9);
  for (double v : up.px) CHECK((v == 0.0 || v == 255.0));
  Image down = resize_nearest(up, 3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) CHECK(down.at(y, x) == img.at(y, x));
}
