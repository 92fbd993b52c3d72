#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "part/error.hpp"
#include "part/image.hpp"
#include "test_util.hpp"

using namespace part;

namespace {

Image linear_image(int h, int w, int c) {
  Image img({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(y, x, k) = 10.0 * y + x + 100.0 * k;
  return img;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("part_test_image_" + name);
}

}  // namespace

TEST(Resample, SameSizeIsAnExactCopy) {
  const Image img = test::random_image({9, 7, 3}, 1);
  const PatchBox box{2, 3, 4, 5};
  std::vector<double> out(5 * 4 * 3);
  resample_box(img, box, 5, 4, out);
  std::size_t k = 0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(out[k++], img.at(3 + y, 2 + x, c));
}

TEST(Resample, DownsampleSamplesPixelCenters) {
  const Image img = linear_image(6, 6, 1);
  std::vector<double> out(4);
  resample_box(img, {1, 1, 4, 4}, 2, 2, out);
  // Output centers map to source offsets 0.5 and 2.5 inside the box.
  EXPECT_DOUBLE_EQ(out[0], 10.0 * 1.5 + 1.5);
  EXPECT_DOUBLE_EQ(out[1], 10.0 * 1.5 + 3.5);
  EXPECT_DOUBLE_EQ(out[2], 10.0 * 3.5 + 1.5);
  EXPECT_DOUBLE_EQ(out[3], 10.0 * 3.5 + 3.5);
}

TEST(Resample, UpsampleClampsAtBoxEdges) {
  const Image img = linear_image(2, 2, 2);
  std::vector<double> out(4 * 4 * 2);
  resample_box(img, {0, 0, 2, 2}, 4, 4, out);
  const double pos[4] = {0.0, 0.25, 0.75, 1.0};
  std::size_t k = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(out[k++], 10.0 * pos[y] + pos[x] + 100.0 * c, 1e-12);
}

TEST(Resample, ConstantImageStaysConstantAtAnyScale) {
  const Image img({20, 20, 3}, 0.37);
  for (int size : {1, 3, 7, 13, 20}) {
    std::vector<double> out(4 * 4 * 3);
    resample_box(img, {20 - size, 0, size, size}, 4, 4, out);
    for (double v : out) EXPECT_NEAR(v, 0.37, 1e-15);
  }
}

TEST(Resample, ErrorPaths) {
  const Image img({8, 8, 1});
  std::vector<double> out(16);
  EXPECT_THROW(resample_box(img, {5, 0, 4, 4}, 4, 4, out), GeometryError);
  EXPECT_THROW(resample_box(img, {-1, 0, 4, 4}, 4, 4, out), GeometryError);
  EXPECT_THROW(resample_box(img, {0, 0, 4, 4}, 4, 5, out), ShapeError);
}

TEST(Pnm, RoundTripQuantizesTo8Bits) {
  for (int c : {1, 3}) {
    const Image img = test::random_image({5, 6, c}, 3);
    const auto path = temp_path("rt" + std::to_string(c) + ".pnm");
    write_pnm(path, img);
    const Image back = read_pnm(path);
    EXPECT_EQ(back.dims, img.dims);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 0.5 / 255 + 1e-12);
    std::filesystem::remove(path);
  }
}

TEST(Pnm, ClampsAndRejectsBadInput) {
  Image img({1, 2, 1});
  img.pixels = {-3.0, 7.0};
  const auto path = temp_path("clamp.pgm");
  write_pnm(path, img);
  const Image back = read_pnm(path);
  EXPECT_EQ(back.pixels, (std::vector<double>{0.0, 1.0}));

  EXPECT_THROW(write_pnm(temp_path("two.pnm"), Image({2, 2, 2})), FormatError);
  EXPECT_THROW(read_pnm(temp_path("missing.pnm")), FormatError);
  {
    std::ofstream f(path, std::ios::binary);
    f << "P6\n4 4\n255\nabc";
  }
  EXPECT_THROW(read_pnm(path), FormatError);
  {
    std::ofstream f(path, std::ios::binary);
    f << "P3\n1 1\n255\n0 0 0";
  }
  EXPECT_THROW(read_pnm(path), FormatError);
  std::filesystem::remove(path);
}
