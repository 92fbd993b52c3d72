#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "part/error.hpp"
#include "part/geometry.hpp"

using namespace part;

namespace {

SamplerConfig offgrid(int n, int lo, int hi, BoxAspect aspect = BoxAspect::square) {
  SamplerConfig c;
  c.patch_count = n;
  c.patch_size = lo;
  c.size_min = lo;
  c.size_max = hi;
  c.aspect = aspect;
  return c;
}

}  // namespace

TEST(Geometry, RelativeTargetHandComputed) {
  const PatchBox ref{2, 4, 4, 8};   // center (4, 8)
  const PatchBox tgt{10, 0, 6, 2};  // center (13, 1)
  const RelativeTarget t = relative_target(ref, tgt);
  EXPECT_DOUBLE_EQ(t.dx, 9.0 / 4.0);
  EXPECT_DOUBLE_EQ(t.dy, -7.0 / 8.0);
  const ExtendedTarget e = extended_target(ref, tgt);
  EXPECT_DOUBLE_EQ(e.dw, 1.5);
  EXPECT_DOUBLE_EQ(e.dh, 0.25);
  const RelativeTarget self = relative_target(ref, ref);
  EXPECT_EQ(self.dx, 0.0);
  EXPECT_EQ(self.dy, 0.0);
}

TEST(Geometry, OddSizesUseHalfPixelCenters) {
  const PatchBox ref{0, 0, 3, 3};  // center (1.5, 1.5)
  const PatchBox tgt{3, 0, 3, 3};
  EXPECT_DOUBLE_EQ(relative_target(ref, tgt).dx, 1.0);
}

TEST(Geometry, DegenerateReferenceThrows) {
  EXPECT_THROW(relative_target({0, 0, 0, 4}, {1, 1, 2, 2}), GeometryError);
  EXPECT_THROW(relative_target({0, 0, 4, 0}, {1, 1, 2, 2}), GeometryError);
}

TEST(Geometry, TargetMatrixPropertiesOnRandomBoxes) {
  const ImageDims dims{40, 50, 3};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto boxes = sample_offgrid(dims, offgrid(7, 2, 12, BoxAspect::free), rng);
    const TargetMatrix m = target_matrix(boxes, TargetMode::extended);
    ASSERT_EQ(m.n, 7u);
    ASSERT_EQ(m.arity, 4u);
    for (std::size_t i = 0; i < m.n; ++i) {
      EXPECT_EQ(m.at(i, i, 0), 0.0);
      EXPECT_EQ(m.at(i, i, 2), 1.0);
      for (std::size_t j = 0; j < m.n; ++j) {
        // Scaled antisymmetry: displacement in pixels is negated.
        EXPECT_NEAR(m.at(i, j, 0) * boxes[i].width, -m.at(j, i, 0) * boxes[j].width, 1e-12);
        EXPECT_NEAR(m.at(i, j, 1) * boxes[i].height, -m.at(j, i, 1) * boxes[j].height, 1e-12);
        EXPECT_NEAR(m.at(i, j, 2) * m.at(j, i, 2), 1.0, 1e-12);
        for (std::size_t k = 0; k < m.n; ++k) {
          // Pixel displacements compose along a path.
          EXPECT_NEAR(m.at(i, k, 0) * boxes[i].width,
                      m.at(i, j, 0) * boxes[i].width + m.at(j, k, 0) * boxes[j].width, 1e-9);
        }
      }
    }
  }
}

TEST(Geometry, EqualSizeTargetsAreExactlyAntisymmetric) {
  Rng rng(4);
  const auto boxes = sample_offgrid({32, 32, 1}, offgrid(10, 5, 5), rng);
  const TargetMatrix m = target_matrix(boxes, TargetMode::base);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) {
      EXPECT_EQ(m.at(i, j, 0), -m.at(j, i, 0));
      EXPECT_EQ(m.at(i, j, 1), -m.at(j, i, 1));
    }
}

TEST(Geometry, OffgridBoxesStayInsideAndRespectSizes) {
  const ImageDims dims{17, 23, 1};
  for (auto aspect : {BoxAspect::square, BoxAspect::free}) {
    Rng rng(8);
    std::set<int> widths;
    for (int rep = 0; rep < 200; ++rep) {
      for (const PatchBox& b : sample_offgrid(dims, offgrid(5, 3, 17, aspect), rng)) {
        ASSERT_TRUE(b.inside(dims));
        ASSERT_GE(b.width, 3);
        ASSERT_LE(b.width, 17);
        ASSERT_GE(b.height, 3);
        ASSERT_LE(b.height, 17);
        if (aspect == BoxAspect::square) ASSERT_EQ(b.width, b.height);
        widths.insert(b.width);
        if (b.width == 17) EXPECT_EQ(b.x_s + 17 <= 23, true);
      }
    }
    EXPECT_EQ(widths.size(), 15u);
  }
}

TEST(Geometry, OffgridIsDeterministicPerSeed) {
  Rng a(3), b(3);
  const auto c = offgrid(6, 2, 4);
  EXPECT_EQ(sample_offgrid({16, 16, 1}, c, a), sample_offgrid({16, 16, 1}, c, b));
}

TEST(Geometry, GridTilesTheImageInRowMajorOrder) {
  const auto boxes = sample_grid({8, 12, 1}, 4);
  ASSERT_EQ(boxes.size(), 6u);
  EXPECT_EQ(boxes[0], (PatchBox{0, 0, 4, 4}));
  EXPECT_EQ(boxes[2], (PatchBox{8, 0, 4, 4}));
  EXPECT_EQ(boxes[3], (PatchBox{0, 4, 4, 4}));
  std::vector<int> cover(96, 0);
  for (const PatchBox& b : boxes)
    for (int y = b.y_s; y < b.y_e(); ++y)
      for (int x = b.x_s; x < b.x_e(); ++x) ++cover[static_cast<std::size_t>(y * 12 + x)];
  for (int c : cover) EXPECT_EQ(c, 1);
  EXPECT_THROW(sample_grid({8, 10, 1}, 4), ConfigError);
}

TEST(Geometry, GridTargetsAreIntegerMultiples) {
  const auto boxes = sample_grid({16, 16, 1}, 4);
  const TargetMatrix m = target_matrix(boxes, TargetMode::base);
  for (double v : m.values) EXPECT_EQ(v, std::round(v));
  EXPECT_EQ(m.at(0, 15, 0), 3.0);
  EXPECT_EQ(m.at(0, 15, 1), 3.0);
}

TEST(Geometry, SamplerValidation) {
  const ImageDims dims{16, 16, 1};
  EXPECT_THROW(offgrid(1, 2, 4).validate(dims), ConfigError);
  EXPECT_THROW(offgrid(4, 5, 4).validate(dims), ConfigError);
  EXPECT_THROW(offgrid(4, 0, 4).validate(dims), ConfigError);
  EXPECT_THROW(offgrid(4, 4, 17).validate(dims), ConfigError);
  EXPECT_NO_THROW(offgrid(4, 4, 16).validate(dims));
  SamplerConfig g;
  g.mode = SamplingMode::grid;
  g.patch_size = 4;
  g.patch_count = 16;
  EXPECT_NO_THROW(g.validate(dims));
  g.patch_count = 15;
  EXPECT_THROW(g.validate(dims), ConfigError);
  EXPECT_THROW((ImageDims{0, 4, 1}).validate(), ConfigError);
  Rng rng(1);
  EXPECT_THROW(sample_offgrid(dims, g, rng), ConfigError);
  EXPECT_EQ(default_patch_count({224, 224, 3}, 16), 196);
}

TEST(Geometry, SelectPairsNeverPairsAPatchWithItself) {
  Rng rng(2);
  const auto sel = select_pairs(5, 20000, rng);
  ASSERT_EQ(sel.count(), 20000u);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  for (const auto& p : sel.pairs) {
    ASSERT_NE(p.first, p.second);
    ASSERT_LT(p.first, 5u);
    ASSERT_LT(p.second, 5u);
    ++counts[p];
  }
  EXPECT_EQ(counts.size(), 20u);
  for (const auto& [pair, c] : counts) EXPECT_NEAR(c, 1000, 150);
  EXPECT_THROW(select_pairs(1, 4, rng), ConfigError);
  EXPECT_THROW(select_pairs(4, 0, rng), ConfigError);
}

TEST(Geometry, Windows1d) {
  SamplerConfig c = offgrid(9, 3, 10);
  c.seed = 12;
  const auto w = sample_windows_1d(40, c);
  ASSERT_EQ(w.size(), 9u);
  for (const PatchBox& b : w) {
    EXPECT_EQ(b.height, 1);
    EXPECT_EQ(b.y_s, 0);
    EXPECT_TRUE(b.inside({1, 40, 1}));
  }
  EXPECT_EQ(w, sample_windows_1d(40, c));
  const TargetMatrix m = target_matrix(w, TargetMode::time);
  EXPECT_EQ(m.arity, 1u);
  EXPECT_DOUBLE_EQ(m.at(0, 1, 0), (w[1].center_x() - w[0].center_x()) / w[0].width);
  EXPECT_THROW(sample_windows_1d(8, c), ConfigError);
}

TEST(Geometry, ModeStringsRoundTrip) {
  for (auto m : {TargetMode::base, TargetMode::extended, TargetMode::time})
    EXPECT_EQ(target_mode_from_string(to_string(m)), m);
  EXPECT_THROW(target_mode_from_string("polar"), ConfigError);
  EXPECT_EQ(sampling_mode_from_string("grid"), SamplingMode::grid);
  EXPECT_THROW(sampling_mode_from_string("jitter"), ConfigError);
  EXPECT_EQ(box_aspect_from_string(to_string(BoxAspect::free)), BoxAspect::free);
  EXPECT_THROW(box_aspect_from_string("round"), ConfigError);
  EXPECT_THROW(target_matrix(std::vector<PatchBox>{{0, 0, 1, 1}}, TargetMode::base), ConfigError);
}

TEST(Geometry, CsvRoundTripAndMalformedInput) {
  Rng rng(6);
  const auto boxes = sample_offgrid({20, 20, 1}, offgrid(4, 2, 6, BoxAspect::free), rng);
  std::stringstream ss;
  write_boxes_csv(ss, boxes);
  EXPECT_EQ(read_boxes_csv(ss), boxes);
  std::stringstream bad_header("x,y\n1,2\n");
  EXPECT_THROW(read_boxes_csv(bad_header), FormatError);
  std::stringstream bad_row("x_s,y_s,width,height\n1;2;3;4\n");
  EXPECT_THROW(read_boxes_csv(bad_row), FormatError);
  std::stringstream targets;
  write_targets_csv(targets, target_matrix(boxes, TargetMode::extended));
  std::string header;
  std::getline(targets, header);
  EXPECT_EQ(header, "ref,tgt,dx,dy,dw,dh");
}
