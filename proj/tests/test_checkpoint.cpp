#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include "part/checkpoint.hpp"
#include "part/error.hpp"

using namespace part;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config = {{"model", {{"depth", 2}}}, {"note", "x"}};
  c.step = 17;
  c.optimizer_steps = 16;
  c.rng_key = 0xFFFFFFFFFFFFFFFFULL;
  c.rng_counter = 3;
  c.tensors.push_back({"param:a", Tensor(2, 3, std::vector<double>{1, -2, 3.5, 1e-300, -0.0,
                                                                    std::numeric_limits<double>::max()})});
  c.tensors.push_back({"adam_m:a", Tensor(1, 1, 0.25)});
  c.tensors.push_back({"empty", Tensor(0, 4)});
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_TRUE(std::signbit(back.find("param:a")->data()[4]));
  EXPECT_EQ(back.find("missing"), nullptr);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, LayoutHasMagicVersionAndHeaderLength) {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  ASSERT_GT(bytes.size(), 20u);
  EXPECT_EQ(std::memcmp(bytes.data(), "PARTCKPT", 8), 0);
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&header_len, bytes.data() + 12, 8);
  EXPECT_EQ(version, 1u);
  const auto header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<long>(header_len));
  EXPECT_EQ(header.at("step"), 17);
  EXPECT_EQ(header.at("tensors").size(), 3u);
  EXPECT_EQ(bytes.size(), 20 + header_len + (6 + 1) * sizeof(double));
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto good = serialize_checkpoint(sample_checkpoint());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[8] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), FormatError);
  for (std::size_t cut : {std::size_t{4}, std::size_t{15}, std::size_t{40}, good.size() - 1}) {
    std::vector<std::uint8_t> truncated(good.begin(), good.begin() + static_cast<long>(cut));
    EXPECT_THROW(deserialize_checkpoint(truncated), FormatError) << cut;
  }
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_checkpoint(trailing), FormatError);
  auto bad_json = good;
  bad_json[20] = '#';
  EXPECT_THROW(deserialize_checkpoint(bad_json), FormatError);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "part_test_ckpt.part";
  save_checkpoint(path, sample_checkpoint());
  EXPECT_EQ(load_checkpoint(path), sample_checkpoint());
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
