#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "burstdepth/error.hpp"
#include "burstdepth/io.hpp"

using namespace burstdepth;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("burstdepth_io_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
  }
  void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

  fs::path dir_;
};

float le_float(const std::string& s, std::size_t at) {
  float f;
  std::memcpy(&f, s.data() + at, 4);
  return f;
}

}  // namespace

TEST_F(IoTest, PfmHeaderAndRowOrder) {
  io::PfmImage img{2, 2, 1, {1.f, 2.f, 3.f, 4.f}};
  io::write_pfm(dir_ / "a.pfm", img);
  const std::string b = bytes(dir_ / "a.pfm");
  const std::string header = "Pf\n2 2\n-1.0\n";
  ASSERT_EQ(b.substr(0, header.size()), header);
  ASSERT_EQ(b.size(), header.size() + 16);
  // Bottom row first.
  EXPECT_EQ(le_float(b, header.size()), 3.f);
  EXPECT_EQ(le_float(b, header.size() + 12), 2.f);
  const io::PfmImage back = io::read_pfm(dir_ / "a.pfm");
  EXPECT_EQ(back.data, img.data);
}

TEST_F(IoTest, PfmBigEndianAndColor) {
  std::string s = "PF\n1 1\n1.0\n";
  for (float v : {0.25f, 0.5f, 0.75f}) {
    char raw[4];
    std::memcpy(raw, &v, 4);
    std::swap(raw[0], raw[3]);
    std::swap(raw[1], raw[2]);
    s.append(raw, 4);
  }
  std::ofstream(dir_ / "be.pfm", std::ios::binary) << s;
  const io::PfmImage img = io::read_pfm(dir_ / "be.pfm");
  EXPECT_EQ(img.channels, 3);
  EXPECT_EQ(img.data, (std::vector<float>{0.25f, 0.5f, 0.75f}));
}

TEST_F(IoTest, PfmRejectsGarbage) {
  write_text(dir_ / "bad.pfm", "P6\n1 1\n255\n");
  EXPECT_THROW(io::read_pfm(dir_ / "bad.pfm"), Error);
  write_text(dir_ / "short.pfm", "Pf\n4 4\n-1.0\nab");
  EXPECT_THROW(io::read_pfm(dir_ / "short.pfm"), Error);
}

TEST_F(IoTest, DepthPfmMarksInvalidAsInfinity) {
  const std::vector<double> depth{2.0, std::numeric_limits<double>::infinity(), 4.0, 0.0};
  const io::PfmImage pfm = io::depth_to_pfm(depth, 2, 2);
  EXPECT_TRUE(std::isinf(pfm.data[1]));
  const InverseDepthMap w = io::inverse_depth_from_pfm(pfm);
  EXPECT_DOUBLE_EQ(w.data[0], 0.5);
  EXPECT_FALSE(w.valid[1]);
  EXPECT_FALSE(w.valid[3]);
}

TEST_F(IoTest, FloRoundTripWithMaskedPixels) {
  FlowField f(3, 2);
  for (std::size_t i = 0; i < 6; ++i) f.set(i, 0.5 * i, -0.25 * i);
  f.invalidate(4);
  io::write_flo(dir_ / "f.flo", f);
  const std::string b = bytes(dir_ / "f.flo");
  ASSERT_EQ(b.size(), 12u + 6 * 8);
  EXPECT_EQ(b.substr(0, 4), "PIEH");
  std::int32_t w, h;
  std::memcpy(&w, b.data() + 4, 4);
  std::memcpy(&h, b.data() + 8, 4);
  EXPECT_EQ(w, 3);
  EXPECT_EQ(h, 2);
  EXPECT_EQ(le_float(b, 12 + 8 * 4), io::kFloUnknown);
  const FlowField back = io::read_flo(dir_ / "f.flo");
  EXPECT_EQ(back.valid, f.valid);
  for (std::size_t i = 0; i < 6; ++i) {
    if (!f.valid[i]) continue;
    EXPECT_FLOAT_EQ(back.du(i), f.du(i));
    EXPECT_FLOAT_EQ(back.dv(i), f.dv(i));
  }
}

TEST_F(IoTest, CalibrationParsing) {
  write_text(dir_ / "c.txt", "# phone camera\nfx = 500\nfy=510.5\n  cx = 319.5 \ncy = 239.5\nwidth = 640\n\nheight = 480\n");
  const io::CalibrationFile c = io::read_calibration(dir_ / "c.txt");
  EXPECT_EQ(c.K.fx, 500.0);
  EXPECT_EQ(c.K.fy, 510.5);
  EXPECT_EQ(c.K.cx, 319.5);
  EXPECT_EQ(c.width, 640);
  EXPECT_EQ(c.height, 480);
  EXPECT_NE(c.comment.find("phone camera"), std::string::npos);
  io::write_calibration(dir_ / "d.txt", c);
  const io::CalibrationFile d = io::read_calibration(dir_ / "d.txt");
  EXPECT_EQ(d.K.fy, c.K.fy);
  EXPECT_EQ(d.height, 480);
}

TEST_F(IoTest, CalibrationErrors) {
  auto code_of = [&](const std::string& text) {
    write_text(dir_ / "c.txt", text);
    try {
      io::read_calibration(dir_ / "c.txt");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kNoSeeds;  // sentinel: nothing thrown
  };
  EXPECT_EQ(code_of("fx = 1\nfy = 1\ncx = 0\n"), ErrorCode::kIo);
  EXPECT_EQ(code_of("fx = abc\nfy = 1\ncx = 0\ncy = 0\n"), ErrorCode::kIo);
  EXPECT_EQ(code_of("fx = 1\nfy = 1\ncx = 0\ncy = 0\nskew = 0\n"), ErrorCode::kIo);
  EXPECT_EQ(code_of("fx = -1\nfy = 1\ncx = 0\ncy = 0\n"), ErrorCode::kConfiguration);
  EXPECT_THROW(io::read_calibration(dir_ / "missing.txt"), Error);
}

TEST_F(IoTest, PosesRoundTripExactly) {
  std::vector<SmallPose> poses(3);
  poses[1].r = {1e-3, -2e-3, 3.3e-4};
  poses[1].t = {0.0123456789012345, 0.1, -0.2};
  poses[2].t = {1.0 / 3.0, 0, 0};
  io::write_poses(dir_ / "p.txt", poses);
  const auto back = io::read_poses(dir_ / "p.txt");
  ASSERT_EQ(back.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].r, poses[i].r);
    EXPECT_EQ(back[i].t, poses[i].t);
  }
  write_text(dir_ / "q.txt", "0 0 0 0 0 0 0\n2 0 0 0 0 0 0\n");
  EXPECT_THROW(io::read_poses(dir_ / "q.txt"), Error);
}

TEST_F(IoTest, ImageRoundTrip) {
  Image img(5, 4, 3);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = (i % 256) / 255.0f;
  io::write_image(dir_ / "sub" / "a.png", img);
  const Image back = io::read_image(dir_ / "sub" / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 1e-6);
  io::write_image(dir_ / "b.png", img, true);
  const Image back16 = io::read_image(dir_ / "b.png");
  for (std::size_t i = 0; i < img.data().size(); ++i) EXPECT_NEAR(back16.data()[i], img.data()[i], 1.0 / 65535);
  EXPECT_THROW(io::read_image(dir_ / "nope.png"), Error);
}

TEST_F(IoTest, FramesListedByName) {
  const Image img(3, 3, 1, 0.5f);
  for (const char* n : {"frame_10.png", "frame_02.png", "frame_01.jpg"}) io::write_image(dir_ / n, img);
  write_text(dir_ / "notes.txt", "x");
  const auto files = io::list_frames(dir_);
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[0].filename(), "frame_01.jpg");
  EXPECT_EQ(files[2].filename(), "frame_10.png");
  EXPECT_EQ(io::read_frames(dir_).size(), 3u);
}

TEST_F(IoTest, ColorizeMasksBlack) {
  InverseDepthMap w(3, 1, 0.5);
  w.data[2] = 0.25;
  w.invalidate(1);
  const Image c = io::colorize_inverse_depth(w);
  EXPECT_EQ(c.channels(), 3);
  EXPECT_EQ(c.at(1, 0, 0) + c.at(1, 0, 1) + c.at(1, 0, 2), 0.0f);
  EXPECT_GT(c.at(0, 0, 0) + c.at(0, 0, 1) + c.at(0, 0, 2), 0.0f);
}
