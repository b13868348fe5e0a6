#include <gtest/gtest.h>

#include "mlcvqa/y4m.hpp"
#include "test_util.hpp"

namespace mlcvqa {
namespace {

using testing::TempDir;

// Two 4x4 4:2:0 frames: 16 luma + 4 + 4 chroma bytes each.
std::string two_frame_file() {
  std::string bytes = "YUV4MPEG2 W4 H4 F30:1 Ip A1:1 C420jpeg\n";
  for (int f = 0; f < 2; ++f) {
    bytes += "FRAME\n";
    for (int i = 0; i < 24; ++i) bytes.push_back(static_cast<char>(f * 100 + i));
  }
  return bytes;
}

TEST(Y4m, ParsesHandBuiltFile) {
  TempDir dir("y4m");
  testing::write_bytes(dir / "a.y4m", two_frame_file());
  const VideoClip clip = load_y4m(dir / "a.y4m");
  EXPECT_EQ(clip.width, 4);
  EXPECT_EQ(clip.height, 4);
  EXPECT_EQ(clip.frame_rate, (Rational{30, 1}));
  EXPECT_EQ(clip.pixel_format, PixelFormat::yuv420p8);
  ASSERT_EQ(clip.frames.size(), 2u);
  EXPECT_EQ(clip.frames[0].y(0, 0), 0);
  EXPECT_EQ(clip.frames[0].y(3, 3), 15);
  EXPECT_EQ(clip.frames[0].u.rows(), 2);
  EXPECT_EQ(clip.frames[0].u(0, 0), 16);
  EXPECT_EQ(clip.frames[0].v(1, 1), 23);
  EXPECT_EQ(clip.frames[1].y(0, 1), 101);
}

TEST(Y4m, CanonicalFileRoundTripsByteForByte) {
  TempDir dir("y4m");
  const std::string original = two_frame_file();
  testing::write_bytes(dir / "a.y4m", original);
  write_y4m(load_y4m(dir / "a.y4m"), dir / "b.y4m");
  EXPECT_EQ(testing::read_bytes(dir / "b.y4m"), original);
}

TEST(Y4m, HeaderOnlyFileHasNoFrames) {
  TempDir dir("y4m");
  testing::write_bytes(dir / "a.y4m", "YUV4MPEG2 W4 H4 F30:1 Ip A1:1 C420jpeg\n");
  try {
    load_y4m(dir / "a.y4m");
    FAIL() << "expected an error";
  } catch (const Y4mError& e) {
    EXPECT_NE(std::string(e.what()).find("no frames"), std::string::npos);
  }
}

TEST(Y4m, TruncatedPayloadReportsOffset) {
  TempDir dir("y4m");
  std::string bytes = two_frame_file();
  bytes.pop_back();
  testing::write_bytes(dir / "a.y4m", bytes);
  try {
    load_y4m(dir / "a.y4m");
    FAIL() << "expected an error";
  } catch (const Y4mError& e) {
    // Second frame payload starts after header (39) + FRAME\n (6) + 24 + FRAME\n (6).
    EXPECT_EQ(e.offset(), 39u + 6u + 24u + 6u);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Y4m, RejectsUnsupportedChroma) {
  TempDir dir("y4m");
  testing::write_bytes(dir / "a.y4m", "YUV4MPEG2 W4 H4 F30:1 C444\nFRAME\n" + std::string(48, '\0'));
  EXPECT_THROW(load_y4m(dir / "a.y4m"), Y4mError);
}

TEST(Y4m, RejectsMalformedHeaders) {
  TempDir dir("y4m");
  for (const std::string header : {"YUV4MPEG W4 H4\n", "YUV4MPEG2 W4\n", "YUV4MPEG2 Wx H4\n",
                                   "YUV4MPEG2 W4 H4 F30\n", "YUV4MPEG2 W4 H4 Q1\n"}) {
    testing::write_bytes(dir / "a.y4m", header + "FRAME\n" + std::string(24, '\0'));
    EXPECT_THROW(load_y4m(dir / "a.y4m"), Y4mError) << header;
  }
}

TEST(Y4m, RejectsGarbageBetweenFrames) {
  TempDir dir("y4m");
  std::string bytes = two_frame_file();
  bytes.insert(39 + 6 + 24, "JUNK\n");
  testing::write_bytes(dir / "a.y4m", bytes);
  EXPECT_THROW(load_y4m(dir / "a.y4m"), Y4mError);
}

TEST(Y4m, SingleFrameClipHasOneMarker) {
  TempDir dir("y4m");
  const VideoClip clip = testing::random_clip(6, 4, 1, 3);
  write_y4m(clip, dir / "a.y4m");
  const std::string bytes = testing::read_bytes(dir / "a.y4m");
  std::size_t markers = 0;
  for (auto pos = bytes.find("FRAME"); pos != std::string::npos; pos = bytes.find("FRAME", pos + 1)) ++markers;
  EXPECT_EQ(markers, 1u);
}

TEST(Y4m, TenBitHeaderAndRoundTrip) {
  TempDir dir("y4m");
  const VideoClip clip = testing::random_clip(8, 6, 3, 5, PixelFormat::yuv420p10);
  write_y4m(clip, dir / "a.y4m");
  const std::string bytes = testing::read_bytes(dir / "a.y4m");
  EXPECT_NE(bytes.substr(0, bytes.find('\n')).find("C420p10"), std::string::npos);
  // 8x6 luma + 2 * 4x3 chroma, 2 bytes per sample.
  EXPECT_EQ(bytes.size(), bytes.find('\n') + 1 + 3 * (6 + (8 * 6 + 2 * 4 * 3) * 2));
  EXPECT_EQ(load_y4m(dir / "a.y4m"), clip);
}

TEST(Y4m, OddDimensionsRoundTrip) {
  TempDir dir("y4m");
  const VideoClip clip = testing::random_clip(5, 3, 2, 9);
  EXPECT_EQ(clip.frames[0].u.cols(), 3);
  write_y4m(clip, dir / "a.y4m");
  EXPECT_EQ(load_y4m(dir / "a.y4m"), clip);
}

TEST(Y4m, LoadWriteIsIdentityOnRandomClips) {
  TempDir dir("y4m");
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 17);
    const int h = 1 + static_cast<int>(rng() % 13);
    const int frames = 1 + static_cast<int>(rng() % 4);
    const auto format = rng() % 2 ? PixelFormat::yuv420p10 : PixelFormat::yuv420p8;
    VideoClip clip = testing::random_clip(w, h, frames, static_cast<std::uint32_t>(rng()), format);
    clip.frame_rate = {static_cast<std::uint32_t>(1 + rng() % 60000), static_cast<std::uint32_t>(1 + rng() % 1001)};
    write_y4m(clip, dir / "c.y4m");
    ASSERT_EQ(load_y4m(dir / "c.y4m"), clip) << "trial " << trial;
  }
}

TEST(Y4m, StreamingReaderYieldsFramesInOrder) {
  TempDir dir("y4m");
  testing::write_bytes(dir / "a.y4m", two_frame_file());
  Y4mReader reader(dir / "a.y4m");
  EXPECT_EQ(reader.header().width, 4);
  auto first = reader.next();
  auto second = reader.next();
  ASSERT_TRUE(first && second);
  EXPECT_EQ(second->y(0, 0), 100);
  EXPECT_FALSE(reader.next());
  EXPECT_EQ(reader.frames_read(), 2u);
}

TEST(Y4m, WriteRejectsInvalidClip) {
  TempDir dir("y4m");
  VideoClip clip = testing::random_clip(4, 4, 1, 1);
  clip.frames[0].y(0, 0) = 300;
  EXPECT_THROW(write_y4m(clip, dir / "a.y4m"), InvalidArgument);
  VideoClip empty;
  empty.width = empty.height = 4;
  EXPECT_THROW(write_y4m(empty, dir / "a.y4m"), InvalidArgument);
}

}  // namespace
}  // namespace mlcvqa
