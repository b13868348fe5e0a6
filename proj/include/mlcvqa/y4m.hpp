#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlcvqa/common.hpp"

namespace mlcvqa {

enum class PixelFormat { yuv420p8, yuv420p10 };

int bit_depth(PixelFormat format);

struct Rational {
  std::uint32_t num = 30;
  std::uint32_t den = 1;

  double value() const { return static_cast<double>(num) / den; }
  bool operator==(const Rational&) const = default;
};

/// One image plane, rows x cols = height x width.
using Plane = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Frame {
  Plane y;
  Plane u;
  Plane v;

  bool operator==(const Frame& other) const {
    return y.rows() == other.y.rows() && y.cols() == other.y.cols() &&
           u.rows() == other.u.rows() && u.cols() == other.u.cols() &&
           v.rows() == other.v.rows() && v.cols() == other.v.cols() &&
           (y == other.y).all() && (u == other.u).all() && (v == other.v).all();
  }

  /// Uniform frame of the given luma/chroma values; chroma planes are
  /// ceil(w/2) x ceil(h/2).
  static Frame filled(int width, int height, std::uint16_t luma, std::uint16_t chroma);
};

struct VideoClip {
  int width = 0;
  int height = 0;
  Rational frame_rate;
  PixelFormat pixel_format = PixelFormat::yuv420p8;
  std::vector<Frame> frames;

  bool operator==(const VideoClip&) const = default;

  /// Throws InvalidArgument when the frames disagree with the declared
  /// geometry, format, or sample range.
  void validate() const;
};

/// Thrown for malformed Y4M input. `offset()` is the byte position in the
/// file where parsing stopped.
class Y4mError : public ParseError {
 public:
  Y4mError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

struct Y4mHeader {
  int width = 0;
  int height = 0;
  Rational frame_rate;
  PixelFormat pixel_format = PixelFormat::yuv420p8;
};

/// Frame-at-a-time YUV4MPEG2 decoder. Only 4:2:0 at 8 or 10 bits is
/// accepted; anything else is rejected when the header is read.
class Y4mReader {
 public:
  explicit Y4mReader(const std::filesystem::path& path);

  const Y4mHeader& header() const { return header_; }

  /// Next decoded frame, or nullopt at a clean end of file.
  std::optional<Frame> next();

  std::uint64_t frames_read() const { return frames_read_; }

 private:
  void read_stream_header();
  std::uint64_t offset();

  std::ifstream in_;
  std::string path_;
  Y4mHeader header_;
  std::uint64_t frames_read_ = 0;
};

VideoClip load_y4m(const std::filesystem::path& path);

/// Emits a canonical header:
/// `YUV4MPEG2 W<w> H<h> F<n>:<d> Ip A1:1 C420jpeg` (or `C420p10 XYSCSS=420P10`).
void write_y4m(const VideoClip& clip, const std::filesystem::path& path);

}  // namespace mlcvqa
