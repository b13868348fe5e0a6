#include "mlcvqa/y4m.hpp"

#include <charconv>
#include <sstream>
#include <string_view>

namespace mlcvqa {
namespace {

constexpr std::string_view kStreamMagic = "YUV4MPEG2";
constexpr std::string_view kFrameMagic = "FRAME";
constexpr std::size_t kMaxHeaderLength = 4096;

int chroma_width(int width) { return (width + 1) / 2; }
int chroma_height(int height) { return (height + 1) / 2; }

std::uint32_t parse_u32(std::string_view text, const std::string& what, std::uint64_t offset) {
  std::uint32_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Y4mError("invalid " + what + " '" + std::string(text) + "'", offset);
  }
  return value;
}

Rational parse_ratio(std::string_view text, const std::string& what, std::uint64_t offset) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw Y4mError("invalid " + what + " '" + std::string(text) + "'", offset);
  }
  return {parse_u32(text.substr(0, colon), what, offset),
          parse_u32(text.substr(colon + 1), what, offset)};
}

void read_plane(std::istream& in, Plane& plane, int bytes_per_sample) {
  if (bytes_per_sample == 1) {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(plane.size()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) return;
    for (Eigen::Index i = 0; i < plane.size(); ++i) plane.data()[i] = buf[static_cast<std::size_t>(i)];
  } else {
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(plane.size()) * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) return;
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      const auto k = static_cast<std::size_t>(i) * 2;
      plane.data()[i] = static_cast<std::uint16_t>(buf[k] | (buf[k + 1] << 8));
    }
  }
}

void write_plane(std::ostream& out, const Plane& plane, int bytes_per_sample) {
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(plane.size()) * bytes_per_sample);
  for (Eigen::Index i = 0; i < plane.size(); ++i) {
    const auto s = plane.data()[i];
    if (bytes_per_sample == 1) {
      buf[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(s);
    } else {
      buf[static_cast<std::size_t>(i) * 2] = static_cast<std::uint8_t>(s & 0xff);
      buf[static_cast<std::size_t>(i) * 2 + 1] = static_cast<std::uint8_t>(s >> 8);
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

int bit_depth(PixelFormat format) { return format == PixelFormat::yuv420p10 ? 10 : 8; }

Frame Frame::filled(int width, int height, std::uint16_t luma, std::uint16_t chroma) {
  Frame f;
  f.y = Plane::Constant(height, width, luma);
  f.u = Plane::Constant(chroma_height(height), chroma_width(width), chroma);
  f.v = f.u;
  return f;
}

void VideoClip::validate() const {
  if (width <= 0 || height <= 0) throw InvalidArgument("clip dimensions must be positive");
  if (frames.empty()) throw InvalidArgument("clip has no frames");
  if (frame_rate.den == 0) throw InvalidArgument("frame rate denominator is zero");
  const auto max_sample = static_cast<std::uint16_t>((1 << bit_depth(pixel_format)) - 1);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    const auto& f = frames[n];
    if (f.y.rows() != height || f.y.cols() != width || f.u.rows() != chroma_height(height) ||
        f.u.cols() != chroma_width(width) || f.v.rows() != f.u.rows() || f.v.cols() != f.u.cols()) {
      throw InvalidArgument("frame " + std::to_string(n) + " does not match clip geometry");
    }
    if ((f.y > max_sample).any() || (f.u > max_sample).any() || (f.v > max_sample).any()) {
      throw InvalidArgument("frame " + std::to_string(n) + " has samples above bit depth");
    }
  }
}

Y4mError::Y4mError(const std::string& what, std::uint64_t offset)
    : ParseError("y4m: " + what + " at byte " + std::to_string(offset)), offset_(offset) {}

Y4mReader::Y4mReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary), path_(path.string()) {
  if (!in_) throw ParseError("cannot open " + path_);
  read_stream_header();
}

std::uint64_t Y4mReader::offset() {
  const auto pos = in_.tellg();
  return pos < 0 ? 0 : static_cast<std::uint64_t>(pos);
}

void Y4mReader::read_stream_header() {
  std::string line;
  char c = 0;
  while (in_.get(c) && c != '\n') {
    line.push_back(c);
    if (line.size() > kMaxHeaderLength) throw Y4mError("header line too long", 0);
  }
  if (c != '\n') throw Y4mError("unterminated stream header", line.size());
  std::istringstream tokens(line);
  std::string token;
  tokens >> token;
  if (token != kStreamMagic) throw Y4mError("missing YUV4MPEG2 signature", 0);

  bool have_w = false, have_h = false;
  std::string colorspace = "420jpeg";
  std::size_t pos = kStreamMagic.size();
  while (tokens >> token) {
    pos = line.find(token, pos);
    const std::string_view value = std::string_view(token).substr(1);
    switch (token[0]) {
      case 'W':
        header_.width = static_cast<int>(parse_u32(value, "width", pos));
        have_w = true;
        break;
      case 'H':
        header_.height = static_cast<int>(parse_u32(value, "height", pos));
        have_h = true;
        break;
      case 'F':
        header_.frame_rate = parse_ratio(value, "frame rate", pos);
        if (header_.frame_rate.den == 0 || header_.frame_rate.num == 0) {
          throw Y4mError("invalid frame rate '" + token + "'", pos);
        }
        break;
      case 'I':
        if (value != "p" && value != "?") {
          throw Y4mError("unsupported interlacing '" + token + "'", pos);
        }
        break;
      case 'A':
        parse_ratio(value, "aspect ratio", pos);
        break;
      case 'C':
        colorspace = std::string(value);
        break;
      case 'X':
        break;
      default:
        throw Y4mError("unknown header token '" + token + "'", pos);
    }
    pos += token.size();
  }
  if (!have_w || !have_h) throw Y4mError("header lacks W or H", 0);
  if (header_.width == 0 || header_.height == 0) throw Y4mError("zero frame dimension", 0);
  if (colorspace == "420jpeg" || colorspace == "420paldv" || colorspace == "420mpeg2" ||
      colorspace == "420") {
    header_.pixel_format = PixelFormat::yuv420p8;
  } else if (colorspace == "420p10") {
    header_.pixel_format = PixelFormat::yuv420p10;
  } else {
    throw Y4mError("unsupported chroma format 'C" + colorspace + "' (only 4:2:0 8/10-bit)", 0);
  }
}

std::optional<Frame> Y4mReader::next() {
  const auto start = offset();
  std::string marker;
  char c = 0;
  while (in_.get(c) && c != '\n') {
    marker.push_back(c);
    if (marker.size() > kMaxHeaderLength) throw Y4mError("frame header too long", start);
  }
  if (marker.empty() && in_.eof()) return std::nullopt;
  if (c != '\n') throw Y4mError("truncated frame header", start);
  if (!std::string_view(marker).starts_with(kFrameMagic) ||
      (marker.size() > kFrameMagic.size() && marker[kFrameMagic.size()] != ' ')) {
    throw Y4mError("expected FRAME marker", start);
  }
  const int bps = header_.pixel_format == PixelFormat::yuv420p10 ? 2 : 1;
  const int max_sample = (1 << bit_depth(header_.pixel_format)) - 1;
  Frame frame = Frame::filled(header_.width, header_.height, 0, 0);
  const auto payload = offset();
  for (Plane* plane : {&frame.y, &frame.u, &frame.v}) {
    read_plane(in_, *plane, bps);
    if (!in_) {
      throw Y4mError("truncated payload in frame " + std::to_string(frames_read_) + " (started at byte " +
                         std::to_string(payload) + ")",
                     payload);
    }
    if (bps == 2 && (plane->cast<int>() > max_sample).any()) {
      throw Y4mError("10-bit sample out of range in frame " + std::to_string(frames_read_), payload);
    }
  }
  ++frames_read_;
  return frame;
}

VideoClip load_y4m(const std::filesystem::path& path) {
  Y4mReader reader(path);
  VideoClip clip;
  clip.width = reader.header().width;
  clip.height = reader.header().height;
  clip.frame_rate = reader.header().frame_rate;
  clip.pixel_format = reader.header().pixel_format;
  while (auto frame = reader.next()) clip.frames.push_back(std::move(*frame));
  if (clip.frames.empty()) throw Y4mError("no frames", 0);
  return clip;
}

void write_y4m(const VideoClip& clip, const std::filesystem::path& path) {
  clip.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kStreamMagic << " W" << clip.width << " H" << clip.height << " F" << clip.frame_rate.num
      << ':' << clip.frame_rate.den << " Ip A1:1";
  if (clip.pixel_format == PixelFormat::yuv420p10) {
    out << " C420p10 XYSCSS=420P10\n";
  } else {
    out << " C420jpeg\n";
  }
  const int bps = clip.pixel_format == PixelFormat::yuv420p10 ? 2 : 1;
  for (const auto& frame : clip.frames) {
    out << kFrameMagic << '\n';
    write_plane(out, frame.y, bps);
    write_plane(out, frame.u, bps);
    write_plane(out, frame.v, bps);
  }
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace mlcvqa
