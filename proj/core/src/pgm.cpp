#include "toposeg/pgm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "toposeg/error.hpp"

namespace toposeg {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw FormatError(std::string("pgm: malformed header, expected ") + what);
    }
    std::uint64_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 0xFFFFFFFFULL) throw LimitError(std::string("pgm: ") + what + " overflows");
      ++pos_;
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  std::uint8_t peek() const { return bytes_[pos_]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes, const ReadLimits& limits) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("pgm: missing P5 magic");
  }
  HeaderReader reader(bytes.subspan(2));
  if (reader.at_end() || !std::isspace(reader.peek())) throw FormatError("pgm: malformed header after magic");
  const std::uint64_t width = reader.number("width");
  const std::uint64_t height = reader.number("height");
  const std::uint64_t maxval = reader.number("maxval");
  if (width == 0 || height == 0) throw FormatError("pgm: zero extent");
  if (width > limits.max_extent || height > limits.max_extent) {
    throw LimitError("pgm: declared extent " + std::to_string(width) + "x" + std::to_string(height) +
                     " exceeds cap " + std::to_string(limits.max_extent));
  }
  if (maxval == 0 || maxval > 65535) throw FormatError("pgm: maxval outside [1, 65535]");
  if (reader.at_end() || !std::isspace(reader.peek())) throw FormatError("pgm: malformed header end");
  reader.advance();

  const std::size_t sample_bytes = maxval < 256 ? 1 : 2;
  const std::size_t count = static_cast<std::size_t>(width * height);
  const std::size_t offset = 2 + reader.pos();
  if (bytes.size() - offset < count * sample_bytes) {
    throw FormatError("pgm: truncated raster (" + std::to_string(bytes.size() - offset) + " of " +
                      std::to_string(count * sample_bytes) + " bytes)");
  }

  GrayImage image;
  image.width = width;
  image.height = height;
  image.maxval = static_cast<std::uint16_t>(maxval);
  image.samples.resize(count);
  const std::uint8_t* raster = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint16_t v = sample_bytes == 1
                                ? raster[i]
                                : static_cast<std::uint16_t>((raster[2 * i] << 8) | raster[2 * i + 1]);
    if (v > maxval) throw FormatError("pgm: sample exceeds maxval");
    image.samples[i] = v;
  }
  return image;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.width == 0 || image.height == 0) throw ValueError("pgm: zero extent");
  if (image.samples.size() != image.width * image.height) throw ShapeError("pgm: sample count mismatch");
  if (image.maxval == 0) throw ValueError("pgm: maxval must be positive");
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n" + std::to_string(image.maxval) + "\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const bool wide = image.maxval >= 256;
  bytes.reserve(bytes.size() + image.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t v : image.samples) {
    if (v > image.maxval) throw ValueError("pgm: sample exceeds maxval");
    if (wide) bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return bytes;
}

GrayImage read_pgm(const std::filesystem::path& path, const ReadLimits& limits) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  try {
    return decode_pgm(bytes, limits);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const LimitError& e) {
    throw LimitError(path.string() + ": " + e.what());
  }
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  write_file(encode_pgm(image), path);
}

BinaryMask read_mask(const std::filesystem::path& path, const ReadLimits& limits) {
  const GrayImage image = read_pgm(path, limits);
  std::vector<std::uint8_t> values(image.samples.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = 2u * image.samples[i] > image.maxval ? 1 : 0;
  }
  return BinaryMask(image.height, image.width, std::move(values));
}

void write_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  GrayImage image;
  image.width = mask.width();
  image.height = mask.height();
  image.maxval = 255;
  image.samples.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) image.samples[i] = mask[i] ? 255 : 0;
  write_pgm(image, path);
}

Tensor read_prob(const std::filesystem::path& path, const ReadLimits& limits) {
  const GrayImage image = read_pgm(path, limits);
  std::vector<double> values(image.samples.size());
  const double scale = static_cast<double>(image.maxval);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = image.samples[i] / scale;
  return Tensor({1, image.height, image.width}, std::move(values));
}

void write_prob(const Tensor& prob, const std::filesystem::path& path) {
  const auto [h, w] = plane_extent(prob, "write_prob");
  GrayImage image;
  image.width = w;
  image.height = h;
  image.maxval = 65535;
  image.samples.resize(h * w);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    const double p = prob[i];
    if (p < 0.0 || p > 1.0) throw ValueError("write_prob: probabilities must lie in [0, 1]");
    image.samples[i] = static_cast<std::uint16_t>(std::lround(p * 65535.0));
  }
  write_pgm(image, path);
}

}  // namespace toposeg
