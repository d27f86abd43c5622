#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "mvpr/error.hpp"
#include "mvpr/image.hpp"

namespace mvpr {

std::string encode_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string header_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw ParseError("ppm: truncated header");
  return bytes.substr(start, pos - start);
}

int header_int(const std::string& bytes, std::size_t& pos) {
  const auto tok = header_token(bytes, pos);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw ParseError("ppm: bad header value '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("ppm: bad header value '" + tok + "'");
  }
}

}  // namespace

RgbImage decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P6") throw ParseError("ppm: missing P6 magic");
  RgbImage img;
  img.width = header_int(bytes, pos);
  img.height = header_int(bytes, pos);
  const int maxval = header_int(bytes, pos);
  if (img.width < 1 || img.height < 1 || img.width > 1 << 15 || img.height > 1 << 15) {
    throw ParseError("ppm: bad dimensions");
  }
  if (maxval != 255) throw ParseError("ppm: only 8-bit images are supported");
  ++pos;  // single whitespace after maxval
  const std::size_t n = 3 * static_cast<std::size_t>(img.width) * img.height;
  if (pos > bytes.size() || bytes.size() - pos < n) throw ParseError("ppm: truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = encode_ppm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_ppm(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    auto* row = const_cast<png_bytep>(image.pixels.data() + 3 * static_cast<std::size_t>(y) *
                                                                image.width);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ParseError(path.string() + ": " + msg);
  }
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ParseError(path.string() + ": " + msg);
  }
  return out;
}

RgbImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw RejectedInput("image not found: " + path.string());
  return path.extension() == ".ppm" ? read_ppm(path) : read_png(path);
}

void save_image(const RgbImage& image, const std::filesystem::path& path) {
  if (path.extension() == ".ppm") {
    write_ppm(image, path);
  } else {
    write_png(image, path);
  }
}

}  // namespace mvpr
