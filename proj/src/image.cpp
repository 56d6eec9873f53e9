#include "panoseg/image.hpp"

#include <cstdio>
#include <fstream>

#include "panoseg/error.hpp"

namespace panoseg {

namespace {

void expect(bool ok, const char* what, const std::string& path) {
  if (!ok) throw Error("malformed image", std::string(what) + " (" + path + ")");
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

}  // namespace

void write_ppm(const std::string& path, const ImageRGB& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("unwritable path", path);
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size() * 3));
  if (!out) throw Error("unwritable path", path);
}

void write_pgm(const std::string& path, const ImageGray& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("unwritable path", path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error("unwritable path", path);
}

ImageRGB read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("unreadable path", path);
  expect(next_token(in) == "P6", "expected P6 magic", path);
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  expect(std::stoi(next_token(in)) == 255, "expected maxval 255", path);
  in.get();  // single whitespace after maxval
  ImageRGB img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * 3));
  expect(static_cast<size_t>(in.gcount()) == img.pixels.size() * 3, "truncated pixel data", path);
  return img;
}

ImageGray read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("unreadable path", path);
  expect(next_token(in) == "P5", "expected P5 magic", path);
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  expect(std::stoi(next_token(in)) == 255, "expected maxval 255", path);
  in.get();
  ImageGray img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  expect(static_cast<size_t>(in.gcount()) == img.pixels.size(), "truncated pixel data", path);
  return img;
}

}  // namespace panoseg
