#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "rebroadcast/imgproc.hpp"

namespace rebroadcast::io {

// Decodes gray or RGB(A) PNG files. Colour input goes through
// imgproc::to_grayscale; gray input maps v -> v/255 directly. Throws IoError
// naming the path on any failure.
imgproc::GrayImage read_png(const std::filesystem::path& path);

// Same decoding from an in-memory file; `name` labels error messages.
imgproc::GrayImage decode_png(std::string_view bytes, const std::string& name);

// Whole file as bytes; IoError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

// 8-bit grayscale, each pixel round(255 * v). Byte-identical output for
// identical images.
void write_png(const std::filesystem::path& path, const imgproc::GrayImage& image);

}  // namespace rebroadcast::io
