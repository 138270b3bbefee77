#include "rebroadcast/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "rebroadcast/errors.hpp"

namespace rebroadcast::io {

namespace {

struct ImageGuard {
    png_image image{};
    ImageGuard() {
        std::memset(&image, 0, sizeof image);
        image.version = PNG_IMAGE_VERSION;
    }
    ~ImageGuard() { png_image_free(&image); }
};

std::string describe(const std::filesystem::path& path, const png_image& image) {
    return path.string() + ": " + image.message;
}

}  // namespace

namespace {

imgproc::GrayImage finish_read(png_image& img, const std::string& path) {

    const bool colour = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
    img.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int width = static_cast<int>(img.width);
    const int height = static_cast<int>(img.height);
    if (width < 1 || height < 1) throw IoError("PNG has zero size: " + path);

    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr) == 0) {
        throw IoError("cannot decode PNG " + describe(path, img));
    }

    if (colour) return imgproc::to_grayscale(buffer, width, height);
    std::vector<double> pixels(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) pixels[i] = buffer[i] / 255.0;
    return imgproc::GrayImage(width, height, std::move(pixels));
}

}  // namespace

imgproc::GrayImage read_png(const std::filesystem::path& path) {
    ImageGuard guard;
    png_image& img = guard.image;
    if (png_image_begin_read_from_file(&img, path.c_str()) == 0) throw IoError("cannot read PNG " + describe(path, img));
    return finish_read(img, path.string());
}

imgproc::GrayImage decode_png(std::string_view bytes, const std::string& name) {
    ImageGuard guard;
    png_image& img = guard.image;
    if (png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
        throw IoError("cannot read PNG " + describe(name, img));
    }
    return finish_read(img, name);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading " + path.string());
    return bytes;
}

void write_png(const std::filesystem::path& path, const imgproc::GrayImage& image) {
    std::vector<png_byte> bytes(image.size());
    const auto pixels = image.pixels();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<png_byte>(std::lround(255.0 * pixels[i]));

    ImageGuard guard;
    png_image& img = guard.image;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG " + describe(path, img));
    }
}

}  // namespace rebroadcast::io
