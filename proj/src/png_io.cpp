#include "sparseview/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sparseview/error.hpp"

namespace sparseview {

Image read_png(const std::string &path) {
    require(std::filesystem::exists(path), ErrorCode::MissingFile, "missing image file: " + path);
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    require(png_image_begin_read_from_file(&png, path.c_str()) != 0, ErrorCode::InvalidArgument,
            "cannot decode PNG " + path + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) == 0) {
        const std::string message = png.message;
        png_image_free(&png);
        throw Error(ErrorCode::InvalidArgument, "cannot decode PNG " + path + ": " + message);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height), 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = buffer[i] / 255.0;
    return img;
}

void write_png(const std::string &path, const Image &image) {
    require(image.channels == 1 || image.channels == 3, ErrorCode::ShapeMismatch,
            "PNG output needs 1 or 3 channels");
    require(image.width > 0 && image.height > 0, ErrorCode::InvalidArgument, "cannot write an empty PNG");
    std::vector<png_byte> buffer(image.data.size());
    for (std::size_t i = 0; i < buffer.size(); ++i)
        buffer[i] = static_cast<png_byte>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    require(png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr) != 0,
            ErrorCode::MissingFile, "cannot write PNG " + path + ": " + png.message);
}

void write_float_planar(const std::string &path, const Image &image) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::MissingFile, "cannot write " + path);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x) {
                const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.at(x, y, c)));
                const char bytes[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                                       static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
                out.write(bytes, 4);
            }
}

Image read_float_planar(const std::string &path, int width, int height, int channels) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::MissingFile, "cannot open " + path);
    Image img(width, height, channels);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                unsigned char b[4];
                in.read(reinterpret_cast<char *>(b), 4);
                require(static_cast<bool>(in), ErrorCode::InvalidArgument, "truncated float dump " + path);
                const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
                img.at(x, y, c) = std::bit_cast<float>(bits);
            }
    return img;
}

}  // namespace sparseview
