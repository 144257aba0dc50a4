#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace veye {

// 8-bit RGB rasters, row-major, 3 bytes per pixel.
void write_png_rgb(const std::string& path, const std::uint8_t* rgb, int width, int height);
std::vector<std::uint8_t> encode_png_rgb(const std::uint8_t* rgb, int width, int height);

std::vector<std::uint8_t> read_png_rgb(const std::string& path, int& width, int& height);
std::vector<std::uint8_t> decode_png_rgb(const std::uint8_t* bytes, size_t size, int& width, int& height);

std::string base64_encode(const std::uint8_t* data, size_t size);

} // namespace veye
