#pragma once

#include <filesystem>

#include "haarkit/image.hpp"

namespace haarkit {

// Binary PGM (P5) only, maxval <= 255. Comment lines (#) in the header are
// accepted on read and never written.
GrayImage load_pgm(const std::filesystem::path& path);

// Header is exactly "P5\n<width> <height>\n255\n" followed by the raw rows.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// Parses only the header and returns (width, height). Used to validate
// annotation boxes without decoding payloads.
std::pair<int, int> peek_pgm_size(const std::filesystem::path& path);

}  // namespace haarkit
