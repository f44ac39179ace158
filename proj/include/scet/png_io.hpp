#pragma once

// PNG plumbing on top of libpng. Load accepts 8-bit RGB, RGBA (alpha
// dropped), grayscale and palette images, always yielding 3-channel RGB.
// Save writes 8-bit RGB.

#include <string>

#include "scet/image.hpp"

namespace scet {

struct PngError : ImageError {
    using ImageError::ImageError;
};
// Malformed / non-PNG input.
struct PngFormatError : PngError {
    using PngError::PngError;
};
// Well-formed PNG with a bit depth other than 8.
struct PngDepthError : PngError {
    using PngError::PngError;
};

ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

}  // namespace scet
