#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ganlab {

// Planar RGB image with pixel values in [-1, 1].
struct Image {
    int width = 0, height = 0;
    std::vector<float> rgb;  // 3 * height * width, channel-major

    float& at(int c, int y, int x) {
        return rgb[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return rgb[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

// round_half_away_from_zero((x+1)/2*255), clamped to [0,255].
uint8_t pixel_to_byte(float x);
inline float byte_to_pixel(uint8_t b) {
    return static_cast<float>(b) / 255.0f * 2.0f - 1.0f;
}

// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// 8-bit non-interlaced PNG, color types gray/RGB/RGBA (alpha dropped).
Image read_png(const std::string& path);

// Dispatches on the file magic (PPM or PNG).
Image read_image(const std::string& path);

// Area-averaging resampler; exact box filter for integer ratios.
Image box_resize(const Image& img, int out_w, int out_h);

Image center_crop_square(const Image& img);

}  // namespace ganlab
