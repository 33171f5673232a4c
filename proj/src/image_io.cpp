#include "ganlab/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "ganlab/common.hpp"

namespace ganlab {

uint8_t pixel_to_byte(float x) {
    const float v = (x + 1.0f) / 2.0f * 255.0f;
    if (v <= 0.0f) return 0;
    if (v >= 255.0f) return 255;
    return static_cast<uint8_t>(std::floor(v + 0.5f));
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] =
                    pixel_to_byte(img.at(c, y, x));
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("short write to " + path);
}

namespace {

// Reads the next PPM header token, skipping whitespace and # comments.
std::string ppm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot read " + path);
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("short read from " + path);
    return buf;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    if (ppm_token(f) != "P6") throw IoError(path + ": not a binary PPM (P6)");
    Image img;
    try {
        img.width = std::stoi(ppm_token(f));
        img.height = std::stoi(ppm_token(f));
        const int maxval = std::stoi(ppm_token(f));
        if (maxval != 255) throw IoError(path + ": PPM maxval must be 255");
    } catch (const std::logic_error&) {
        throw IoError(path + ": malformed PPM header");
    }
    if (img.width <= 0 || img.height <= 0)
        throw IoError(path + ": bad PPM dimensions");
    img.rgb.resize(static_cast<size_t>(3) * img.width * img.height);
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size()));
        if (!f) throw IoError(path + ": truncated PPM pixel data");
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) =
                    byte_to_pixel(row[static_cast<size_t>(x) * 3 + c]);
    }
    return img;
}

namespace {

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) |
           (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in,
                                  size_t expected) {
    std::vector<uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw IoError("zlib init failed");
    zs.next_in = const_cast<uint8_t*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected)
        throw IoError("PNG: corrupt compressed data");
    return out;
}

}  // namespace

Image read_png(const std::string& path) {
    const auto buf = read_file(path);
    static const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0)
        throw IoError(path + ": not a PNG");
    size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= buf.size() && !saw_iend) {
        const uint32_t len = be32(&buf[pos]);
        if (pos + 12 + len > buf.size())
            throw IoError(path + ": truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const uint8_t* data = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError(path + ": bad IHDR");
            width = static_cast<int>(be32(data));
            height = static_cast<int>(be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0)
                throw IoError(path + ": interlaced PNG unsupported");
            if (bit_depth != 8 ||
                (color_type != 0 && color_type != 2 && color_type != 6))
                throw IoError(path +
                              ": only 8-bit gray/RGB/RGBA PNG supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width <= 0 || height <= 0)
        throw IoError(path + ": missing PNG header");
    const int channels = color_type == 2 ? 3 : color_type == 6 ? 4 : 1;
    const size_t stride = static_cast<size_t>(width) * channels;
    auto raw = zlib_inflate(idat, (stride + 1) * height);

    // Undo per-row filters.
    std::vector<uint8_t> prev(stride, 0);
    Image img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<size_t>(3) * width * height);
    std::vector<uint8_t> cur(stride);
    for (int y = 0; y < height; ++y) {
        const uint8_t filter = raw[(stride + 1) * y];
        const uint8_t* src = &raw[(stride + 1) * y + 1];
        for (size_t i = 0; i < stride; ++i) {
            const int a =
                i >= static_cast<size_t>(channels) ? cur[i - channels] : 0;
            const int b = prev[i];
            const int c =
                i >= static_cast<size_t>(channels) ? prev[i - channels] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError(path + ": unknown PNG filter type");
            }
            cur[i] = static_cast<uint8_t>(v);
        }
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const int src_ch = channels == 1 ? 0 : ch;
                img.at(ch, y, x) = byte_to_pixel(
                    cur[static_cast<size_t>(x) * channels + src_ch]);
            }
        std::swap(prev, cur);
    }
    return img;
}

Image read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    char magic[2] = {0, 0};
    f.read(magic, 2);
    f.close();
    if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
    if (static_cast<uint8_t>(magic[0]) == 137 && magic[1] == 'P')
        return read_png(path);
    throw IoError(path + ": unrecognized image format (PPM/PNG accepted)");
}

Image box_resize(const Image& img, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0)
        throw IoError("box_resize: target extent must be positive");
    Image out;
    out.width = out_w;
    out.height = out_h;
    out.rgb.resize(static_cast<size_t>(3) * out_w * out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < out_h; ++y) {
            const double y0 = y * sy, y1 = (y + 1) * sy;
            for (int x = 0; x < out_w; ++x) {
                const double x0 = x * sx, x1 = (x + 1) * sx;
                double acc = 0, area = 0;
                for (int iy = static_cast<int>(y0);
                     iy < static_cast<int>(std::ceil(y1)); ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) -
                                      std::max<double>(iy, y0);
                    if (wy <= 0) continue;
                    for (int ix = static_cast<int>(x0);
                         ix < static_cast<int>(std::ceil(x1)); ++ix) {
                        const double wx = std::min<double>(ix + 1, x1) -
                                          std::max<double>(ix, x0);
                        if (wx <= 0) continue;
                        const int cy = std::min(iy, img.height - 1);
                        const int cx = std::min(ix, img.width - 1);
                        acc += wx * wy * img.at(c, cy, cx);
                        area += wx * wy;
                    }
                }
                out.at(c, y, x) = static_cast<float>(acc / area);
            }
        }
    return out;
}

Image center_crop_square(const Image& img) {
    const int side = std::min(img.width, img.height);
    if (side == img.width && side == img.height) return img;
    const int ox = (img.width - side) / 2;
    const int oy = (img.height - side) / 2;
    Image out;
    out.width = side;
    out.height = side;
    out.rgb.resize(static_cast<size_t>(3) * side * side);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                out.at(c, y, x) = img.at(c, y + oy, x + ox);
    return out;
}

}  // namespace ganlab
