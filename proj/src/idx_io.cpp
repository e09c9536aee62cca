#include "ixn/idx_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace ixn {

namespace {

std::uint32_t read_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void write_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

constexpr std::uint32_t kImageMagic = 0x00000803;

}  // namespace

IdxImages load_idx_images(const std::string& path) {
    // gzread handles both gzip-compressed and plain files.
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<std::uint8_t> raw;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) raw.insert(raw.end(), buf, buf + n);
    const bool read_err = n < 0;
    gzclose(f);
    if (read_err) throw IoError("read error on '" + path + "'");

    if (raw.size() < 16)
        throw FormatError("'" + path + "': truncated IDX header at byte offset " +
                          std::to_string(raw.size()));
    const std::uint32_t magic = read_u32_be(raw.data());
    if (magic != kImageMagic) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", magic);
        throw FormatError("'" + path + "': bad IDX magic " + hex +
                          " at byte offset 0 (expected 0x00000803)");
    }
    IdxImages out;
    out.count = static_cast<int>(read_u32_be(raw.data() + 4));
    out.rows = static_cast<int>(read_u32_be(raw.data() + 8));
    out.cols = static_cast<int>(read_u32_be(raw.data() + 12));
    if (out.count < 0 || out.rows <= 0 || out.cols <= 0)
        throw FormatError("'" + path + "': invalid dimensions at byte offset 4");
    const std::size_t need = 16 + static_cast<std::size_t>(out.count) * out.rows * out.cols;
    if (raw.size() < need)
        throw FormatError("'" + path + "': truncated pixel data at byte offset " +
                          std::to_string(raw.size()) + " (expected " +
                          std::to_string(need) + " bytes)");
    out.pixels.assign(raw.begin() + 16, raw.begin() + static_cast<std::ptrdiff_t>(need));
    return out;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_u32_be(out, kImageMagic);
    write_u32_be(out, static_cast<std::uint32_t>(images.count));
    write_u32_be(out, static_cast<std::uint32_t>(images.rows));
    write_u32_be(out, static_cast<std::uint32_t>(images.cols));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write '" + path + "'");
    const std::size_t written = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (written != out.size()) throw IoError("short write on '" + path + "'");
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w) {
    const Shape s = img.shape();
    Tensor<float> out(Shape{s.n, s.c, out_h, out_w});
    const float sy = static_cast<float>(s.h) / out_h;
    const float sx = static_cast<float>(s.w) / out_w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < out_h; ++y) {
                float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(s.h - 1));
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, s.h - 1);
                const float wy = fy - y0;
                for (int x = 0; x < out_w; ++x) {
                    float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(s.w - 1));
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const float wx = fx - x0;
                    out.at(n, c, y, x) = (1 - wy) * ((1 - wx) * img.at(n, c, y0, x0) + wx * img.at(n, c, y0, x1)) +
                                         wy * ((1 - wx) * img.at(n, c, y1, x0) + wx * img.at(n, c, y1, x1));
                }
            }
    return out;
}

std::vector<Tensor<float>> load_fashion_mnist(const std::string& images_path,
                                              ResizeMode mode) {
    const IdxImages idx = load_idx_images(images_path);
    std::vector<Tensor<float>> out;
    out.reserve(static_cast<std::size_t>(idx.count));
    const std::int64_t plane = static_cast<std::int64_t>(idx.rows) * idx.cols;
    for (int i = 0; i < idx.count; ++i) {
        Tensor<float> img(Shape{1, 1, idx.rows, idx.cols});
        for (std::int64_t j = 0; j < plane; ++j)
            img[j] = static_cast<float>(idx.pixels[static_cast<std::size_t>(i) * plane +
                                                   static_cast<std::size_t>(j)]) /
                     255.0f;
        if (idx.rows == 32 && idx.cols == 32) {
            out.push_back(std::move(img));
        } else if (mode == ResizeMode::Bilinear) {
            out.push_back(resize_bilinear(img, 32, 32));
        } else {
            Tensor<float> padded(Shape{1, 1, 32, 32});
            const int oy = (32 - idx.rows) / 2, ox = (32 - idx.cols) / 2;
            if (oy < 0 || ox < 0)
                throw DimensionError("zero-pad resize: source larger than 32x32");
            for (int y = 0; y < idx.rows; ++y)
                for (int x = 0; x < idx.cols; ++x)
                    padded.at(0, 0, y + oy, x + ox) = img.at(0, 0, y, x);
            out.push_back(std::move(padded));
        }
    }
    return out;
}

IdxImages make_synthetic_images(int count, std::uint64_t seed) {
    IdxImages out;
    out.count = count;
    out.rows = 28;
    out.cols = 28;
    out.pixels.resize(static_cast<std::size_t>(count) * 28 * 28, 0);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coord(3, 24);
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_int_distribution<int> texture(0, 3);
    std::uniform_int_distribution<int> level(90, 230);
    std::uniform_int_distribution<int> period(2, 5);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);

    for (int i = 0; i < count; ++i) {
        std::uint8_t* img = out.pixels.data() + static_cast<std::size_t>(i) * 28 * 28;
        const int shape = kind(rng);
        const int tex = texture(rng);
        const int base = level(rng);
        const int p = period(rng);
        int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        if (x1 - x0 < 8) x1 = std::min(27, x0 + 8);
        if (y1 - y0 < 8) y1 = std::min(27, y0 + 8);
        const float cx = 0.5f * (x0 + x1), cy = 0.5f * (y0 + y1);
        const float rx = 0.5f * (x1 - x0), ry = 0.5f * (y1 - y0);

        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                bool inside = false;
                switch (shape) {
                    case 0:  // rectangle
                        inside = x >= x0 && x <= x1 && y >= y0 && y <= y1;
                        break;
                    case 1: {  // ellipse
                        const float dx = (x - cx) / std::max(rx, 1.0f);
                        const float dy = (y - cy) / std::max(ry, 1.0f);
                        inside = dx * dx + dy * dy <= 1.0f;
                        break;
                    }
                    case 2:  // triangle (lower-left half of the box)
                        inside = x >= x0 && x <= x1 && y >= y0 && y <= y1 &&
                                 (x - x0) * (y1 - y0) <= (y - y0) * (x1 - x0);
                        break;
                }
                if (!inside) continue;
                float v = static_cast<float>(base);
                switch (tex) {
                    case 0: v *= (y / p) % 2 ? 1.0f : 0.55f; break;       // stripes
                    case 1: v *= ((x / p) + (y / p)) % 2 ? 1.0f : 0.5f; break;  // checker
                    case 2: v *= 0.65f + 0.35f * unit(rng); break;        // speckle
                    default: break;                                       // flat
                }
                img[y * 28 + x] = static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
            }
    }
    return out;
}

}  // namespace ixn
