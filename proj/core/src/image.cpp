#include "vggfire/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>

namespace vggfire {

namespace {

bool is_png(std::span<const std::uint8_t> b) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_jpeg(std::span<const std::uint8_t> b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

Image8 from_interleaved(const std::uint8_t* rgb, std::size_t h, std::size_t w) {
    Image8 img(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = rgb[(y * w + x) * 3 + c];
    return img;
}

std::vector<std::uint8_t> to_interleaved(const Image8& img) {
    std::vector<std::uint8_t> rgb(img.height * img.width * 3);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) rgb[(y * img.width + x) * 3 + c] = img.at(c, y, x);
    return rgb;
}

Image8 decode_png(std::span<const std::uint8_t> bytes, const std::string& id) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw DecodeError(fmt::format("{}: PNG decode failed: {}", id, image.message));
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string message = image.message;
        png_image_free(&image);
        throw DecodeError(fmt::format("{}: PNG decode failed: {}", id, message));
    }
    return from_interleaved(buffer.data(), image.height, image.width);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

// Returns false with `err.message` set on failure. Kept free of objects with
// non-trivial destructors created after setjmp.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, std::vector<std::uint8_t>& pixels, std::size_t& height,
                     std::size_t& width, std::size_t& components, JpegErrorManager& err) {
    jpeg_decompress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_silence;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    height = cinfo.output_height;
    width = cinfo.output_width;
    components = static_cast<std::size_t>(cinfo.output_components);
    pixels.resize(height * width * components);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * components;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

Image8 decode_jpeg(std::span<const std::uint8_t> bytes, const std::string& id) {
    std::vector<std::uint8_t> pixels;
    std::size_t h = 0, w = 0, comps = 0;
    JpegErrorManager err{};
    if (!decode_jpeg_raw(bytes, pixels, h, w, comps, err)) {
        throw DecodeError(fmt::format("{}: JPEG decode failed: {}", id, err.message));
    }
    if (comps == 3) return from_interleaved(pixels.data(), h, w);
    if (comps != 1) throw DecodeError(fmt::format("{}: unsupported JPEG component count {}", id, comps));
    Image8 img(h, w);
    for (std::size_t c = 0; c < 3; ++c) std::copy(pixels.begin(), pixels.end(), img.data.begin() + c * h * w);
    return img;
}

bool encode_jpeg_raw(const std::uint8_t* rgb, std::size_t h, std::size_t w, int quality, unsigned char*& out,
                     unsigned long& out_size, JpegErrorManager& err) {
    jpeg_compress_struct cinfo;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &out, &out_size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        auto row = const_cast<JSAMPROW>(rgb + static_cast<std::size_t>(cinfo.next_scanline) * w * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

std::vector<std::uint8_t> encode_png_format(const std::uint8_t* pixels, std::size_t h, std::size_t w,
                                            png_uint_32 format) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr)) {
        throw IoError(fmt::format("PNG encode failed: {}", image.message));
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr)) {
        throw IoError(fmt::format("PNG encode failed: {}", image.message));
    }
    out.resize(size);
    return out;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Bilinear sample of one plane with edge replication.
template <typename Pixel>
double sample_bilinear(const Pixel* plane, std::size_t h, std::size_t w, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const std::size_t x1 = std::min(x0 + 1, w - 1);
    const double wy = y - static_cast<double>(y0);
    const double wx = x - static_cast<double>(x0);
    const double top = (1.0 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1];
    const double bottom = (1.0 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1];
    return (1.0 - wy) * top + wy * bottom;
}

} // namespace

Image8 decode_image(std::span<const std::uint8_t> bytes, const std::string& id) {
    if (is_png(bytes)) return decode_png(bytes, id);
    if (is_jpeg(bytes)) return decode_jpeg(bytes, id);
    throw DecodeError(fmt::format("{}: not a PNG or JPEG payload", id));
}

Image8 read_image(const std::filesystem::path& path, const std::string& id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError(fmt::format("{}: cannot open '{}'", id, path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_image(bytes, id);
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
    const auto rgb = to_interleaved(image);
    return encode_png_format(rgb.data(), image.height, image.width, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png_gray(const Image8& image) {
    return encode_png_format(image.data.data(), image.height, image.width, PNG_FORMAT_GRAY);
}

std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality) {
    const auto rgb = to_interleaved(image);
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    JpegErrorManager err{};
    if (!encode_jpeg_raw(rgb.data(), image.height, image.width, quality, buffer, size, err)) {
        std::free(buffer);
        throw IoError(fmt::format("JPEG encode failed: {}", err.message));
    }
    std::vector<std::uint8_t> out(buffer, buffer + size);
    std::free(buffer);
    return out;
}

Image8 resize_bilinear(const Image8& image, std::size_t out_h, std::size_t out_w) {
    if (image.height == 0 || image.width == 0 || out_h == 0 || out_w == 0) {
        throw InputError("resize_bilinear: image dimensions must be >= 1");
    }
    if (image.height == out_h && image.width == out_w) return image;
    const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
    const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
    Image8 out(out_h, out_w);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::uint8_t* plane = image.data.data() + c * image.height * image.width;
        for (std::size_t y = 0; y < out_h; ++y) {
            const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
            for (std::size_t x = 0; x < out_w; ++x) {
                const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
                const double v = sample_bilinear(plane, image.height, image.width, src_y, src_x);
                out.at(c, y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Tensor32 normalize(const Image8& image) {
    Tensor32 out({3, image.height, image.width});
    auto dst = out.data();
    for (std::size_t i = 0; i < image.data.size(); ++i) dst[i] = static_cast<float>(image.data[i]) / 255.0f;
    return out;
}

Tensor32 preprocess(const Image8& image, std::size_t size) { return normalize(resize_bilinear(image, size, size)); }

AugmentPolicy AugmentPolicy::disabled() {
    AugmentPolicy p;
    p.rotate = p.flip = p.brightness = p.noise = false;
    return p;
}

void AugmentPolicy::validate() const {
    if (!(rotation_max_deg >= 0.0)) throw ConfigError("augment: rotation_max_deg must be >= 0");
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("augment: hflip_prob must lie in [0, 1]");
    if (!(brightness_min > 0.0 && brightness_max >= brightness_min)) {
        throw ConfigError("augment: brightness range must be positive with min <= max");
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("augment: noise_sigma must be >= 0");
}

Tensor32 hflip(const Tensor32& pixels) {
    require_rank(pixels, 3, "hflip");
    const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    Tensor32 out(pixels.shape());
    for (std::size_t row = 0; row < c * h; ++row)
        for (std::size_t x = 0; x < w; ++x) out[row * w + x] = pixels[row * w + (w - 1 - x)];
    return out;
}

Tensor32 rotate(const Tensor32& pixels, double degrees) {
    require_rank(pixels, 3, "rotate");
    const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    Tensor32 out(pixels.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        const float* plane = pixels.data().data() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                // Inverse map of a counter-clockwise turn on screen.
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const double sx = cos_t * dx - sin_t * dy + cx;
                const double sy = sin_t * dx + cos_t * dy + cy;
                out[(ch * h + y) * w + x] = static_cast<float>(sample_bilinear(plane, h, w, sy, sx));
            }
        }
    }
    return out;
}

Tensor32 augment(const Tensor32& pixels, const AugmentPolicy& policy, std::mt19937_64& rng) {
    Tensor32 out = pixels;
    if (policy.rotate && policy.rotation_max_deg > 0.0) {
        const double angle = (2.0 * unit_uniform(rng) - 1.0) * policy.rotation_max_deg;
        out = rotate(out, angle);
    }
    if (policy.flip && unit_uniform(rng) < policy.hflip_prob) out = hflip(out);
    if (policy.brightness) {
        const double factor =
            policy.brightness_min + unit_uniform(rng) * (policy.brightness_max - policy.brightness_min);
        for (auto& v : out.data()) v = clamp01(static_cast<double>(v) * factor);
    }
    if (policy.noise && policy.noise_sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, policy.noise_sigma);
        for (auto& v : out.data()) v = clamp01(static_cast<double>(v) + gauss(rng));
    }
    return out;
}

} // namespace vggfire
