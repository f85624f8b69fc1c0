#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vggfire/tensor.hpp"

namespace vggfire {

/// Side length images are resized to before entering VGG16.
inline constexpr std::size_t kVggInputSize = 224;

/// 8-bit RGB image, channel-major (3 x H x W).
struct Image8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> data;

    static constexpr std::size_t channels = 3;

    Image8() = default;
    Image8(std::size_t h, std::size_t w) : height(h), width(w), data(channels * h * w, 0) {}

    std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

    friend bool operator==(const Image8&, const Image8&) = default;
};

/// Decodes a PNG or JPEG payload to RGB; grayscale is replicated into all
/// three channels and alpha is dropped. Throws DecodeError mentioning `id`.
Image8 decode_image(std::span<const std::uint8_t> bytes, const std::string& id = "<memory>");
Image8 read_image(const std::filesystem::path& path, const std::string& id);

std::vector<std::uint8_t> encode_png(const Image8& image);
/// Single-channel PNG from the first channel.
std::vector<std::uint8_t> encode_png_gray(const Image8& image);
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality = 95);

/// Bilinear resize with half-pixel centres (src = (dst + 0.5) * in/out - 0.5,
/// clamped to the edge), rounded to the nearest 8-bit value.
Image8 resize_bilinear(const Image8& image, std::size_t out_height, std::size_t out_width);

/// X / 255 into a 3 x H x W float tensor.
Tensor32 normalize(const Image8& image);

/// resize_bilinear to size x size followed by normalize.
Tensor32 preprocess(const Image8& image, std::size_t size = kVggInputSize);

struct AugmentPolicy {
    bool rotate = true;
    double rotation_max_deg = 15.0;
    bool flip = true;
    double hflip_prob = 0.5;
    bool brightness = true;
    double brightness_min = 0.8;
    double brightness_max = 1.2;
    bool noise = true;
    double noise_sigma = 0.02;

    static AugmentPolicy disabled();

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Applies, in order: rotation about the centre (bilinear, edge replicated),
/// horizontal flip, brightness scaling with clamp to [0, 1], additive
/// Gaussian noise with clamp. Each enabled transform draws from `rng`.
Tensor32 augment(const Tensor32& pixels, const AugmentPolicy& policy, std::mt19937_64& rng);

/// Mirror of each row of a C x H x W tensor.
Tensor32 hflip(const Tensor32& pixels);

/// Rotation by `degrees` (counter-clockwise) about the image centre.
Tensor32 rotate(const Tensor32& pixels, double degrees);

} // namespace vggfire
