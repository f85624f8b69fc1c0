#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vggfire/image.hpp"
#include "vggfire/tensor.hpp"

namespace vggfire::test {

/// Directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "vggfire") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Image8 solid_image(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image8 img(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    }
    return img;
}

inline Image8 random_image(std::size_t h, std::size_t w, std::mt19937_64& rng) {
    Image8 img(h, w);
    std::uniform_int_distribution<int> dist(0, 255);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(dist(rng));
    return img;
}

/// Two-class set of solid images: warm hues under fire/, cool hues under
/// no_fire/, `per_class` of each, side `size`.
inline void write_hue_fixture(const std::filesystem::path& root, std::size_t per_class, std::size_t size,
                              std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> hi(170, 255);
    std::uniform_int_distribution<int> lo(0, 90);
    std::uniform_int_distribution<int> mid(40, 160);
    for (std::size_t i = 0; i < per_class; ++i) {
        const auto warm = solid_image(size, size, static_cast<std::uint8_t>(hi(rng)), static_cast<std::uint8_t>(mid(rng)),
                                      static_cast<std::uint8_t>(lo(rng)));
        write_bytes(root / "fire" / ("warm_" + std::to_string(i) + ".png"), encode_png(warm));
        const auto cool = solid_image(size, size, static_cast<std::uint8_t>(lo(rng)), static_cast<std::uint8_t>(mid(rng)),
                                      static_cast<std::uint8_t>(hi(rng)));
        write_bytes(root / "no_fire" / ("cool_" + std::to_string(i) + ".png"), encode_png(cool));
    }
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace vggfire::test
