#include "vggfire/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

namespace vggfire {

namespace fs = std::filesystem;

const char* label_name(Label label) noexcept { return label == Label::Fire ? "fire" : "no_fire"; }

const char* category_name(Category category) noexcept {
    switch (category) {
    case Category::FireOnly: return "fire_only";
    case Category::SmokeOnly: return "smoke_only";
    case Category::FireAndSmoke: return "fire_and_smoke";
    case Category::None: return "none";
    case Category::Fire: return "fire";
    case Category::NoFire: return "no_fire";
    }
    return "?";
}

Label label_for(Category category) noexcept {
    return (category == Category::None || category == Category::NoFire) ? Label::NoFire : Label::Fire;
}

Layout parse_layout(const std::string& name) {
    if (name == "binary") return Layout::Binary;
    if (name == "dfire4") return Layout::DFire4;
    throw ConfigError(fmt::format("unknown dataset layout '{}' (expected binary or dfire4)", name));
}

const char* layout_name(Layout layout) noexcept { return layout == Layout::Binary ? "binary" : "dfire4"; }

std::vector<std::pair<std::string, Category>> layout_directories(Layout layout) {
    if (layout == Layout::Binary) return {{"fire", Category::Fire}, {"no_fire", Category::NoFire}};
    return {{"fire_only", Category::FireOnly},
            {"smoke_only", Category::SmokeOnly},
            {"fire_and_smoke", Category::FireAndSmoke},
            {"none", Category::None}};
}

Dataset::Dataset(std::vector<SampleRef> samples) : samples_(std::move(samples)) {
    std::sort(samples_.begin(), samples_.end(), [](const SampleRef& a, const SampleRef& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        if (samples_[i].id == samples_[i - 1].id) {
            throw DatasetError(fmt::format("duplicate sample id '{}'", samples_[i].id));
        }
    }
    for (const auto& s : samples_) {
        if (s.label == Label::Fire) {
            ++counts_.fire;
        } else {
            ++counts_.no_fire;
        }
    }
}

std::map<Category, std::size_t> Dataset::category_counts() const {
    std::map<Category, std::size_t> counts;
    for (const auto& s : samples_) ++counts[s.category];
    return counts;
}

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

Dataset load_dataset(const fs::path& root, Layout layout) {
    if (!fs::is_directory(root)) throw DatasetError(fmt::format("dataset root '{}' is not a directory", root.string()));
    std::vector<SampleRef> samples;
    for (const auto& [dir_name, category] : layout_directories(layout)) {
        const fs::path dir = root / dir_name;
        if (!fs::is_directory(dir)) {
            throw DatasetError(fmt::format("missing class directory '{}'", dir.string()));
        }
        std::size_t found = 0;
        for (const auto& entry : fs::recursive_directory_iterator(dir)) {
            if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
            samples.push_back({fs::relative(entry.path(), root).generic_string(), entry.path(), label_for(category),
                               category});
            ++found;
        }
        if (found == 0) throw DatasetError(fmt::format("class directory '{}' contains no images", dir.string()));
    }
    return Dataset(std::move(samples));
}

std::size_t split_count(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 0.5));
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed,
                                  bool stratified) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InputError(fmt::format("split fraction must lie in (0, 1), got {}", test_fraction));
    }
    const std::size_t n = dataset.size();
    const std::size_t test_total = split_count(n, test_fraction);
    if (test_total == 0 || test_total >= n) {
        throw InputError(fmt::format("split fraction {} of {} samples leaves an empty split", test_fraction, n));
    }

    std::mt19937_64 rng(seed);
    std::vector<bool> in_test(n, false);
    if (stratified) {
        std::vector<std::size_t> fire, no_fire;
        for (std::size_t i = 0; i < n; ++i) (dataset[i].label == Label::Fire ? fire : no_fire).push_back(i);
        // Proportional share for fire, rounded half up; the rest go to no_fire.
        std::size_t fire_quota = (2 * test_total * fire.size() + n) / (2 * n);
        fire_quota = std::min(fire_quota, fire.size());
        std::size_t no_fire_quota = test_total - fire_quota;
        if (no_fire_quota > no_fire.size()) {
            fire_quota += no_fire_quota - no_fire.size();
            no_fire_quota = no_fire.size();
        }
        std::shuffle(fire.begin(), fire.end(), rng);
        std::shuffle(no_fire.begin(), no_fire.end(), rng);
        for (std::size_t i = 0; i < fire_quota; ++i) in_test[fire[i]] = true;
        for (std::size_t i = 0; i < no_fire_quota; ++i) in_test[no_fire[i]] = true;
    } else {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < test_total; ++i) in_test[order[i]] = true;
    }

    std::vector<SampleRef> train, test;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test : train).push_back(dataset[i]);
    return {Dataset(std::move(train)), Dataset(std::move(test))};
}

Sample load_sample(const SampleRef& ref, std::size_t image_size) {
    return {preprocess(read_image(ref.path, ref.id), image_size), ref.label, ref.category, ref.id};
}

std::optional<std::optional<Tensor32>> PreprocessCache::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void PreprocessCache::store(const std::string& id, std::optional<Tensor32> pixels) {
    std::lock_guard lock(mutex_);
    entries_.insert_or_assign(id, std::move(pixels));
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5EEDu};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(epoch_seed(seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

BatchIterator::BatchIterator(const Dataset& dataset, LoaderOptions options, std::size_t epoch)
    : dataset_(&dataset), options_(std::move(options)), epoch_(epoch) {
    if (options_.batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (options_.augment) options_.augment->validate();
    order_ = epoch_order(dataset.size(), options_.shuffle, options_.seed, epoch);
}

std::size_t BatchIterator::num_batches() const noexcept {
    return (order_.size() + options_.batch_size - 1) / options_.batch_size;
}

std::optional<Tensor32> BatchIterator::load_pixels(const SampleRef& ref) {
    if (options_.cache) {
        if (auto hit = options_.cache->find(ref.id)) return *hit;
    }
    std::optional<Tensor32> pixels;
    try {
        pixels = preprocess(read_image(ref.path, ref.id), options_.image_size);
    } catch (const DecodeError& e) {
        if (options_.strict) throw;
        const std::string message = fmt::format("warning: skipping undecodable image: {}", e.what());
        if (options_.on_warning) {
            options_.on_warning(message);
        } else {
            std::cerr << message << '\n';
        }
    }
    if (options_.cache) options_.cache->store(ref.id, pixels);
    return pixels;
}

std::optional<Batch> BatchIterator::next() {
    const std::size_t s = options_.image_size;
    const std::size_t image_elems = 3 * s * s;
    while (cursor_ < order_.size()) {
        const std::size_t end = std::min(cursor_ + options_.batch_size, order_.size());
        std::vector<Tensor32> images;
        Batch batch;
        for (std::size_t pos = cursor_; pos < end; ++pos) {
            const SampleRef& ref = (*dataset_)[order_[pos]];
            auto pixels = load_pixels(ref);
            if (!pixels) {
                ++skipped_;
                continue;
            }
            if (options_.augment) {
                std::mt19937_64 rng(epoch_seed(options_.seed ^ 0xA06E47ULL, epoch_) + pos);
                pixels = augment(*pixels, *options_.augment, rng);
            }
            images.push_back(std::move(*pixels));
            batch.labels.push_back(static_cast<int>(ref.label));
            batch.ids.push_back(ref.id);
        }
        cursor_ = end;
        if (images.empty()) continue;
        batch.images = Tensor32({images.size(), 3, s, s});
        for (std::size_t i = 0; i < images.size(); ++i) {
            std::copy(images[i].data().begin(), images[i].data().end(),
                      batch.images.data().begin() + static_cast<std::ptrdiff_t>(i * image_elems));
        }
        return batch;
    }
    return std::nullopt;
}

BatchIterator batch_iter(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                         std::size_t epoch, std::size_t image_size) {
    LoaderOptions options;
    options.batch_size = batch_size;
    options.shuffle = shuffle;
    options.seed = seed;
    options.image_size = image_size;
    return BatchIterator(dataset, std::move(options), epoch);
}

} // namespace vggfire
