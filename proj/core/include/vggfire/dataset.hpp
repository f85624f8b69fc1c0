#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vggfire/image.hpp"

namespace vggfire {

enum class Label : int { NoFire = 0, Fire = 1 };

const char* label_name(Label label) noexcept;  // "no_fire" / "fire"

/// Where a sample came from. The four D-FIRE categories, plus `Fire` and
/// `NoFire` for samples read from a binary fire/no_fire layout.
enum class Category { FireOnly, SmokeOnly, FireAndSmoke, None, Fire, NoFire };

const char* category_name(Category category) noexcept;

/// Smoke counts as fire: every category except None/NoFire maps to Fire.
Label label_for(Category category) noexcept;

enum class Layout { Binary, DFire4 };

Layout parse_layout(const std::string& name);
const char* layout_name(Layout layout) noexcept;

/// Category directory names for a layout, in scan order.
std::vector<std::pair<std::string, Category>> layout_directories(Layout layout);

struct SampleRef {
    std::string id;  // path relative to the dataset root, '/'-separated
    std::filesystem::path path;
    Label label = Label::NoFire;
    Category category = Category::None;
};

struct Sample {
    Tensor32 pixels;  // 3 x H x W in [0, 1]
    Label label = Label::NoFire;
    Category category = Category::None;
    std::string id;
};

struct LabelCounts {
    std::size_t fire = 0;
    std::size_t no_fire = 0;
    std::size_t total() const noexcept { return fire + no_fire; }
    friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

/// Samples ordered by id; ids are unique.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<SampleRef> samples);

    const std::vector<SampleRef>& samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }
    const SampleRef& operator[](std::size_t i) const { return samples_[i]; }

    LabelCounts counts() const noexcept { return counts_; }
    std::map<Category, std::size_t> category_counts() const;

private:
    std::vector<SampleRef> samples_;
    LabelCounts counts_;
};

bool is_image_file(const std::filesystem::path& path);

/// Scans `root` for the layout's category directories (recursively, .jpg,
/// .jpeg, .png in any case). Throws DatasetError naming a missing or empty
/// directory.
Dataset load_dataset(const std::filesystem::path& root, Layout layout);

/// round(n * fraction) with halves rounded up.
std::size_t split_count(std::size_t n, double fraction);

/// Disjoint, exhaustive train/test partition. The test split holds
/// split_count(n, fraction) samples; stratified mode allocates that total
/// across labels in proportion (within one sample). Throws InputError if
/// either side would be empty.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed,
                                  bool stratified = true);

/// Reads, decodes and preprocesses one sample.
Sample load_sample(const SampleRef& ref, std::size_t image_size = kVggInputSize);

/// Preprocessed pixels keyed by sample id, shared between epochs. Samples
/// that failed to decode are remembered as empty entries.
class PreprocessCache {
public:
    std::optional<std::optional<Tensor32>> find(const std::string& id) const;
    void store(const std::string& id, std::optional<Tensor32> pixels);

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::optional<Tensor32>> entries_;
};

struct LoaderOptions {
    std::size_t image_size = kVggInputSize;
    std::size_t batch_size = 32;
    bool shuffle = false;
    std::uint64_t seed = 0;
    std::optional<AugmentPolicy> augment;
    /// Fail on the first undecodable image instead of skipping it.
    bool strict = false;
    std::shared_ptr<PreprocessCache> cache;
    std::function<void(const std::string&)> on_warning;
};

struct Batch {
    Tensor32 images;  // N x 3 x S x S
    std::vector<int> labels;
    std::vector<std::string> ids;
};

/// Seed for the sample permutation of an epoch.
std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch);

/// Order in which an epoch visits the dataset: id order, or a permutation
/// derived from (seed, epoch) when shuffling.
std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::uint64_t seed, std::size_t epoch);

/// One epoch of batches. Contents depend only on (dataset, options, epoch);
/// per-sample augmentation draws from an rng seeded by (seed, epoch,
/// position), so the result does not depend on how samples are scheduled.
class BatchIterator {
public:
    BatchIterator(const Dataset& dataset, LoaderOptions options, std::size_t epoch);

    std::optional<Batch> next();

    std::size_t num_batches() const noexcept;
    std::size_t skipped() const noexcept { return skipped_; }

private:
    std::optional<Tensor32> load_pixels(const SampleRef& ref);

    const Dataset* dataset_;
    LoaderOptions options_;
    std::size_t epoch_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t skipped_ = 0;
};

BatchIterator batch_iter(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                         std::size_t epoch, std::size_t image_size = kVggInputSize);

} // namespace vggfire
