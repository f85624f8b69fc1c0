#include "vggfire/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

namespace vggfire {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

template <typename U>
void put_le(std::ostream& out, U value) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

void put_floats(std::ostream& out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(float)));
    } else {
        for (float v : values) put_le(out, std::bit_cast<std::uint32_t>(v));
    }
}

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError(fmt::format("cannot open '{}'", path.string()));
        size_ = std::filesystem::file_size(path);
    }

    void read_bytes(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(fmt::format("'{}' is truncated while reading {}", path_.string(), what));
        }
    }

    template <typename U>
    U get_le(const char* what) {
        unsigned char bytes[sizeof(U)];
        read_bytes(bytes, sizeof(U), what);
        U value = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
        return value;
    }

    void read_floats(std::span<float> dst, const std::string& name) {
        read_bytes(dst.data(), dst.size() * sizeof(float), name.c_str());
        if constexpr (std::endian::native != std::endian::little) {
            for (auto& v : dst) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
        }
    }

    void skip(std::size_t n, const std::string& name) {
        const auto pos = static_cast<std::uintmax_t>(in_.tellg());
        if (pos + n > size_) {
            throw FormatError(fmt::format("'{}' is truncated in payload of {}", path_.string(), name));
        }
        in_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
        if (!in_) throw FormatError(fmt::format("'{}' is truncated in payload of {}", path_.string(), name));
    }

    std::uint32_t read_header() {
        char magic[4];
        read_bytes(magic, 4, "magic");
        if (std::memcmp(magic, kVggwMagic, 4) != 0) {
            throw FormatError(fmt::format("'{}' is not a VGGW file (bad magic)", path_.string()));
        }
        const auto version = get_le<std::uint32_t>("version");
        if (version != kVggwVersion) {
            throw FormatError(fmt::format("'{}' has unsupported VGGW version {}", path_.string(), version));
        }
        return get_le<std::uint32_t>("tensor count");
    }

    TensorRecord read_record_header() {
        TensorRecord rec;
        const auto name_len = get_le<std::uint16_t>("name length");
        rec.name.resize(name_len);
        read_bytes(rec.name.data(), name_len, "tensor name");
        const auto dtype = get_le<std::uint8_t>("dtype");
        if (dtype != kVggwFloat32) {
            throw FormatError(fmt::format("tensor '{}' has unsupported dtype {}", rec.name, dtype));
        }
        const auto rank = get_le<std::uint8_t>("rank");
        if (rank == 0) throw FormatError(fmt::format("tensor '{}' has rank 0", rec.name));
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = get_le<std::uint32_t>("dimension");
            if (dim == 0) throw FormatError(fmt::format("tensor '{}' has a zero dimension", rec.name));
            rec.shape.push_back(dim);
        }
        return rec;
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::uintmax_t size_ = 0;
};

} // namespace

void write_vggw(const std::filesystem::path& path,
                const std::vector<std::pair<std::string, const Tensor32*>>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(kVggwMagic, 4);
    put_le<std::uint32_t>(out, kVggwVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        if (name.size() > 0xFFFF) throw FormatError(fmt::format("tensor name too long: {}", name));
        if (tensor->rank() > 0xFF) throw FormatError(fmt::format("tensor '{}' rank too large", name));
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint8_t>(out, kVggwFloat32);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(tensor->rank()));
        for (auto d : tensor->shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        put_floats(out, tensor->data());
    }
    out.flush();
    if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void write_vggw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::vector<std::pair<std::string, const Tensor32*>> refs;
    refs.reserve(tensors.size());
    for (const auto& t : tensors) refs.emplace_back(t.name, &t.tensor);
    write_vggw(path, refs);
}

std::vector<NamedTensor> read_vggw(const std::filesystem::path& path) {
    Reader reader(path);
    const auto count = reader.read_header();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto rec = reader.read_record_header();
        Tensor32 t(rec.shape);
        reader.read_floats(t.data(), rec.name);
        tensors.push_back({std::move(rec.name), std::move(t)});
    }
    return tensors;
}

std::vector<TensorRecord> read_vggw_inventory(const std::filesystem::path& path) {
    Reader reader(path);
    const auto count = reader.read_header();
    std::vector<TensorRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto rec = reader.read_record_header();
        reader.skip(shape_numel(rec.shape) * sizeof(float), rec.name);
        records.push_back(std::move(rec));
    }
    return records;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, const Tensor32*>> refs;
    for (const auto& p : model.parameters()) refs.emplace_back(p.name, &p.param->value);
    write_vggw(path, refs);
}

void load_interchange(Model& model, const std::filesystem::path& path, const LoadOptions& options) {
    const std::string head_prefix = fmt::format("classifier.{}.", model.head_index());
    auto is_head = [&](const std::string& name) { return name.rfind(head_prefix, 0) == 0; };

    auto params = model.parameters();
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < params.size(); ++i) by_name.emplace(params[i].name, i);

    // Validate the whole inventory before touching the model.
    std::set<std::string> seen;
    for (const auto& rec : read_vggw_inventory(path)) {
        if (options.replace_head && is_head(rec.name)) continue;
        auto it = by_name.find(rec.name);
        if (it == by_name.end()) {
            throw IntegrityError(fmt::format("'{}': unexpected tensor '{}'", path.string(), rec.name));
        }
        const Shape& expected = params[it->second].param->value.shape();
        if (rec.shape != expected) {
            throw IntegrityError(fmt::format("'{}': tensor '{}' has shape {}, expected {}", path.string(), rec.name,
                                             shape_string(rec.shape), shape_string(expected)));
        }
        if (!seen.insert(rec.name).second) {
            throw IntegrityError(fmt::format("'{}': duplicate tensor '{}'", path.string(), rec.name));
        }
    }
    for (const auto& p : params) {
        if (options.replace_head && is_head(p.name)) continue;
        if (!seen.contains(p.name)) {
            throw IntegrityError(fmt::format("'{}': missing tensor '{}'", path.string(), p.name));
        }
    }

    Reader reader(path);
    const auto count = reader.read_header();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto rec = reader.read_record_header();
        const std::size_t bytes = shape_numel(rec.shape) * sizeof(float);
        if (options.replace_head && is_head(rec.name)) {
            reader.skip(bytes, rec.name);
            continue;
        }
        reader.read_floats(params[by_name.at(rec.name)].param->value.data(), rec.name);
    }

    if (options.replace_head) {
        for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
            if (is_head(params[i].name)) {
                he_uniform(*params[i].param, *params[i + 1].param, parameter_seed(options.seed, i));
            }
        }
    }
}

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const LoadOptions& options) {
    Model model(config, options.seed);
    load_interchange(model, path, options);
    return model;
}

std::size_t checkpoint_num_classes(const std::filesystem::path& path, const ModelConfig& config) {
    const std::string head = fmt::format("classifier.{}.weight", classifier_specs(config).size() - 1);
    for (const auto& rec : read_vggw_inventory(path)) {
        if (rec.name == head && rec.shape.size() == 2) return rec.shape[0];
    }
    throw IntegrityError(fmt::format("'{}': missing tensor '{}'", path.string(), head));
}

} // namespace vggfire
