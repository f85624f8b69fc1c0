#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "support.hpp"
#include "vggfire/checkpoint.hpp"

using namespace vggfire;
using test::TempDir;

namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

bool same_parameters(const Model& a, const Model& b) {
    const auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].name != pb[i].name || !(pa[i].param->value == pb[i].param->value)) return false;
    }
    return true;
}

} // namespace

TEST(Vggw, ByteLayout) {
    TempDir dir;
    const auto path = dir / "t.vggw";
    write_vggw(path, std::vector<NamedTensor>{{"ab", Tensor32::from({2}, {1.0f, -2.0f})}});

    std::vector<std::uint8_t> expected{'V', 'G', 'G', 'W'};
    append_u32(expected, 1);
    append_u32(expected, 1);
    expected.insert(expected.end(), {2, 0, 'a', 'b', 0, 1});
    append_u32(expected, 2);
    for (float f : {1.0f, -2.0f}) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        append_u32(expected, bits);
    }
    EXPECT_EQ(read_all(path), expected);
}

TEST(Vggw, ReadsHandWrittenFile) {
    TempDir dir;
    std::vector<std::uint8_t> bytes{'V', 'G', 'G', 'W'};
    append_u32(bytes, 1);
    append_u32(bytes, 1);
    bytes.insert(bytes.end(), {1, 0, 'w', 0, 2});
    append_u32(bytes, 1);
    append_u32(bytes, 2);
    for (float f : {0.5f, 3.0f}) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        append_u32(bytes, bits);
    }
    test::write_bytes(dir / "h.vggw", bytes);
    const auto tensors = read_vggw(dir / "h.vggw");
    ASSERT_EQ(tensors.size(), 1u);
    EXPECT_EQ(tensors[0].name, "w");
    EXPECT_EQ(tensors[0].tensor, Tensor32::from({1, 2}, {0.5f, 3.0f}));
}

TEST(Vggw, RejectsMalformedFiles) {
    TempDir dir;
    const auto good = dir / "good.vggw";
    write_vggw(good, std::vector<NamedTensor>{{"x", Tensor32::filled({3, 3}, 1.0f)}});
    auto bytes = read_all(good);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    test::write_bytes(dir / "magic.vggw", bad_magic);
    EXPECT_THROW(read_vggw(dir / "magic.vggw"), FormatError);

    auto bad_version = bytes;
    bad_version[4] = 2;
    test::write_bytes(dir / "version.vggw", bad_version);
    EXPECT_THROW(read_vggw(dir / "version.vggw"), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    test::write_bytes(dir / "trunc.vggw", truncated);
    EXPECT_THROW(read_vggw(dir / "trunc.vggw"), FormatError);
    EXPECT_THROW(read_vggw_inventory(dir / "trunc.vggw"), FormatError);

    auto header_only = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10);
    test::write_bytes(dir / "short.vggw", header_only);
    EXPECT_THROW(read_vggw(dir / "short.vggw"), FormatError);

    EXPECT_THROW(read_vggw(dir / "missing.vggw"), IoError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    TempDir dir;
    const Model model = build_model(ModelConfig::vgg_mini(), 77);
    save_checkpoint(model, dir / "a.vggw");
    const Model loaded = load_checkpoint(dir / "a.vggw", ModelConfig::vgg_mini());
    EXPECT_TRUE(same_parameters(model, loaded));
    save_checkpoint(loaded, dir / "b.vggw");
    EXPECT_EQ(read_all(dir / "a.vggw"), read_all(dir / "b.vggw"));
}

TEST(Checkpoint, InventoryListsEveryTensorInOrder) {
    TempDir dir;
    const Model model(ModelConfig::vgg_mini());
    save_checkpoint(model, dir / "m.vggw");
    const auto inv = read_vggw_inventory(dir / "m.vggw");
    const auto params = model.parameters();
    ASSERT_EQ(inv.size(), 32u);
    for (std::size_t i = 0; i < inv.size(); ++i) {
        EXPECT_EQ(inv[i].name, params[i].name);
        EXPECT_EQ(inv[i].shape, params[i].param->value.shape());
    }
}

TEST(Checkpoint, IntegrityErrorsNameTheTensor) {
    TempDir dir;
    const Model model = build_model(ModelConfig::vgg_mini(), 1);
    std::vector<NamedTensor> tensors;
    for (const auto& p : model.parameters()) tensors.push_back({p.name, p.param->value});

    auto expect_integrity = [&](const std::vector<NamedTensor>& t, const std::string& fragment) {
        write_vggw(dir / "x.vggw", t);
        Model target(ModelConfig::vgg_mini());
        try {
            load_interchange(target, dir / "x.vggw");
            FAIL() << "expected IntegrityError mentioning " << fragment;
        } catch (const IntegrityError& e) {
            EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
        }
    };

    auto missing = tensors;
    missing.erase(missing.begin() + 4);
    expect_integrity(missing, "missing tensor 'features.5.weight'");

    auto extra = tensors;
    extra.push_back({"features.99.weight", Tensor32({1})});
    expect_integrity(extra, "unexpected tensor 'features.99.weight'");

    auto reshaped = tensors;
    reshaped[0].tensor = Tensor32({8, 3, 1, 9});
    expect_integrity(reshaped, "'features.0.weight' has shape");

    auto duplicate = tensors;
    duplicate.push_back(tensors[2]);
    expect_integrity(duplicate, "duplicate tensor 'features.2.weight'");
}

TEST(Checkpoint, FailedLoadLeavesModelUntouched) {
    TempDir dir;
    const Model source = build_model(ModelConfig::vgg_mini(), 1);
    std::vector<NamedTensor> tensors;
    for (const auto& p : source.parameters()) tensors.push_back({p.name, p.param->value});
    tensors.pop_back();
    write_vggw(dir / "partial.vggw", tensors);

    Model target = build_model(ModelConfig::vgg_mini(), 2);
    const Model reference = build_model(ModelConfig::vgg_mini(), 2);
    EXPECT_THROW(load_interchange(target, dir / "partial.vggw"), IntegrityError);
    EXPECT_TRUE(same_parameters(target, reference));
}

TEST(Checkpoint, ReplaceHeadAcceptsDifferentClassCount) {
    TempDir dir;
    const Model source = build_model(ModelConfig::vgg_mini({1, 8}, 32, 10), 4);
    save_checkpoint(source, dir / "ten.vggw");
    EXPECT_EQ(checkpoint_num_classes(dir / "ten.vggw", ModelConfig::vgg_mini()), 10u);

    EXPECT_THROW(load_checkpoint(dir / "ten.vggw", ModelConfig::vgg_mini()), IntegrityError);
    const Model tuned = load_checkpoint(dir / "ten.vggw", ModelConfig::vgg_mini(), LoadOptions{true, 3});
    const auto ps = source.parameters(), pt = tuned.parameters();
    for (std::size_t i = 0; i + 2 < pt.size(); ++i) EXPECT_EQ(ps[i].param->value, pt[i].param->value) << pt[i].name;
    EXPECT_EQ(pt[30].param->value.shape(), (Shape{2, 512}));
    for (float b : pt[31].param->value.data()) EXPECT_EQ(b, 0.0f);
    const Model again = load_checkpoint(dir / "ten.vggw", ModelConfig::vgg_mini(), LoadOptions{true, 3});
    EXPECT_EQ(again.parameters()[30].param->value, pt[30].param->value);
}

TEST(Checkpoint, PretrainedVgg16HeadSwap) {
    TempDir dir;
    {
        const Model imagenet(ModelConfig::vgg16(1000));
        ASSERT_EQ(imagenet.param_count(), 138357544u);
        save_checkpoint(imagenet, dir / "vgg16.vggw");
    }
    EXPECT_EQ(read_vggw_inventory(dir / "vgg16.vggw").size(), 32u);
    const Model tuned = load_checkpoint(dir / "vgg16.vggw", ModelConfig::vgg16(2), LoadOptions{true, 0});
    EXPECT_EQ(tuned.param_count(), 134268738u);
}
