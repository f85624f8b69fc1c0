#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "vggfire/run_config.hpp"

using namespace vggfire;
using test::TempDir;

namespace {

std::filesystem::path write_ini(const TempDir& dir, const std::string& text, const std::string& name = "run.ini") {
    const auto path = dir / name;
    std::ofstream(path) << text;
    return path;
}

} // namespace

TEST(RunConfig, DefaultsAreValid) {
    const RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.adam.lr, 1e-4);
    EXPECT_EQ(c.model.architecture, Architecture::Vgg16);
    EXPECT_TRUE(c.augment.has_value());
}

TEST(RunConfig, FileOverridesBase) {
    TempDir dir;
    const auto path = write_ini(dir, "[data]\nroot = images\nlayout = dfire4\ntest_fraction = 0.25\n"
                                     "[model]\narch = vgg-mini\nnum_classes = 2\n"
                                     "[optim]\nlr = 0.001\n"
                                     "[augment]\nenabled = false\n"
                                     "[train]\nepochs = 7\nseed = 9\nout = runs/a\n");
    RunConfig base;
    base.batch_size = 4;
    const RunConfig c = load_run_config(path, base);
    EXPECT_EQ(c.data_root, dir / "images");
    EXPECT_EQ(c.layout, Layout::DFire4);
    EXPECT_EQ(c.test_fraction, 0.25);
    EXPECT_EQ(c.model.architecture, Architecture::VggMini);
    EXPECT_EQ(c.model.input_height, 32u);
    EXPECT_EQ(c.adam.lr, 0.001);
    EXPECT_FALSE(c.augment.has_value());
    EXPECT_EQ(c.epochs, 7u);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.out_dir, dir / "runs/a");
    EXPECT_EQ(c.batch_size, 4u);
}

TEST(RunConfig, UnknownKeysAndSectionsRejected) {
    TempDir dir;
    EXPECT_THROW(load_run_config(write_ini(dir, "[train]\nepoch = 3\n")), ConfigError);
    EXPECT_THROW(load_run_config(write_ini(dir, "[schedule]\nstep = 3\n")), ConfigError);
    EXPECT_THROW(load_run_config(write_ini(dir, "stray = 1\n")), ConfigError);
    EXPECT_THROW(load_run_config(write_ini(dir, "[train]\nepochs = three\n")), ConfigError);
    EXPECT_THROW(load_run_config(write_ini(dir, "[data]\nstratified = maybe\n")), ConfigError);
    EXPECT_THROW(load_run_config(dir / "missing.ini"), ConfigError);
}

TEST(RunConfig, ValidationRejectsBadValues) {
    RunConfig c;
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.test_fraction = 0.6;
    c.val_fraction = 0.4;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.replace_head = true;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.adam.lr = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, RenderedDocumentLoadsBackUnchanged) {
    TempDir dir;
    RunConfig c;
    c.data_root = dir / "data";
    c.model = ModelConfig::vgg_mini({1, 4}, 64);
    c.epochs = 3;
    c.seed = 123;
    c.adam.lr = 2.5e-4;
    c.augment->hflip_prob = 0.25;
    c.out_dir = dir / "out";
    const std::string text = render_run_config(c);
    const RunConfig back = load_run_config(write_ini(dir, text));
    EXPECT_EQ(render_run_config(back), text);
    EXPECT_EQ(back.model.width.scale(64), 16u);
    EXPECT_EQ(back.augment->hflip_prob, 0.25);
}
