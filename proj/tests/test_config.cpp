#include "opengan/config.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace opengan;
using nlohmann::json;

namespace {

std::filesystem::path write_file(const std::string& name, const std::string& text)
{
    const auto p = std::filesystem::temp_directory_path() / ("opengan_cfg_" + name);
    std::ofstream(p) << text;
    return p;
}

std::string error_of(const json& j)
{
    try {
        config_from_json(j);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults)
{
    const auto cfg = parse_config(write_file("empty.json", ""));
    const RunConfig defaults;
    EXPECT_TRUE(cfg == defaults);
    EXPECT_EQ(cfg.gan.lambda, 0.01);
    EXPECT_EQ(cfg.gan.batch_size, 48);
    EXPECT_EQ(cfg.metric.sigma, 10.0);
    EXPECT_EQ(cfg.data.train_classes, 82);
    EXPECT_EQ(cfg.residual_blocks(), 3);
    EXPECT_TRUE(parse_config(write_file("braces.json", "{}")) == defaults);
}

TEST(Config, PartialOverride)
{
    const auto cfg = config_from_json({{"gan", {{"lambda", 0.5}}}, {"seed", 4}});
    EXPECT_EQ(cfg.gan.lambda, 0.5);
    EXPECT_EQ(cfg.gan.learning_rate, 1e-4);
    EXPECT_EQ(cfg.seed, 4u);
}

TEST(Config, RejectsBadValues)
{
    EXPECT_NE(error_of({{"gan", {{"lambda", -1}}}}).find("lambda"), std::string::npos);
    EXPECT_NE(error_of({{"gan", {{"lamda", 1}}}}).find("gan.lamda"), std::string::npos);
    EXPECT_NE(error_of({{"extra", 1}}).find("extra"), std::string::npos);
    EXPECT_NE(error_of({{"metric", {{"sigma", "ten"}}}}).find("metric.sigma"), std::string::npos);
    EXPECT_FALSE(error_of({{"metric", {{"sigma", 0}}}}).empty());
    EXPECT_FALSE(error_of({{"data", {{"image_size", 24}}}}).empty());
    EXPECT_FALSE(error_of({{"networks", {{"norm", "layer"}}}}).empty());
    EXPECT_FALSE(error_of({{"sampler", {{"z_policy", "other"}}}}).empty());
    EXPECT_THROW(parse_config(write_file("broken.json", "{\"gan\": ")), Error);
    EXPECT_THROW(parse_config(write_file("array.json", "[1,2]")), Error);
    EXPECT_THROW(parse_config("/nonexistent/opengan.json"), Error);
}

TEST(Config, RoundTripAndHash)
{
    auto cfg = config_from_json({{"networks", {{"norm", "instance"}}}, {"augment", {{"shots", {1, 2}}}}});
    const auto path = std::filesystem::temp_directory_path() / "opengan_cfg_roundtrip.json";
    save_config(path, cfg);
    const auto back = parse_config(path);
    EXPECT_TRUE(back == cfg);
    EXPECT_EQ(back.hash(), cfg.hash());
    auto other = cfg;
    other.gan.lambda = 0.02;
    EXPECT_NE(other.hash(), cfg.hash());
    EXPECT_EQ(cfg.hash().size(), 16u);
}

TEST(Config, DerivedSections)
{
    auto cfg = config_from_json({{"data", {{"image_size", 64}}}, {"metric", {{"dim", 32}}}, {"seed", 3}});
    EXPECT_EQ(cfg.residual_blocks(), 4);
    const auto net = cfg.network_config();
    EXPECT_EQ(net.resolution, 64);
    EXPECT_EQ(net.embedding_dim, 32);
    const auto m = cfg.metric_config();
    EXPECT_EQ(m.encoder.output_dim, 32);
    EXPECT_EQ(m.encoder.resolution, 64);
    EXPECT_NE(m.seed, cfg.gan_config().seed);
    EXPECT_EQ(cfg.augment_config().classifier.output_dim, 2);
}

TEST(Config, DeskConfigParses)
{
    const auto cfg = parse_config(OPENGAN_DESK_CONFIG);
    EXPECT_EQ(cfg.data.train_classes, 8);
    EXPECT_LE(cfg.gan.max_iterations, 10000);
}
