#include "opengan/data.hpp"

#include <gtest/gtest.h>

#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <fstream>
#include <set>

using namespace opengan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("opengan_test_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_png(const fs::path& path, int h, int w, int seed)
{
    cv::Mat m(h, w, CV_8UC3);
    cv::randu(m, cv::Scalar::all(0), cv::Scalar::all(256));
    m.at<cv::Vec3b>(0, 0) = cv::Vec3b(static_cast<uchar>(seed), 0, 255);
    fs::create_directories(path.parent_path());
    ASSERT_TRUE(cv::imwrite(path.string(), m));
}

Dataset toy_classes(int count, int per_class)
{
    Dataset ds;
    ds.image_size = 4;
    for (int c = 0; c < count; ++c) {
        char name[16];
        std::snprintf(name, sizeof name, "k%03d", c);
        ds.class_names.emplace_back(name);
        for (int i = 0; i < per_class; ++i) {
            ds.images.push_back(Image::Constant(48, (c % 10) / 10.0f));
            ds.labels.push_back(c);
            ds.ids.push_back(std::string(name) + "/" + std::to_string(i));
        }
    }
    ds.rebuild_index();
    return ds;
}

}  // namespace

TEST(Data, LoadsDirectoryPerClass)
{
    auto root = scratch("load");
    for (const char* cls : {"b", "a"})
        for (int i = 0; i < 3; ++i)
            write_png(root / cls / ("img" + std::to_string(i) + ".png"), 40, 50, i);
    fs::create_directories(root / "a");
    std::ofstream(root / "a" / "notes.txt") << "skip me";

    auto ds = load_dataset(root, 32);
    EXPECT_EQ(ds.size(), 6u);
    EXPECT_EQ(ds.class_count(), 2u);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.ids.front(), "a/img0.png");
    for (const auto& img : ds.images) {
        EXPECT_EQ(img.size(), 3 * 32 * 32);
        EXPECT_GE(img.minCoeff(), -1.0f);
        EXPECT_LE(img.maxCoeff(), 1.0f);
    }
    auto again = load_dataset(root, 32);
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_TRUE((ds.images[i] == again.images[i]).all());
}

TEST(Data, LoadErrors)
{
    EXPECT_THROW(load_dataset(fs::temp_directory_path() / "opengan_no_such_root", 32), Error);
    auto empty = scratch("empty");
    EXPECT_THROW(load_dataset(empty, 32), Error);
    fs::create_directories(empty / "cls");
    EXPECT_THROW(load_dataset(empty, 32), Error);
    std::ofstream(empty / "cls" / "broken.png") << "not a png";
    EXPECT_THROW(load_dataset(empty, 32), Error);
}

TEST(Data, RoundTripWithinQuantisation)
{
    auto root = scratch("roundtrip");
    write_png(root / "x" / "0.png", 16, 16, 3);
    auto ds = load_dataset(root, 16);
    cv::Mat src = cv::imread((root / "x" / "0.png").string(), cv::IMREAD_COLOR);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) {
                const int back = to_byte(ds.images[0][(c * 16 + y) * 16 + x]);
                EXPECT_LE(std::abs(back - src.at<cv::Vec3b>(y, x)[2 - c]), 1);
            }
    save_image(root / "out.png", ds.images[0], 16);
    auto reread = cv::imread((root / "out.png").string(), cv::IMREAD_COLOR);
    EXPECT_EQ(cv::norm(reread, src, cv::NORM_INF), 0.0);
}

TEST(Data, SplitLexicographicPartition)
{
    auto ds = toy_classes(102, 1);
    auto split = split_classes(ds, 82);
    EXPECT_EQ(split.train_classes.size(), 82u);
    EXPECT_EQ(split.novel_classes.size(), 20u);
    EXPECT_EQ(split.novel_classes.front(), "k082");

    auto two = toy_classes(2, 2);
    auto s2 = split_classes(two, 1);
    EXPECT_EQ(s2.train_classes.size(), 1u);
    EXPECT_EQ(s2.novel_classes.size(), 1u);

    EXPECT_THROW(split_classes(ds, 0), Error);
    EXPECT_THROW(split_classes(ds, 102), Error);

    for (int total = 2; total <= 7; ++total) {
        auto d = toy_classes(total, 2);
        for (int count = 1; count < total; ++count) {
            auto sp = split_classes(d, count);
            auto [train, novel] = apply_split(d, sp);
            std::set<std::string> a(train.ids.begin(), train.ids.end()), b(novel.ids.begin(), novel.ids.end());
            for (const auto& id : a)
                EXPECT_EQ(b.count(id), 0u);
            EXPECT_EQ(a.size() + b.size(), d.size());
            EXPECT_EQ(train.class_count() + novel.class_count(), d.class_count());
            train.validate();
            novel.validate();
        }
    }
}

TEST(Data, SplitIsDeterministic)
{
    auto ds = make_synthetic_shapes({6, 32, 1});
    auto a = split_classes(ds, 8), b = split_classes(ds, 8);
    EXPECT_EQ(split_manifest(a), split_manifest(b));
    EXPECT_EQ(split_manifest_hash(a), split_manifest_hash(b));
    auto [t1, n1] = apply_split(ds, a);
    auto [t2, n2] = apply_split(ds, b);
    EXPECT_EQ(t1.ids, t2.ids);
    EXPECT_EQ(n1.ids, n2.ids);
    EXPECT_EQ(n1.class_names, (std::vector<std::string>{"c08_ring_green", "c09_cross_blue"}));
}

TEST(Data, BatchesReproducibleAndUnaugmented)
{
    auto ds = make_synthetic_shapes({6, 32, 2});
    auto a = make_batch(ds, 48, 7, false), b = make_batch(ds, 48, 7, false);
    EXPECT_EQ(a.images.dim(0), 48);
    EXPECT_EQ(a.indices, b.indices);
    EXPECT_TRUE((a.images.array() == b.images.array()).all());
    const auto per = 3 * 32 * 32;
    for (int k = 0; k < 48; ++k) {
        EXPECT_FALSE(a.flipped[k]);
        EXPECT_TRUE((a.images.array().segment(k * per, per) == ds.images[a.indices[k]]).all());
        EXPECT_EQ(a.labels[k], ds.labels[a.indices[k]]);
    }
    EXPECT_THROW(make_batch(ds, 61, 7, false), Error);
    EXPECT_THROW(make_batch(ds, 0, 7, false), Error);

    auto aug = make_batch(ds, 48, 7, true);
    int flips = 0;
    for (int k = 0; k < 48; ++k) {
        const Image& src = ds.images[aug.indices[k]];
        const float* got = aug.images.data() + k * per;
        if (aug.flipped[k]) {
            ++flips;
            EXPECT_EQ(got[31], src[0]);
        } else {
            EXPECT_EQ(got[0], src[0]);
        }
    }
    EXPECT_GT(flips, 0);
}

TEST(Data, StreamCoversEpoch)
{
    auto ds = make_synthetic_shapes({5, 32, 3});
    BatchStream stream(ds, 10, 11, false);
    EXPECT_EQ(stream.batches_per_epoch(), 5u);
    std::set<std::size_t> seen;
    for (int i = 0; i < 5; ++i)
        for (auto idx : stream.next().indices)
            seen.insert(idx);
    EXPECT_EQ(seen.size(), 50u);
    EXPECT_EQ(stream.epoch(), 0);
    stream.next();
    EXPECT_EQ(stream.epoch(), 1);
}

TEST(Data, SyntheticShapesWellFormed)
{
    auto ds = make_synthetic_shapes({4, 32, 5});
    EXPECT_EQ(ds.class_count(), 10u);
    EXPECT_EQ(ds.size(), 40u);
    EXPECT_NO_THROW(ds.validate());
    EXPECT_TRUE(std::is_sorted(ds.class_names.begin(), ds.class_names.end()));
    auto root = scratch("synthetic");
    write_dataset(root, ds);
    auto back = load_dataset(root, 32);
    EXPECT_EQ(back.ids, ds.ids);
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_LT((back.images[i] - ds.images[i]).abs().maxCoeff(), 1.0f / 127.0f);
}
