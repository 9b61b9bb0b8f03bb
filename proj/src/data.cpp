#include "opengan/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace fs = std::filesystem;

namespace opengan {

namespace {

bool is_raster(const fs::path& p)
{
    static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm",
                                             ".pnm", ".tif", ".tiff", ".webp"};
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return exts.count(ext) > 0;
}

Image from_mat(const cv::Mat& bgr, int size)
{
    cv::Mat resized;
    if (bgr.rows != size || bgr.cols != size)
        cv::resize(bgr, resized, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    else
        resized = bgr;
    Image img(3 * size * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const auto px = resized.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)  // BGR -> RGB
                img[(c * size + y) * size + x] = px[2 - c] / 127.5f - 1.0f;
        }
    return img;
}

cv::Mat to_mat(const float* chw, int height, int width)
{
    cv::Mat out(height, width, CV_8UC3);
    const int plane = height * width;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            auto& px = out.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c)
                px[2 - c] = to_byte(chw[c * plane + y * width + x]);
        }
    return out;
}

void write_mat(const fs::path& path, const cv::Mat& mat)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat))
        throw Error("could not write image " + path.string());
}

}  // namespace

int Dataset::label_of(const std::string& class_name) const
{
    auto it = std::find(class_names.begin(), class_names.end(), class_name);
    if (it == class_names.end())
        throw Error("unknown class '" + class_name + "'");
    return static_cast<int>(it - class_names.begin());
}

void Dataset::rebuild_index()
{
    class_index.assign(class_names.size(), {});
    for (std::size_t i = 0; i < labels.size(); ++i)
        class_index.at(static_cast<std::size_t>(labels[i])).push_back(i);
}

void Dataset::validate() const
{
    if (labels.size() != images.size() || ids.size() != images.size())
        throw Error("dataset: images, labels and ids differ in length");
    if (!std::is_sorted(class_names.begin(), class_names.end()))
        throw Error("dataset: class names must be sorted");
    const auto expected = static_cast<Eigen::Index>(3) * image_size * image_size;
    std::size_t covered = 0;
    for (std::size_t c = 0; c < class_index.size(); ++c) {
        if (class_index[c].empty())
            throw Error("dataset: class '" + class_names[c] + "' has no images");
        for (std::size_t i : class_index[c])
            if (labels.at(i) != static_cast<int>(c))
                throw Error("dataset: class index disagrees with labels");
        covered += class_index[c].size();
    }
    if (class_index.size() != class_names.size() || covered != images.size())
        throw Error("dataset: class index does not cover every item exactly once");
    for (const auto& img : images) {
        if (img.size() != expected)
            throw Error("dataset: image of wrong size");
        if ((img < -1.0f).any() || (img > 1.0f).any())
            throw Error("dataset: pixel outside [-1,1]");
    }
}

nn::Tensor<float> Dataset::stack(const std::vector<std::size_t>& items, const std::vector<bool>& flips) const
{
    const int s = image_size;
    const nn::Index per = 3 * s * s;
    nn::Tensor<float> out(nn::Shape{static_cast<nn::Index>(items.size()), 3, s, s});
    for (std::size_t k = 0; k < items.size(); ++k) {
        const Image& img = images.at(items[k]);
        float* dst = out.data() + static_cast<nn::Index>(k) * per;
        if (!flips.empty() && flips[k]) {
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x)
                        dst[(c * s + y) * s + x] = img[(c * s + y) * s + (s - 1 - x)];
        } else {
            std::copy(img.data(), img.data() + per, dst);
        }
    }
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& items) const
{
    std::set<int> used;
    for (std::size_t i : items)
        used.insert(labels.at(i));
    Dataset out;
    out.image_size = image_size;
    std::vector<int> remap(class_names.size(), -1);
    for (int c : used) {
        remap[static_cast<std::size_t>(c)] = static_cast<int>(out.class_names.size());
        out.class_names.push_back(class_names[static_cast<std::size_t>(c)]);
    }
    for (std::size_t i : items) {
        out.images.push_back(images[i]);
        out.labels.push_back(remap[static_cast<std::size_t>(labels[i])]);
        out.ids.push_back(ids[i]);
    }
    out.rebuild_index();
    return out;
}

Dataset load_dataset(const fs::path& root, int image_size)
{
    if (image_size < 1)
        throw Error("image_size must be positive");
    if (!fs::is_directory(root))
        throw Error("dataset root '" + root.string() + "' does not exist or is not a directory");
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory())
            class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty())
        throw Error("dataset root '" + root.string() + "' has no class subdirectories");

    Dataset ds;
    ds.image_size = image_size;
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && is_raster(entry.path()))
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw Error("class directory '" + dir.string() + "' contains no images");
        const int label = static_cast<int>(ds.class_names.size());
        ds.class_names.push_back(dir.filename().string());
        for (const auto& file : files) {
            cv::Mat mat = cv::imread(file.string(), cv::IMREAD_COLOR);
            if (mat.empty())
                throw Error("could not decode image '" + file.string() + "'");
            ds.images.push_back(from_mat(mat, image_size));
            ds.labels.push_back(label);
            ds.ids.push_back(dir.filename().string() + "/" + file.filename().string());
        }
    }
    ds.rebuild_index();
    ds.validate();
    return ds;
}

ClassSplit split_classes(const Dataset& dataset, int train_class_count)
{
    const int total = static_cast<int>(dataset.class_count());
    if (train_class_count <= 0 || train_class_count >= total)
        throw Error("train_class_count must be in (0, " + std::to_string(total) + "), got " +
                    std::to_string(train_class_count));
    std::vector<std::string> names = dataset.class_names;
    std::sort(names.begin(), names.end());
    ClassSplit split;
    split.train_classes.assign(names.begin(), names.begin() + train_class_count);
    split.novel_classes.assign(names.begin() + train_class_count, names.end());
    return split;
}

std::pair<Dataset, Dataset> apply_split(const Dataset& dataset, const ClassSplit& split)
{
    const std::set<std::string> train(split.train_classes.begin(), split.train_classes.end());
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& name = dataset.class_names[static_cast<std::size_t>(dataset.labels[i])];
        (train.count(name) ? a : b).push_back(i);
    }
    return {dataset.subset(a), dataset.subset(b)};
}

std::string split_manifest(const ClassSplit& split)
{
    std::string out;
    for (const auto& c : split.train_classes)
        out += c + "\ttrain\n";
    for (const auto& c : split.novel_classes)
        out += c + "\tnovel\n";
    return out;
}

std::uint64_t split_manifest_hash(const ClassSplit& split)
{
    const std::string text = split_manifest(split);
    return nn::fnv1a(text.data(), text.size());
}

void write_split_manifest(const fs::path& path, const ClassSplit& split)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw Error("could not write split manifest " + path.string());
    out << split_manifest(split);
}

Batch make_batch(const Dataset& dataset, int batch_size, std::uint64_t seed, bool augment)
{
    if (batch_size < 1)
        throw Error("batch_size must be >= 1");
    if (static_cast<std::size_t>(batch_size) > dataset.size())
        throw Error("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                    std::to_string(dataset.size()) + " (sampling is without replacement)");
    nn::Rng rng(seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    Batch b;
    b.indices.assign(order.begin(), order.begin() + batch_size);
    for (std::size_t i : b.indices) {
        b.labels.push_back(dataset.labels[i]);
        b.flipped.push_back(augment && rng.uniform() < 0.5);
    }
    b.images = dataset.stack(b.indices, b.flipped);
    return b;
}

BatchStream::BatchStream(const Dataset& dataset, int batch_size, std::uint64_t seed, bool augment)
    : dataset_(&dataset), batch_size_(static_cast<std::size_t>(batch_size)), augment_(augment), rng_(seed)
{
    if (batch_size < 1)
        throw Error("batch_size must be >= 1");
    if (batch_size_ > dataset.size())
        throw Error("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                    std::to_string(dataset.size()));
    order_.resize(dataset.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
}

std::size_t BatchStream::batches_per_epoch() const { return order_.size() / batch_size_; }

void BatchStream::reshuffle()
{
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
    ++epoch_;
}

Batch BatchStream::next()
{
    if (cursor_ + batch_size_ > order_.size())
        reshuffle();
    Batch b;
    b.indices.assign(order_.begin() + static_cast<long>(cursor_),
                     order_.begin() + static_cast<long>(cursor_ + batch_size_));
    cursor_ += batch_size_;
    for (std::size_t i : b.indices) {
        b.labels.push_back(dataset_->labels[i]);
        b.flipped.push_back(augment_ && rng_.uniform() < 0.5);
    }
    b.images = dataset_->stack(b.indices, b.flipped);
    return b;
}

std::uint8_t to_byte(float value)
{
    const float v = std::round((value + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
}

void save_image(const fs::path& path, const Image& image, int size)
{
    write_mat(path, to_mat(image.data(), size, size));
}

void save_image_grid(const fs::path& path, const nn::Tensor<float>& images, int cols)
{
    const auto n = images.dim(0);
    const int h = static_cast<int>(images.dim(2)), w = static_cast<int>(images.dim(3));
    cols = std::max(1, std::min<int>(cols, static_cast<int>(n)));
    const int rows = static_cast<int>((n + cols - 1) / cols);
    cv::Mat grid(rows * h, cols * w, CV_8UC3, cv::Scalar(0, 0, 0));
    for (nn::Index i = 0; i < n; ++i) {
        cv::Mat tile = to_mat(images.data() + i * 3 * h * w, h, w);
        const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
        tile.copyTo(grid(cv::Rect(c * w, r * h, w, h)));
    }
    write_mat(path, grid);
}

namespace {

struct ShapeClass {
    const char* name;
    int shape;  // 0 circle, 1 square, 2 triangle, 3 cross, 4 ring
    std::array<float, 3> rgb;
};

// Novel classes (the last two) recombine shapes and colours seen in training.
const std::array<ShapeClass, 10> kShapeClasses{{
    {"c00_circle_red", 0, {0.90f, 0.15f, 0.15f}},
    {"c01_square_green", 1, {0.15f, 0.80f, 0.20f}},
    {"c02_triangle_blue", 2, {0.20f, 0.30f, 0.95f}},
    {"c03_cross_yellow", 3, {0.95f, 0.90f, 0.15f}},
    {"c04_ring_magenta", 4, {0.90f, 0.20f, 0.85f}},
    {"c05_circle_cyan", 0, {0.15f, 0.85f, 0.90f}},
    {"c06_square_orange", 1, {1.00f, 0.55f, 0.10f}},
    {"c07_triangle_white", 2, {0.95f, 0.95f, 0.95f}},
    {"c08_ring_green", 4, {0.15f, 0.80f, 0.20f}},
    {"c09_cross_blue", 3, {0.20f, 0.30f, 0.95f}},
}};

bool inside(int shape, float dx, float dy, float r)
{
    const float dist = std::sqrt(dx * dx + dy * dy);
    switch (shape) {
    case 0: return dist <= r;
    case 1: return std::max(std::abs(dx), std::abs(dy)) <= 0.85f * r;
    case 2: return dy >= -r && dy <= 0.7f * r && std::abs(dx) <= r * (dy + r) / (1.7f * r);
    case 3: return (std::abs(dx) <= 0.3f * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3f * r && std::abs(dx) <= r);
    default: return dist <= r && dist >= 0.55f * r;
    }
}

}  // namespace

Dataset make_synthetic_shapes(const SyntheticSpec& spec)
{
    if (spec.per_class < 1 || spec.image_size < 8)
        throw Error("synthetic dataset needs per_class >= 1 and image_size >= 8");
    nn::Rng rng(spec.seed);
    const int s = spec.image_size;
    Dataset ds;
    ds.image_size = s;
    for (const auto& cls : kShapeClasses)
        ds.class_names.emplace_back(cls.name);
    for (std::size_t c = 0; c < kShapeClasses.size(); ++c) {
        const auto& cls = kShapeClasses[c];
        for (int k = 0; k < spec.per_class; ++k) {
            const float r = static_cast<float>(s * (0.18 + 0.14 * rng.uniform()));
            const float cx = static_cast<float>(r + (s - 2 * r) * rng.uniform());
            const float cy = static_cast<float>(r + (s - 2 * r) * rng.uniform());
            std::array<float, 3> bg{}, fg{};
            for (int ch = 0; ch < 3; ++ch) {
                bg[ch] = static_cast<float>(0.45 * rng.uniform());
                fg[ch] = std::clamp(cls.rgb[ch] + static_cast<float>(0.08 * rng.normal()), 0.0f, 1.0f);
            }
            Image img(3 * s * s);
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) {
                    // 2x2 supersampled coverage
                    int hits = 0;
                    for (int sy = 0; sy < 2; ++sy)
                        for (int sx = 0; sx < 2; ++sx)
                            hits += inside(cls.shape, x + 0.25f + 0.5f * sx - cx, y + 0.25f + 0.5f * sy - cy, r);
                    const float a = hits / 4.0f;
                    for (int ch = 0; ch < 3; ++ch) {
                        const float noise = static_cast<float>(0.04 * rng.normal());
                        const float v = std::clamp(a * fg[ch] + (1 - a) * bg[ch] + noise, 0.0f, 1.0f);
                        // quantise like a stored 8-bit image
                        img[(ch * s + y) * s + x] = std::round(v * 255.0f) / 127.5f - 1.0f;
                    }
                }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(static_cast<int>(c));
            char id[64];
            std::snprintf(id, sizeof id, "%s/%04d.png", cls.name, k);
            ds.ids.emplace_back(id);
        }
    }
    ds.rebuild_index();
    ds.validate();
    return ds;
}

void write_dataset(const fs::path& root, const Dataset& dataset)
{
    for (std::size_t i = 0; i < dataset.size(); ++i)
        save_image(root / dataset.ids[i], dataset.images[i], dataset.image_size);
}

}  // namespace opengan
