#pragma once

#include "opengan/nn/random.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace opengan {

using Image = Eigen::ArrayXf;  // CHW, values in [-1, 1]

/// Labelled images of one resolution. Labels index `class_names`, which is
/// sorted lexicographically.
struct Dataset {
    int image_size = 0;
    std::vector<std::string> class_names;
    std::vector<Image> images;
    std::vector<int> labels;
    std::vector<std::string> ids;
    std::vector<std::vector<std::size_t>> class_index;

    std::size_t size() const { return images.size(); }
    std::size_t class_count() const { return class_names.size(); }
    int label_of(const std::string& class_name) const;

    void rebuild_index();
    /// Throws when an invariant is broken: pixel range, index coverage, sizes.
    void validate() const;
    /// Stacks the chosen items into [n,3,H,W]; `flips[i]` mirrors item i horizontally.
    nn::Tensor<float> stack(const std::vector<std::size_t>& items,
                            const std::vector<bool>& flips = {}) const;
    Dataset subset(const std::vector<std::size_t>& items) const;
};

struct Batch {
    nn::Tensor<float> images;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
    std::vector<bool> flipped;
};

/// Directory-per-class layout; class and file order are lexicographic.
Dataset load_dataset(const std::filesystem::path& root, int image_size);

struct ClassSplit {
    std::vector<std::string> train_classes;
    std::vector<std::string> novel_classes;
};

/// First `train_class_count` classes in lexicographic order train, the rest are novel.
ClassSplit split_classes(const Dataset& dataset, int train_class_count);
std::pair<Dataset, Dataset> apply_split(const Dataset& dataset, const ClassSplit& split);

/// Plain-text "class<TAB>train|novel" listing.
std::string split_manifest(const ClassSplit& split);
std::uint64_t split_manifest_hash(const ClassSplit& split);
void write_split_manifest(const std::filesystem::path& path, const ClassSplit& split);

/// Sampling without replacement; horizontal flips only when `augment`.
Batch make_batch(const Dataset& dataset, int batch_size, std::uint64_t seed, bool augment);

/// Epoch-wise shuffled batches, reproducible from the seed. The final short
/// batch of an epoch is dropped so every batch has the same size.
class BatchStream {
public:
    BatchStream(const Dataset& dataset, int batch_size, std::uint64_t seed, bool augment);

    Batch next();
    int epoch() const { return epoch_; }
    std::size_t batches_per_epoch() const;

private:
    void reshuffle();

    const Dataset* dataset_;
    std::size_t batch_size_;
    bool augment_;
    nn::Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int epoch_ = 0;
};

/// [-1,1] -> 8-bit, rounding to nearest.
std::uint8_t to_byte(float value);
void save_image(const std::filesystem::path& path, const Image& image, int size);
/// Lays out [n,3,H,W] row-major into a rows x cols grid and writes a raster file.
void save_image_grid(const std::filesystem::path& path, const nn::Tensor<float>& images, int cols);

struct SyntheticSpec {
    int per_class = 60;
    int image_size = 32;
    std::uint64_t seed = 0;
};

/// Ten classes, each a fixed (shape, colour) pair drawn at random position,
/// scale and colour jitter over a random noisy background.
Dataset make_synthetic_shapes(const SyntheticSpec& spec);
void write_dataset(const std::filesystem::path& root, const Dataset& dataset);

}  // namespace opengan
