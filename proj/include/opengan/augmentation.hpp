#pragma once

#include "opengan/sampler.hpp"

#include <iosfwd>

namespace opengan {

struct AugmentConfig {
    int shots = 1;        // real images per class
    int ratio = 0;        // fake batches per real batch
    double eta = 0.0;     // perturbation scale, in units of sigma_F
    int epochs = 60;
    int batch_size = 8;
    double learning_rate = 1e-3;
    EncoderConfig classifier{32, 8, 3, 2};  // output_dim is set to the class count
    std::uint64_t seed = 0;

    void validate() const;
};

struct FewShotSplit {
    Dataset train;
    Dataset test;
};

/// The test items depend only on `test_seed`, so every shot count and run
/// shares one test set. Training shots come from the remaining items; a
/// smaller shot count is a prefix of a larger one.
FewShotSplit make_few_shot_split(const Dataset& novel, int shots, int test_per_class, std::uint64_t test_seed,
                                 std::uint64_t shot_seed);

/// Fake-batch source for the augmented loop.
struct Augmenter {
    Generator<float>* G = nullptr;
    FeatureExtractor* F = nullptr;
    double sigma_F = 0;
};

struct ClassifierRun {
    double accuracy = 0;
    long real_steps = 0;
    long fake_steps = 0;
    std::uint64_t parameter_hash = 0;
    std::vector<int> fake_labels;  // labels of every fake batch, concatenated
};

/// Softmax cross-entropy training of a small CNN. Per real batch: one step on
/// the real batch, then `ratio` steps on generated batches conditioned on the
/// batch's own features (each perturbed afresh with eta * sigma_F noise) and
/// labelled with the batch's labels. Without an augmenter, or with ratio 0,
/// this is the plain baseline.
ClassifierRun train_classifier(const Dataset& train, const Dataset& test, const AugmentConfig& cfg,
                               const Augmenter* augmenter = nullptr);

double classifier_accuracy(ConvEncoder<float>& net, const Dataset& test);

struct AugmentReport {
    int shots = 0;
    int ratio = 0;
    double eta = 0;
    std::uint64_t seed = 0;
    double baseline = 0;
    double augmented = 0;
};

struct AugmentSweep {
    std::vector<AugmentReport> table;  // every (shots, seed, ratio, eta) cell
    std::vector<AugmentReport> best;   // per shots: argmax over (ratio, eta) of mean accuracy over seeds
    /// per shots: number of seeds whose best cell beats that seed's baseline
    std::map<int, int> seeds_improved;
};

struct SweepSpec {
    std::vector<int> shots{1, 2, 5, 10};
    std::vector<int> ratios{1, 2, 3, 4, 5};
    std::vector<double> etas{0.0, 1.5, 2.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int test_per_class = 20;
    std::uint64_t test_seed = 0;
};

/// Exhaustive sweep; `base` supplies the classifier settings.
AugmentSweep grid_search(const Dataset& novel, const SweepSpec& spec, const AugmentConfig& base,
                         const Augmenter& augmenter, const std::function<void(const AugmentReport&)>& on_cell = {});

/// Table columns: shots, ratio, eta, seed, baseline, augmented.
void write_sweep_table(std::ostream& out, const AugmentSweep& sweep);

}  // namespace opengan
