#include "opengan/augmentation.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>

namespace opengan {

using nn::Tensor;
using nn::Var;

void AugmentConfig::validate() const
{
    if (shots < 1)
        throw Error("augment: shots must be >= 1");
    if (ratio < 0)
        throw Error("augment: ratio must be >= 0");
    if (!(eta >= 0))
        throw Error("augment: eta must be >= 0");
    if (epochs < 0 || batch_size < 1 || !(learning_rate > 0))
        throw Error("augment: invalid classifier schedule");
}

FewShotSplit make_few_shot_split(const Dataset& novel, int shots, int test_per_class, std::uint64_t test_seed,
                                 std::uint64_t shot_seed)
{
    if (shots < 1 || test_per_class < 1)
        throw Error("few-shot split: shots and test_per_class must be >= 1");
    std::vector<std::size_t> train_items, test_items;
    for (std::size_t c = 0; c < novel.class_count(); ++c) {
        auto members = novel.class_index[c];
        if (members.size() < static_cast<std::size_t>(shots + test_per_class))
            throw Error("few-shot split: class '" + novel.class_names[c] + "' has " + std::to_string(members.size()) +
                        " images, needs " + std::to_string(shots + test_per_class));
        nn::Rng test_rng(nn::derive_seed(test_seed, "augment.test." + novel.class_names[c]));
        std::shuffle(members.begin(), members.end(), test_rng.engine());
        test_items.insert(test_items.end(), members.begin(), members.begin() + test_per_class);
        std::vector<std::size_t> rest(members.begin() + test_per_class, members.end());
        std::sort(rest.begin(), rest.end());
        nn::Rng shot_rng(nn::derive_seed(shot_seed, "augment.shots." + novel.class_names[c]));
        std::shuffle(rest.begin(), rest.end(), shot_rng.engine());
        train_items.insert(train_items.end(), rest.begin(), rest.begin() + shots);
    }
    std::sort(train_items.begin(), train_items.end());
    std::sort(test_items.begin(), test_items.end());
    return {novel.subset(train_items), novel.subset(test_items)};
}

double classifier_accuracy(ConvEncoder<float>& net, const Dataset& test)
{
    if (test.size() == 0)
        throw Error("classifier_accuracy: empty test set");
    nn::NoGradGuard guard;
    std::size_t correct = 0;
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        std::vector<std::size_t> items(std::min(chunk, test.size() - start));
        std::iota(items.begin(), items.end(), start);
        const auto logits = net.forward(Var<float>(test.stack(items), false), false).value();
        const nn::Index K = logits.dim(1);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto row = logits.array().segment(static_cast<nn::Index>(i) * K, K);
            Eigen::Index best;
            row.maxCoeff(&best);
            correct += static_cast<int>(best) == test.labels[items[i]];
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

ClassifierRun train_classifier(const Dataset& train, const Dataset& test, const AugmentConfig& cfg,
                               const Augmenter* augmenter)
{
    cfg.validate();
    if (train.size() == 0)
        throw Error("train_classifier: empty training set");
    for (const auto& members : train.class_index)
        if (members.empty())
            throw Error("train_classifier: a class has no training images");
    if (test.class_names != train.class_names)
        throw Error("train_classifier: train and test label spaces differ");
    const bool augmented = augmenter && cfg.ratio > 0;
    if (augmented && (!augmenter->G || !augmenter->F))
        throw Error("train_classifier: augmentation needs a generator and a feature extractor");

    EncoderConfig net_cfg = cfg.classifier;
    net_cfg.output_dim = static_cast<int>(train.class_count());
    nn::Rng init_rng(nn::derive_seed(cfg.seed, "augment.init"));
    ConvEncoder<float> net(net_cfg, init_rng);
    auto reg = net.registry();
    nn::Adam<float> adam(reg.vars(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
    const int batch_size = static_cast<int>(std::min<std::size_t>(cfg.batch_size, train.size()));
    BatchStream stream(train, batch_size, nn::derive_seed(cfg.seed, "augment.data"), false);
    // kept apart from the data stream so ratio 0 reproduces the baseline exactly
    nn::Rng fake_rng(nn::derive_seed(cfg.seed, "augment.fake"));

    ClassifierRun run;
    auto step = [&](Tensor<float> images, const std::vector<int>& labels) {
        adam.zero_grad();
        auto loss = nn::softmax_cross_entropy(net.forward(Var<float>(std::move(images), false), true), labels);
        nn::backward(loss);
        adam.step();
    };
    for (int epoch = 0; epoch < cfg.epochs; ++epoch)
        for (std::size_t b = 0; b < stream.batches_per_epoch(); ++b) {
            Batch batch = stream.next();
            Tensor<float> features;
            if (augmented)
                features = augmenter->F->extract(batch.images);
            step(std::move(batch.images), batch.labels);
            ++run.real_steps;
            if (!augmented)
                continue;
            for (int r = 0; r < cfg.ratio; ++r) {
                auto f = perturb_feature(features, cfg.eta, augmenter->sigma_F, fake_rng);
                auto z = fake_rng.normal_tensor<float>({features.dim(0), augmenter->G->config().latent_dim});
                step(generate(*augmenter->G, z, f), batch.labels);
                run.fake_labels.insert(run.fake_labels.end(), batch.labels.begin(), batch.labels.end());
                ++run.fake_steps;
            }
        }
    run.accuracy = classifier_accuracy(net, test);
    run.parameter_hash = reg.hash();
    return run;
}

AugmentSweep grid_search(const Dataset& novel, const SweepSpec& spec, const AugmentConfig& base,
                         const Augmenter& augmenter, const std::function<void(const AugmentReport&)>& on_cell)
{
    AugmentSweep sweep;
    for (int shots : spec.shots) {
        std::map<std::pair<int, double>, double> cell_sum;
        int improved = 0;
        for (auto seed : spec.seeds) {
            auto split = make_few_shot_split(novel, shots, spec.test_per_class, spec.test_seed, seed);
            AugmentConfig cfg = base;
            cfg.shots = shots;
            cfg.seed = seed;
            cfg.ratio = 0;
            cfg.eta = 0;
            const double baseline = train_classifier(split.train, split.test, cfg).accuracy;
            double best = -1;
            for (int ratio : spec.ratios)
                for (double eta : spec.etas) {
                    cfg.ratio = ratio;
                    cfg.eta = eta;
                    AugmentReport cell{shots, ratio, eta, seed, baseline,
                                       train_classifier(split.train, split.test, cfg, &augmenter).accuracy};
                    sweep.table.push_back(cell);
                    cell_sum[{ratio, eta}] += cell.augmented;
                    best = std::max(best, cell.augmented);
                    if (on_cell)
                        on_cell(cell);
                }
            improved += best > baseline;
        }
        sweep.seeds_improved[shots] = improved;
        // pick the (ratio, eta) with the best mean over seeds; report its means
        auto arg = std::max_element(cell_sum.begin(), cell_sum.end(),
                                    [](const auto& a, const auto& b) { return a.second < b.second; });
        AugmentReport best{shots, arg->first.first, arg->first.second, 0, 0, 0};
        const double n = static_cast<double>(spec.seeds.size());
        for (const auto& cell : sweep.table)
            if (cell.shots == shots && cell.ratio == best.ratio && cell.eta == best.eta) {
                best.baseline += cell.baseline / n;
                best.augmented += cell.augmented / n;
            }
        sweep.best.push_back(best);
    }
    return sweep;
}

void write_sweep_table(std::ostream& out, const AugmentSweep& sweep)
{
    out << "shots\tratio\teta\tseed\tbaseline\taugmented\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& c : sweep.table)
        out << c.shots << '\t' << c.ratio << '\t' << std::setprecision(2) << c.eta << std::setprecision(4) << '\t'
            << c.seed << '\t' << c.baseline << '\t' << c.augmented << '\n';
}

}  // namespace opengan
