#include "opengan/augmentation.hpp"
#include "opengan/config.hpp"
#include "opengan/evaluation.hpp"
#include "opengan/interpolation.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#ifndef OPENGAN_REVISION
#define OPENGAN_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace opengan;

namespace {

struct Common {
    std::string config_path;
    std::string output_dir;
    long long seed = -1;
};

RunConfig load_config(const Common& c)
{
    RunConfig cfg = c.config_path.empty() ? config_from_json(json::object()) : parse_config(c.config_path);
    if (!c.output_dir.empty())
        cfg.output_dir = c.output_dir;
    if (c.seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(c.seed);
    cfg.validate();
    return cfg;
}

json provenance(const RunConfig& cfg)
{
    return {{"config_hash", cfg.hash()}, {"revision", OPENGAN_REVISION}, {"seed", cfg.seed}};
}

void write_manifest(const RunConfig& cfg, const std::string& command, const json& extra = json::object())
{
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    json m = provenance(cfg);
    m["command"] = command;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream when;
    when << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    m["finished_utc"] = when.str();
    m["config"] = cfg.to_json();
    m["outputs"] = extra;
    std::ofstream(dir / ("manifest_" + command + ".json")) << m.dump(2) << "\n";
}

struct Partitions {
    Dataset all, train, novel;
    ClassSplit split;
};

Partitions load_partitions(const RunConfig& cfg)
{
    if (cfg.data.root.empty())
        throw Error("data.root is not set in the config");
    Partitions p;
    p.all = load_dataset(cfg.data.root, cfg.data.image_size);
    p.split = split_classes(p.all, cfg.data.train_classes);
    std::tie(p.train, p.novel) = apply_split(p.all, p.split);
    return p;
}

Dataset pick_partition(const Partitions& p, const std::string& name)
{
    if (name == "train")
        return p.train;
    if (name == "novel")
        return p.novel;
    throw Error("partition must be 'train' or 'novel', got '" + name + "'");
}

fs::path default_gan_checkpoint(const RunConfig& cfg) { return fs::path(cfg.output_dir) / "gan" / "gan_final.ckpt"; }

// Evenly spread items, at most `count`, in dataset order.
std::vector<std::size_t> spread_items(const Dataset& d, int count)
{
    std::vector<std::size_t> out;
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), d.size());
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(i * d.size() / n);
    return out;
}

std::string stamp(const RunConfig& cfg, const std::string& stem, const std::string& ext)
{
    return stem + "_" + cfg.hash() + ext;
}

int cmd_synthetic(const std::string& out, int per_class, int size, std::uint64_t seed)
{
    auto ds = make_synthetic_shapes({per_class, size, seed});
    write_dataset(out, ds);
    std::cout << "wrote " << ds.size() << " images in " << ds.class_count() << " classes to " << out << "\n";
    return 0;
}

int cmd_train_metric(const RunConfig& cfg)
{
    auto parts = load_partitions(cfg);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    write_split_manifest(dir / "split.txt", parts.split);
    save_config(dir / "config.json", cfg);
    std::cout << "metric training on " << parts.train.size() << " images, " << parts.train.class_count()
              << " classes (novel: " << parts.novel.class_count() << ")\n";
    std::ofstream log(dir / "metric_log.jsonl");
    const auto mcfg = cfg.metric_config();
    auto result = train_metric(parts.train, mcfg, [&](const MetricEpochLog& e) {
        json line = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"cache_refreshed", e.cache_refreshed},
                     {"skipped", e.skipped}, {"config_hash", cfg.hash()}};
        log << line.dump() << "\n";
        log.flush();
        std::cerr << "[metric] epoch " << e.epoch << " loss " << e.mean_loss << (e.cache_refreshed ? " (cache refreshed)" : "")
                  << "\n";
    });
    save_checkpoint(dir / "metric.ckpt",
                    metric_checkpoint(result.extractor, mcfg, split_manifest_hash(parts.split), provenance(cfg)));

    json outputs = {{"checkpoint", (dir / "metric.ckpt").string()}, {"log", (dir / "metric_log.jsonl").string()}};
    if (parts.novel.size() >= 2) {
        const auto f = as_rows(result.extractor.extract(parts.novel));
        const auto r = retrieval_recall(f, parts.novel.labels, cfg.eval.retrieval_k);
        const double base = permutation_baseline(f, parts.novel.labels, cfg.eval.retrieval_k, cfg.eval.permutation_trials,
                                                 nn::derive_seed(cfg.seed, "eval.permutation"));
        std::cout << "novel recall@" << cfg.eval.retrieval_k << " " << r.recall << " (permutation baseline " << base
                  << ", skipped " << r.skipped << ")\n";
        outputs["novel_recall"] = r.recall;
        outputs["novel_permutation_baseline"] = base;
    }
    write_manifest(cfg, "train-metric", outputs);
    return 0;
}

int cmd_train_gan(const RunConfig& cfg, const std::string& metric_path)
{
    if (metric_path.empty() || !fs::exists(metric_path))
        throw Error("metric checkpoint '" + metric_path +
                    "' not found. Hint: run `opengan train-metric --config <file>` first and pass its metric.ckpt "
                    "via --metric-checkpoint");
    auto parts = load_partitions(cfg);
    auto ckpt = load_checkpoint(metric_path);
    const auto expected = nn::hex64(split_manifest_hash(parts.split));
    if (ckpt.header.value("split_manifest_hash", "") != expected)
        throw Error("metric checkpoint was trained on a different class split (" +
                    ckpt.header.value("split_manifest_hash", "?") + " vs " + expected + ")");
    auto F = load_feature_extractor(ckpt);
    const fs::path dir = fs::path(cfg.output_dir) / "gan";
    const auto gcfg = cfg.gan_config();
    const auto start = std::chrono::steady_clock::now();
    auto result = train_gan(parts.train, F, cfg.network_config(), gcfg, dir, provenance(cfg), [&](const GanMetrics& m) {
        if (m.iteration % 100 == 0 || m.iteration == gcfg.max_iterations) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::cerr << "[gan] it " << m.iteration << " loss_D " << m.loss_d << " loss_G_adv " << m.loss_g_adv
                      << " feature_mse " << m.feature_mse << " (" << std::fixed << std::setprecision(1) << secs << "s)\n"
                      << std::defaultfloat;
        }
    });
    std::cout << "GAN checkpoint: " << result.final_checkpoint.string() << "\n";
    write_manifest(cfg, "train-gan", {{"checkpoint", result.final_checkpoint.string()},
                                      {"metrics", (dir / "metrics.jsonl").string()}});
    return 0;
}

struct SampleArgs {
    std::string checkpoint, mode = "source", partition = "novel", class_name, out, z_policy, source_dir;
    int sources = 4, count = -1;
    bool allow_untrained = false;
};

int cmd_sample(const RunConfig& cfg, const SampleArgs& a)
{
    const fs::path ckpt = a.checkpoint.empty() ? default_gan_checkpoint(cfg) : fs::path(a.checkpoint);
    auto models = load_gan_for_sampling(ckpt, a.allow_untrained);
    const int count = a.count > 0 ? a.count : cfg.sampler.count;
    const auto policy = parse_z_policy(a.z_policy.empty() ? cfg.sampler.z_policy : a.z_policy);
    const auto seed = nn::derive_seed(cfg.seed, "sample");
    json spec = {{"mode", a.mode}, {"count", count}, {"seed", seed}, {"uncurated", true}};
    nn::Tensor<float> grid;
    int cols = count;
    if (a.mode == "source") {
        Dataset d;
        if (a.source_dir.empty()) {
            d = pick_partition(load_partitions(cfg), a.partition);
        } else {
            // out-of-domain sources: any class-per-directory image folder
            d = load_dataset(a.source_dir, cfg.data.image_size);
            spec["source_dir"] = a.source_dir;
        }
        const auto items = spread_items(d, a.sources);
        auto s = sample_from_source(models.G, models.F, d.stack(items), policy, count, seed);
        // first column is the real source, then its generations
        const nn::Index per = s.images.size() / s.images.dim(0);
        const nn::Index S = static_cast<nn::Index>(items.size());
        grid = nn::Tensor<float>(nn::Shape{S * (count + 1), s.images.dim(1), s.images.dim(2), s.images.dim(3)});
        const auto src = d.stack(items);
        for (nn::Index i = 0; i < S; ++i) {
            grid.array().segment(i * (count + 1) * per, per) = src.array().segment(i * per, per);
            grid.array().segment((i * (count + 1) + 1) * per, count * per) = s.images.array().segment(i * count * per, count * per);
        }
        cols = count + 1;
        json ids = json::array();
        for (auto i : items)
            ids.push_back(d.ids[i]);
        if (a.source_dir.empty())
            spec["partition"] = a.partition;
        spec["sources"] = ids;
        spec["z_policy"] = to_string(policy);
        spec["layout"] = "rows = sources; column 0 = real source";
    } else if (a.mode == "class-mean") {
        auto parts = load_partitions(cfg);
        const auto d = pick_partition(parts, a.partition);
        auto stats = compute_feature_stats(models.F, d, a.partition);
        std::vector<std::string> classes = a.class_name.empty() ? d.class_names : std::vector<std::string>{a.class_name};
        std::vector<nn::Tensor<float>> rows;
        for (std::size_t k = 0; k < classes.size(); ++k)
            rows.push_back(sample_class_mean(models.G, stats, classes[k], cfg.sampler.std_scale, count,
                                             nn::derive_seed(seed, classes[k]))
                               .images);
        const nn::Index per = rows[0].size() / rows[0].dim(0);
        grid = nn::Tensor<float>(nn::Shape{static_cast<nn::Index>(rows.size()) * count, rows[0].dim(1), rows[0].dim(2),
                                       rows[0].dim(3)});
        for (std::size_t k = 0; k < rows.size(); ++k)
            grid.array().segment(static_cast<nn::Index>(k) * count * per, count * per) = rows[k].array();
        spec["partition"] = a.partition;
        spec["mode_name"] = a.partition == "train" ? "T-SM" : "N-SM";
        spec["classes"] = classes;
        spec["std_scale"] = cfg.sampler.std_scale;
        spec["layout"] = "rows = classes";
    } else if (a.mode == "random") {
        auto parts = load_partitions(cfg);
        auto stats = compute_feature_stats(models.F, parts.train, "train");
        grid = sample_random_feature(models.G, stats, count * a.sources, seed).images;
        spec["global_mean"] = stats.global_mean;
        spec["sigma_F"] = stats.global_std;
    } else {
        throw Error("unknown sample mode '" + a.mode + "' (source, class-mean, random)");
    }
    const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) / "samples" / stamp(cfg, "samples_" + a.mode, ".png")
                                       : fs::path(a.out);
    save_image_grid(out, grid, cols);
    spec["image"] = out.string();
    spec["checkpoint"] = ckpt.string();
    json sidecar = provenance(cfg);
    sidecar["spec"] = spec;
    std::ofstream(fs::path(out).replace_extension(".json")) << sidecar.dump(2) << "\n";
    std::cout << "wrote " << out.string() << "\n";
    write_manifest(cfg, "sample", spec);
    return 0;
}

struct InterpArgs {
    std::string checkpoint, attribute, labels, samples_file, source = "generated", space = "both", partition = "novel";
    bool grid = false;
    int steps = 5, export_samples = 0;
    std::vector<float> scales{-3, -1.5, 0, 1.5, 3};
    bool allow_untrained = false;
};

void write_latent_table(const fs::path& path, const std::vector<std::string>& ids, const nn::Tensor<float>& z,
                        const nn::Tensor<float>& f)
{
    std::vector<EmbeddingRecord> records;
    const nn::Index n = z.dim(0), zd = z.size() / n, fd = f.size() / n;
    for (nn::Index i = 0; i < n; ++i) {
        EmbeddingRecord r{ids[static_cast<std::size_t>(i)], std::to_string(zd), {}};
        for (nn::Index j = 0; j < zd; ++j)
            r.values.push_back(z[i * zd + j]);
        for (nn::Index j = 0; j < fd; ++j)
            r.values.push_back(f[i * fd + j]);
        records.push_back(std::move(r));
    }
    write_embeddings(path, records);
}

int cmd_interpolate(const RunConfig& cfg, const InterpArgs& a)
{
    const fs::path ckpt = a.checkpoint.empty() ? default_gan_checkpoint(cfg) : fs::path(a.checkpoint);
    auto models = load_gan_for_sampling(ckpt, a.allow_untrained);
    const fs::path dir = fs::path(cfg.output_dir) / "interpolation";
    const auto seed = nn::derive_seed(cfg.seed, "interpolate");
    nn::Rng rng(seed);
    const nn::Index latent = models.G.config().latent_dim;
    json outputs = json::object();

    if (a.grid) {
        auto parts = load_partitions(cfg);
        const auto d = pick_partition(parts, a.partition);
        if (d.size() < 2)
            throw Error("interpolation needs at least 2 images in the partition");
        const auto first = d.class_index.front().front(), last = d.class_index.back().back();
        const auto fa = models.F.extract(d.stack({first})), fb = models.F.extract(d.stack({last}));
        const auto za = rng.normal_tensor<float>({1, latent}), zb = rng.normal_tensor<float>({1, latent});
        auto grid = interpolate_2d(models.G, za, zb, fa, fb, a.steps);
        const auto out = dir / stamp(cfg, "grid", ".png");
        save_image_grid(out, grid.images, a.steps);
        json meta = provenance(cfg);
        meta["scheme"] = grid.scheme;
        meta["layout"] = "columns = latent z_a -> z_b, rows = feature f_a -> f_b";
        meta["feature_sources"] = {d.ids[first], d.ids[last]};
        meta["steps"] = a.steps;
        std::ofstream(fs::path(out).replace_extension(".json")) << meta.dump(2) << "\n";
        std::cout << "wrote " << out.string() << "\n";
        outputs["grid"] = out.string();
    }

    if (a.export_samples > 0) {
        // generated samples for an external attribute predictor
        auto parts = load_partitions(cfg);
        auto stats = compute_feature_stats(models.F, parts.train, "train");
        auto s = sample_random_feature(models.G, stats, a.export_samples, seed);
        std::vector<std::string> ids;
        for (int i = 0; i < a.export_samples; ++i) {
            std::ostringstream id;
            id << "gen_" << std::setw(5) << std::setfill('0') << i;
            ids.push_back(id.str());
            Image img = s.images.array().segment(i * (s.images.size() / a.export_samples), s.images.size() / a.export_samples);
            save_image(dir / "generated" / (ids.back() + ".png"), img, static_cast<int>(s.images.dim(2)));
        }
        write_latent_table(dir / "generated" / "latents.tsv", ids, s.z, s.features);
        std::cout << "wrote " << a.export_samples << " samples and latents.tsv to " << (dir / "generated").string() << "\n";
        outputs["exported_samples"] = (dir / "generated").string();
    }

    if (!a.attribute.empty()) {
        if (a.labels.empty())
            throw Error("--attribute needs --labels <file>");
        const auto labels = read_attribute_labels(a.labels);
        Eigen::MatrixXf Z, Fm;
        std::vector<AttributeLabels> rows;
        if (a.source == "generated") {
            const fs::path table = a.samples_file.empty() ? dir / "generated" / "latents.tsv" : fs::path(a.samples_file);
            const auto records = read_embeddings(table);
            const int zd = static_cast<int>(latent);
            for (const auto& r : records) {
                auto it = labels.find(r.id);
                if (it == labels.end())
                    continue;
                rows.push_back(it->second);
                Z.conservativeResize(static_cast<Eigen::Index>(rows.size()), zd);
                Fm.conservativeResize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(r.values.size()) - zd);
                for (int j = 0; j < zd; ++j)
                    Z(Z.rows() - 1, j) = r.values[static_cast<std::size_t>(j)];
                for (Eigen::Index j = 0; j < Fm.cols(); ++j)
                    Fm(Fm.rows() - 1, j) = r.values[static_cast<std::size_t>(zd + j)];
            }
        } else if (a.source == "real") {
            // real images have no latent code: only the feature direction exists
            auto parts = load_partitions(cfg);
            const auto f = as_rows(models.F.extract(parts.all));
            std::vector<Eigen::Index> keep;
            for (std::size_t i = 0; i < parts.all.size(); ++i) {
                auto it = labels.find(parts.all.ids[i]);
                if (it == labels.end())
                    continue;
                rows.push_back(it->second);
                keep.push_back(static_cast<Eigen::Index>(i));
            }
            Fm.resize(static_cast<Eigen::Index>(keep.size()), f.cols());
            for (std::size_t k = 0; k < keep.size(); ++k)
                Fm.row(static_cast<Eigen::Index>(k)) = f.row(keep[k]);
            Z.resize(static_cast<Eigen::Index>(keep.size()), 0);
        } else {
            throw Error("--directions-from must be 'generated' or 'real'");
        }
        if (rows.empty())
            throw Error("no labelled samples matched the label file");
        const auto dirs = find_attribute_directions(Z, Fm, rows);
        auto it = std::find_if(dirs.begin(), dirs.end(), [&](const auto& d) { return d.name == a.attribute; });
        if (it == dirs.end())
            throw Error("attribute '" + a.attribute + "' does not occur in the label file");
        const auto z0 = rng.normal_tensor<float>({1, latent});
        nn::Tensor<float> f0(nn::Shape{1, Fm.cols()});
        for (Eigen::Index j = 0; j < Fm.cols(); ++j)
            f0[j] = Fm.colwise().mean()(j);
        json meta = provenance(cfg);
        meta["attribute"] = a.attribute;
        meta["positives"] = it->positives;
        meta["negatives"] = it->negatives;
        meta["sign_convention"] = it->sign_convention;
        meta["directions_from"] = a.source;
        meta["scales"] = a.scales;
        for (auto space : {TraverseSpace::latent, TraverseSpace::feature}) {
            const bool is_latent = space == TraverseSpace::latent;
            const std::string name = is_latent ? "latent" : "feature";
            if (a.space != "both" && a.space != name)
                continue;
            if (is_latent ? it->latent_degenerate : it->feature_degenerate) {
                std::cerr << "warning: " << name << " direction for '" << a.attribute << "' is degenerate; skipped\n";
                meta[name] = "degenerate";
                continue;
            }
            const auto images = traverse(models.G, z0, f0, *it, space, a.scales);
            const auto out = dir / stamp(cfg, "attribute_" + a.attribute + "_" + name, ".png");
            save_image_grid(out, images, static_cast<int>(a.scales.size()));
            meta[name] = out.string();
            std::cout << "wrote " << out.string() << "\n";
        }
        std::ofstream(dir / stamp(cfg, "attribute_" + a.attribute, ".json")) << meta.dump(2) << "\n";
        outputs["attribute"] = meta;
    }
    if (outputs.empty())
        throw Error("nothing to do: pass --grid, --attribute or --export-samples");
    write_manifest(cfg, "interpolate", outputs);
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& export_path, bool allow_untrained)
{
    const fs::path ckpt = checkpoint.empty() ? default_gan_checkpoint(cfg) : fs::path(checkpoint);
    auto models = load_gan_for_sampling(ckpt, allow_untrained);
    auto parts = load_partitions(cfg);
    const auto seed = nn::derive_seed(cfg.seed, "eval");
    json report = provenance(cfg);
    report["checkpoint"] = ckpt.string();
    report["embedder"] = "frozen metric extractor F (internal scale, not comparable to published FID values)";

    std::cout << std::fixed << std::setprecision(4);
    std::cout << "partition  mode  FID       intra-FID  matched_mse  deranged_mse  ratio\n";
    for (const std::string name : {"train", "novel"}) {
        const auto& d = name == "train" ? parts.train : parts.novel;
        if (d.size() < 2)
            continue;
        // N-RF / T-RF style: one generation per real image, conditioned on its own feature
        const auto items = spread_items(d, cfg.eval.fid_samples);
        const auto real = d.stack(items);
        auto s = sample_from_source(models.G, models.F, real, ZPolicy::sampled, 1, nn::derive_seed(seed, name));
        const auto real_f = as_rows(s.features);
        const auto fake_f = as_rows(models.F.extract(s.images));
        const double f = fid_from_features(real_f, fake_f);
        const auto fm = feature_match_from_features(real_f, fake_f, nn::derive_seed(seed, name + ".derange"));

        // class-mean sampling per class for intra-FID
        auto stats = compute_feature_stats(models.F, d, name);
        std::map<std::string, std::pair<Eigen::MatrixXf, Eigen::MatrixXf>> per_class;
        for (std::size_t c = 0; c < d.class_count(); ++c) {
            const auto& members = d.class_index[c];
            const auto gen = sample_class_mean(models.G, stats, d.class_names[c], cfg.sampler.std_scale,
                                               cfg.eval.samples_per_class, nn::derive_seed(seed, d.class_names[c]));
            per_class[d.class_names[c]] = {as_rows(models.F.extract(d.stack(members))), as_rows(models.F.extract(gen.images))};
        }
        const auto intra = intra_fid(per_class, cfg.eval.min_class_samples);
        std::cout << std::left << std::setw(11) << name << std::setw(6) << (name == "train" ? "T" : "N") << std::setw(10)
                  << f << std::setw(11) << intra.mean << std::setw(13) << fm.matched_mse << std::setw(14)
                  << fm.baseline_mse << fm.matched_mse / fm.baseline_mse << "\n";
        json per = json::object();
        for (const auto& c : intra.classes)
            per[c.name] = c.fid;
        report[name] = {{"fid", f},
                        {"intra_fid", intra.mean},
                        {"intra_fid_per_class", per},
                        {"intra_fid_skipped", intra.skipped},
                        {"samples_per_class", cfg.eval.samples_per_class},
                        {"matched_mse", fm.matched_mse},
                        {"deranged_mse", fm.baseline_mse},
                        {"pairs", fm.pairs}};
    }
    if (parts.novel.size() >= 2) {
        const auto f = as_rows(models.F.extract(parts.novel));
        const auto r = retrieval_recall(f, parts.novel.labels, cfg.eval.retrieval_k);
        const double base = permutation_baseline(f, parts.novel.labels, cfg.eval.retrieval_k, cfg.eval.permutation_trials,
                                                 nn::derive_seed(cfg.seed, "eval.permutation"));
        std::cout << "novel recall@" << cfg.eval.retrieval_k << " " << r.recall << " (permutation baseline " << base << ")\n";
        report["novel_recall"] = r.recall;
        report["novel_permutation_baseline"] = base;
    }
    if (!export_path.empty()) {
        export_embeddings(models.F, parts.all, export_path);
        std::cout << "embeddings written to " << export_path << "\n";
        report["embeddings"] = export_path;
    }
    const fs::path out = fs::path(cfg.output_dir) / stamp(cfg, "eval", ".json");
    fs::create_directories(out.parent_path());
    std::ofstream(out) << report.dump(2) << "\n";
    write_manifest(cfg, "eval", {{"report", out.string()}});
    return 0;
}

struct AugmentArgs {
    std::string checkpoint;
    int shots = 1, ratio = 5;
    double eta = 2.0;
    long long seed = -1;
    bool allow_untrained = false;
};

int cmd_augment(const RunConfig& cfg, const AugmentArgs& a, bool sweep)
{
    const fs::path ckpt = a.checkpoint.empty() ? default_gan_checkpoint(cfg) : fs::path(a.checkpoint);
    auto models = load_gan_for_sampling(ckpt, a.allow_untrained);
    auto parts = load_partitions(cfg);
    const double sigma_F = compute_feature_stats(models.F, parts.train, "train").global_std;
    Augmenter aug{&models.G, &models.F, sigma_F};
    const auto test_seed = cfg.sweep_spec().test_seed;
    const fs::path dir = fs::path(cfg.output_dir) / "augment";
    fs::create_directories(dir);
    std::cout << std::fixed << std::setprecision(4);
    if (!sweep) {
        AugmentConfig c = cfg.augment_config();
        c.shots = a.shots;
        c.ratio = a.ratio;
        c.eta = a.eta;
        c.seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : cfg.augment.seeds.front();
        auto split = make_few_shot_split(parts.novel, c.shots, cfg.augment.test_per_class, test_seed, c.seed);
        AugmentConfig base = c;
        base.ratio = 0;
        const double baseline = train_classifier(split.train, split.test, base).accuracy;
        const double augmented = train_classifier(split.train, split.test, c, &aug).accuracy;
        std::cout << "real/class  fake/real  eta   baseline  augmented\n"
                  << std::setw(12) << std::left << c.shots << std::setw(11) << c.ratio << std::setw(6)
                  << std::setprecision(2) << c.eta << std::setprecision(4) << std::setw(10) << baseline << augmented << "\n";
        write_manifest(cfg, "augment", {{"shots", c.shots}, {"ratio", c.ratio}, {"eta", c.eta}, {"seed", c.seed},
                                        {"sigma_F", sigma_F}, {"baseline", baseline}, {"augmented", augmented}});
        return 0;
    }
    const SweepSpec spec = cfg.sweep_spec();
    auto result = grid_search(parts.novel, spec, cfg.augment_config(), aug, [](const AugmentReport& r) {
        std::cerr << "[augment] shots " << r.shots << " ratio " << r.ratio << " eta " << r.eta << " seed " << r.seed
                  << " baseline " << r.baseline << " augmented " << r.augmented << "\n";
    });
    const auto table = dir / stamp(cfg, "sweep", ".tsv");
    {
        std::ofstream out(table);
        write_sweep_table(out, result);
    }
    std::cout << "real/class  fake/real  eta   baseline  augmented  seeds_improved\n";
    json best = json::array();
    for (const auto& b : result.best) {
        std::cout << std::left << std::setw(12) << b.shots << std::setw(11) << b.ratio << std::setw(6) << std::setprecision(2)
                  << b.eta << std::setprecision(4) << std::setw(10) << b.baseline << std::setw(11) << b.augmented
                  << result.seeds_improved[b.shots] << "/" << spec.seeds.size() << "\n";
        best.push_back({{"shots", b.shots}, {"ratio", b.ratio}, {"eta", b.eta}, {"baseline", b.baseline},
                        {"augmented", b.augmented}, {"seeds_improved", result.seeds_improved[b.shots]}});
    }
    std::cout << "full table: " << table.string() << "\n";
    write_manifest(cfg, "augment-sweep", {{"table", table.string()}, {"best", best}, {"sigma_F", sigma_F}});
    return 0;
}

int cmd_describe(const RunConfig& cfg)
{
    nn::Rng rng(0);
    const auto net = cfg.network_config();
    Generator<float> G(net, rng);
    Discriminator<float> D(net, rng);
    FeatureExtractor F(cfg.metric_config().encoder, rng);
    std::cout << "config hash " << cfg.hash() << "\n";
    auto section = [](const std::string& title, nn::ParamRegistry<float> reg, const std::vector<std::string>& lines) {
        std::cout << "\n" << title << " (" << reg.parameter_count() << " parameters)\n";
        for (const auto& l : lines)
            std::cout << "  " << l << "\n";
    };
    section("generator", G.registry(), G.manifest());
    section("discriminator", D.registry(), D.manifest());
    auto& enc = F.encoder;
    section("metric extractor F", enc.registry(), enc.manifest());
    std::cout << "\ngenerator attention after block " << net.generator_attention_block()
              << ", discriminator attention after block " << net.discriminator_attention_block() << "\n";
    write_manifest(cfg, "describe");
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"OpenGAN: metric-feature conditioned image generation"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "JSON run config (missing keys take defaults)");
        sub->add_option("--output-dir", common.output_dir, "override output_dir");
        sub->add_option("--seed", common.seed, "override the global seed");
    };

    std::string synth_out;
    int synth_per_class = 60, synth_size = 32;
    std::uint64_t synth_seed = 0;
    auto synth = app.add_subcommand("synthetic-dataset", "write the 10-class shape/colour dataset as PNG files");
    synth->add_option("--out", synth_out, "target directory")->required();
    synth->add_option("--per-class", synth_per_class, "images per class");
    synth->add_option("--size", synth_size, "image size in pixels");
    synth->add_option("--seed", synth_seed, "generator seed");

    auto train_metric_cmd = app.add_subcommand("train-metric", "train the metric extractor F");
    add_common(train_metric_cmd);

    std::string metric_ckpt;
    auto train_gan_cmd = app.add_subcommand("train-gan", "train G and D against a frozen F");
    add_common(train_gan_cmd);
    train_gan_cmd->add_option("--metric-checkpoint", metric_ckpt, "metric.ckpt from train-metric");

    SampleArgs sample_args;
    auto sample = app.add_subcommand("sample", "generate an image grid");
    add_common(sample);
    sample->add_option("--checkpoint", sample_args.checkpoint, "GAN checkpoint (default <output_dir>/gan/gan_final.ckpt)");
    sample->add_option("--mode", sample_args.mode, "source | class-mean | random")
        ->check(CLI::IsMember({"source", "class-mean", "random"}));
    sample->add_option("--partition", sample_args.partition, "train | novel");
    sample->add_option("--source-dir", sample_args.source_dir, "out-of-domain source images (class-per-directory)");
    sample->add_option("--class", sample_args.class_name, "single class for class-mean mode");
    sample->add_option("--sources", sample_args.sources, "source images (rows)");
    sample->add_option("--count", sample_args.count, "samples per row");
    sample->add_option("--z-policy", sample_args.z_policy, "sampled | fixed");
    sample->add_option("--out", sample_args.out, "output PNG");
    sample->add_flag("--allow-untrained", sample_args.allow_untrained, "sample from a 0-iteration checkpoint");

    InterpArgs interp_args;
    auto interp = app.add_subcommand("interpolate", "latent x feature grids and attribute traversals");
    add_common(interp);
    interp->add_option("--checkpoint", interp_args.checkpoint, "GAN checkpoint");
    interp->add_flag("--grid", interp_args.grid, "2-D latent/feature interpolation grid");
    interp->add_option("--steps", interp_args.steps, "grid steps per axis");
    interp->add_option("--partition", interp_args.partition, "partition for grid endpoints");
    interp->add_option("--attribute", interp_args.attribute, "attribute name to traverse");
    interp->add_option("--labels", interp_args.labels, "label file (JSON lines: id, attrs)");
    interp->add_option("--directions-from", interp_args.source, "generated | real");
    interp->add_option("--samples", interp_args.samples_file, "latents.tsv of generated samples");
    interp->add_option("--space", interp_args.space, "latent | feature | both");
    interp->add_option("--scales", interp_args.scales, "traversal scales");
    interp->add_option("--export-samples", interp_args.export_samples, "write N generated samples for labelling");
    interp->add_flag("--allow-untrained", interp_args.allow_untrained, "use a 0-iteration checkpoint");

    std::string eval_ckpt, export_path;
    bool eval_untrained = false;
    auto eval = app.add_subcommand("eval", "FID, intra-FID, feature matching and retrieval");
    add_common(eval);
    eval->add_option("--checkpoint", eval_ckpt, "GAN checkpoint");
    eval->add_option("--export-embeddings", export_path, "write F embeddings of every image");
    eval->add_flag("--allow-untrained", eval_untrained, "evaluate a 0-iteration checkpoint");

    AugmentArgs aug_args;
    auto augment = app.add_subcommand("augment", "few-shot classification with generated data");
    add_common(augment);
    augment->add_option("--checkpoint", aug_args.checkpoint, "GAN checkpoint");
    augment->add_option("--shots", aug_args.shots, "real images per class");
    augment->add_option("--ratio", aug_args.ratio, "fake batches per real batch");
    augment->add_option("--eta", aug_args.eta, "feature perturbation scale");
    augment->add_option("--run-seed", aug_args.seed, "classifier seed");
    augment->add_flag("--allow-untrained", aug_args.allow_untrained, "use a 0-iteration checkpoint");
    auto sweep = augment->add_subcommand("sweep", "shots x ratio x eta x seed grid from the config");
    add_common(sweep);
    sweep->add_option("--checkpoint", aug_args.checkpoint, "GAN checkpoint");
    sweep->add_flag("--allow-untrained", aug_args.allow_untrained, "use a 0-iteration checkpoint");

    auto describe = app.add_subcommand("describe", "print the layer manifest");
    add_common(describe);

    CLI11_PARSE(app, argc, argv);
    try {
        if (synth->parsed())
            return cmd_synthetic(synth_out, synth_per_class, synth_size, synth_seed);
        const auto cfg = load_config(common);
        if (train_metric_cmd->parsed())
            return cmd_train_metric(cfg);
        if (train_gan_cmd->parsed())
            return cmd_train_gan(cfg, metric_ckpt);
        if (sample->parsed())
            return cmd_sample(cfg, sample_args);
        if (interp->parsed())
            return cmd_interpolate(cfg, interp_args);
        if (eval->parsed())
            return cmd_eval(cfg, eval_ckpt, export_path, eval_untrained);
        if (augment->parsed())
            return cmd_augment(cfg, aug_args, sweep->parsed());
        if (describe->parsed())
            return cmd_describe(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
