#include "opengan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace opengan {

namespace {

// Reads known keys from one object and rejects the rest.
class Section {
public:
    Section(const json& root, std::string name) : name_(std::move(name))
    {
        const json* node = &root;
        if (!name_.empty()) {
            auto it = root.find(name_);
            node = it == root.end() ? nullptr : &*it;
        }
        if (node && !node->is_object())
            throw Error("config: '" + label() + "' must be an object");
        node_ = node;
    }

    template <typename T>
    Section& get(const char* key, T& field)
    {
        seen_.insert(key);
        if (!node_)
            return *this;
        auto it = node_->find(key);
        if (it == node_->end() || it->is_null())
            return *this;
        try {
            field = it->get<T>();
        } catch (const json::exception&) {
            throw Error("config: '" + label(key) + "' has the wrong type (" + it->type_name() + ")");
        }
        return *this;
    }

    void finish(const std::set<std::string>& nested = {}) const
    {
        if (!node_)
            return;
        for (const auto& [key, value] : node_->items())
            if (!seen_.count(key) && !nested.count(key))
                throw Error("config: unknown key '" + label(key.c_str()) + "'");
    }

private:
    std::string label(const char* key = nullptr) const
    {
        if (!key)
            return name_.empty() ? "<root>" : name_;
        return name_.empty() ? key : name_ + "." + key;
    }

    std::string name_;
    const json* node_ = nullptr;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw Error("config: " + message);
}

}  // namespace

int RunConfig::residual_blocks() const
{
    int blocks = 0;
    for (int r = 4; r < data.image_size; r *= 2)
        ++blocks;
    return blocks;
}

void RunConfig::validate() const
{
    require(data.image_size >= 8 && (4 << residual_blocks()) == data.image_size,
            "data.image_size must be 4 * 2^k with k >= 1, got " + std::to_string(data.image_size));
    require(data.train_classes >= 1, "data.train_classes must be >= 1");

    require(metric.dim >= 1, "metric.dim must be >= 1");
    require(metric.base_channels >= 1, "metric.base_channels must be >= 1");
    require(metric.blocks >= 1 && (data.image_size >> metric.blocks) << metric.blocks == data.image_size,
            "metric.blocks must halve data.image_size evenly");
    require(metric.sigma > 0, "metric.sigma must be > 0");
    require(metric.learning_rate > 0, "metric.learning_rate must be > 0");
    require(metric.adam_beta1 >= 0 && metric.adam_beta1 < 1 && metric.adam_beta2 >= 0 && metric.adam_beta2 < 1,
            "metric Adam betas must lie in [0,1)");
    require(metric.cache_refresh_period >= 1, "metric.cache_refresh_period must be >= 1");
    require(metric.epochs >= 0, "metric.epochs must be >= 0");
    require(metric.batch_size >= 2, "metric.batch_size must be >= 2");

    require(networks.latent_dim >= 1, "networks.latent_dim must be >= 1");
    require(networks.base_channels >= 1, "networks.base_channels must be >= 1");
    require(networks.norm == "batch" || networks.norm == "instance", "networks.norm must be 'batch' or 'instance'");
    require(networks.epsilon > 0, "networks.epsilon must be > 0");
    network_config().validate();

    require(gan.lambda >= 0, "gan.lambda must be >= 0");
    require(gan.learning_rate > 0, "gan.learning_rate must be > 0");
    require(gan.adam_beta1 >= 0 && gan.adam_beta1 < 1 && gan.adam_beta2 >= 0 && gan.adam_beta2 < 1,
            "gan Adam betas must lie in [0,1)");
    require(gan.batch_size >= 1, "gan.batch_size must be >= 1");
    require(gan.max_iterations >= 0, "gan.max_iterations must be >= 0");
    require(gan.checkpoint_every >= 1, "gan.checkpoint_every must be >= 1");
    require(gan.log_every >= 1, "gan.log_every must be >= 1");

    require(sampler.std_scale >= 0, "sampler.std_scale must be >= 0");
    require(sampler.count >= 1, "sampler.count must be >= 1");
    require(sampler.z_policy == "sampled" || sampler.z_policy == "fixed", "sampler.z_policy must be 'sampled' or 'fixed'");
    require(sampler.eta >= 0, "sampler.eta must be >= 0");
    require(sampler.split_probes >= 1 && sampler.split_samples >= 2, "sampler split probe sizes too small");
    require(sampler.split_factor > 0, "sampler.split_factor must be > 0");

    require(eval.fid_samples >= 2, "eval.fid_samples must be >= 2");
    require(eval.samples_per_class >= 2, "eval.samples_per_class must be >= 2");
    require(eval.min_class_samples >= 2, "eval.min_class_samples must be >= 2");
    require(eval.retrieval_k >= 1, "eval.retrieval_k must be >= 1");
    require(eval.permutation_trials >= 1, "eval.permutation_trials must be >= 1");

    require(!augment.shots.empty() && !augment.ratios.empty() && !augment.etas.empty() && !augment.seeds.empty(),
            "augment sweep lists must be non-empty");
    for (int s : augment.shots)
        require(s >= 1, "augment.shots entries must be >= 1");
    for (int r : augment.ratios)
        require(r >= 0, "augment.ratios entries must be >= 0");
    for (double e : augment.etas)
        require(e >= 0, "augment.etas entries must be >= 0");
    require(augment.test_per_class >= 1, "augment.test_per_class must be >= 1");
    require(augment.epochs >= 0, "augment.epochs must be >= 0");
    require(augment.batch_size >= 1, "augment.batch_size must be >= 1");
    require(augment.learning_rate > 0, "augment.learning_rate must be > 0");
    require(augment.base_channels >= 1, "augment.base_channels must be >= 1");
    require(augment.blocks >= 1 && (data.image_size >> augment.blocks) << augment.blocks == data.image_size,
            "augment.blocks must halve data.image_size evenly");
    require(!output_dir.empty(), "output_dir must not be empty");
}

NetworkConfig RunConfig::network_config() const
{
    NetworkConfig n;
    n.latent_dim = networks.latent_dim;
    n.base_channels = networks.base_channels;
    n.resolution = data.image_size;
    n.residual_blocks = residual_blocks();
    n.embedding_dim = metric.dim;
    n.generator_attention = networks.generator_attention;
    n.discriminator_attention = networks.discriminator_attention;
    n.norm_mode = networks.norm == "instance" ? NormMode::instance : NormMode::batch;
    n.epsilon = networks.epsilon;
    return n;
}

MetricTrainConfig RunConfig::metric_config() const
{
    MetricTrainConfig m;
    m.encoder = {data.image_size, metric.base_channels, metric.blocks, metric.dim};
    m.sigma = metric.sigma;
    m.learning_rate = metric.learning_rate;
    m.adam_beta1 = metric.adam_beta1;
    m.adam_beta2 = metric.adam_beta2;
    m.cache_refresh_period = metric.cache_refresh_period;
    m.epochs = metric.epochs;
    m.batch_size = metric.batch_size;
    m.augment = data.augment;
    m.seed = nn::derive_seed(seed, "metric");
    return m;
}

EncoderConfig RunConfig::classifier_config(int classes) const
{
    return {data.image_size, augment.base_channels, augment.blocks, classes};
}

GanTrainConfig RunConfig::gan_config() const
{
    GanTrainConfig g;
    g.lambda = gan.lambda;
    g.learning_rate = gan.learning_rate;
    g.adam_beta1 = gan.adam_beta1;
    g.adam_beta2 = gan.adam_beta2;
    g.batch_size = gan.batch_size;
    g.max_iterations = gan.max_iterations;
    g.checkpoint_every = gan.checkpoint_every;
    g.log_every = gan.log_every;
    g.augment = data.augment;
    g.seed = nn::derive_seed(seed, "gan");
    return g;
}

AugmentConfig RunConfig::augment_config() const
{
    AugmentConfig a;
    a.epochs = augment.epochs;
    a.batch_size = augment.batch_size;
    a.learning_rate = augment.learning_rate;
    a.classifier = classifier_config(2);
    return a;
}

SweepSpec RunConfig::sweep_spec() const
{
    SweepSpec s;
    s.shots = augment.shots;
    s.ratios = augment.ratios;
    s.etas = augment.etas;
    s.seeds = augment.seeds;
    s.test_per_class = augment.test_per_class;
    s.test_seed = nn::derive_seed(seed, "augment.test");
    return s;
}

json RunConfig::to_json() const
{
    return {
        {"data", {{"root", data.root}, {"image_size", data.image_size}, {"train_classes", data.train_classes},
                  {"augment", data.augment}}},
        {"metric", {{"dim", metric.dim}, {"base_channels", metric.base_channels}, {"blocks", metric.blocks},
                    {"sigma", metric.sigma}, {"learning_rate", metric.learning_rate},
                    {"adam_beta1", metric.adam_beta1}, {"adam_beta2", metric.adam_beta2},
                    {"cache_refresh_period", metric.cache_refresh_period}, {"epochs", metric.epochs},
                    {"batch_size", metric.batch_size}}},
        {"networks", {{"latent_dim", networks.latent_dim}, {"base_channels", networks.base_channels},
                      {"generator_attention", networks.generator_attention},
                      {"discriminator_attention", networks.discriminator_attention}, {"norm", networks.norm},
                      {"epsilon", networks.epsilon}}},
        {"gan", {{"lambda", gan.lambda}, {"learning_rate", gan.learning_rate}, {"adam_beta1", gan.adam_beta1},
                 {"adam_beta2", gan.adam_beta2}, {"batch_size", gan.batch_size},
                 {"max_iterations", gan.max_iterations}, {"checkpoint_every", gan.checkpoint_every},
                 {"log_every", gan.log_every}}},
        {"sampler", {{"std_scale", sampler.std_scale}, {"count", sampler.count}, {"z_policy", sampler.z_policy},
                     {"eta", sampler.eta}, {"split_probes", sampler.split_probes},
                     {"split_samples", sampler.split_samples}, {"split_factor", sampler.split_factor}}},
        {"eval", {{"fid_samples", eval.fid_samples}, {"samples_per_class", eval.samples_per_class},
                  {"min_class_samples", eval.min_class_samples}, {"retrieval_k", eval.retrieval_k},
                  {"permutation_trials", eval.permutation_trials}}},
        {"augment", {{"shots", augment.shots}, {"ratios", augment.ratios}, {"etas", augment.etas},
                     {"seeds", augment.seeds}, {"test_per_class", augment.test_per_class},
                     {"epochs", augment.epochs}, {"batch_size", augment.batch_size},
                     {"learning_rate", augment.learning_rate}, {"base_channels", augment.base_channels},
                     {"blocks", augment.blocks}}},
        {"seed", seed},
        {"output_dir", output_dir},
    };
}

std::string RunConfig::hash() const { return json_hash(to_json()); }

RunConfig config_from_json(const json& j)
{
    if (!j.is_object())
        throw Error("config: top level must be an object");
    RunConfig c;
    Section(j, "data")
        .get("root", c.data.root)
        .get("image_size", c.data.image_size)
        .get("train_classes", c.data.train_classes)
        .get("augment", c.data.augment)
        .finish();
    Section(j, "metric")
        .get("dim", c.metric.dim)
        .get("base_channels", c.metric.base_channels)
        .get("blocks", c.metric.blocks)
        .get("sigma", c.metric.sigma)
        .get("learning_rate", c.metric.learning_rate)
        .get("adam_beta1", c.metric.adam_beta1)
        .get("adam_beta2", c.metric.adam_beta2)
        .get("cache_refresh_period", c.metric.cache_refresh_period)
        .get("epochs", c.metric.epochs)
        .get("batch_size", c.metric.batch_size)
        .finish();
    Section(j, "networks")
        .get("latent_dim", c.networks.latent_dim)
        .get("base_channels", c.networks.base_channels)
        .get("generator_attention", c.networks.generator_attention)
        .get("discriminator_attention", c.networks.discriminator_attention)
        .get("norm", c.networks.norm)
        .get("epsilon", c.networks.epsilon)
        .finish();
    Section(j, "gan")
        .get("lambda", c.gan.lambda)
        .get("learning_rate", c.gan.learning_rate)
        .get("adam_beta1", c.gan.adam_beta1)
        .get("adam_beta2", c.gan.adam_beta2)
        .get("batch_size", c.gan.batch_size)
        .get("max_iterations", c.gan.max_iterations)
        .get("checkpoint_every", c.gan.checkpoint_every)
        .get("log_every", c.gan.log_every)
        .finish();
    Section(j, "sampler")
        .get("std_scale", c.sampler.std_scale)
        .get("count", c.sampler.count)
        .get("z_policy", c.sampler.z_policy)
        .get("eta", c.sampler.eta)
        .get("split_probes", c.sampler.split_probes)
        .get("split_samples", c.sampler.split_samples)
        .get("split_factor", c.sampler.split_factor)
        .finish();
    Section(j, "eval")
        .get("fid_samples", c.eval.fid_samples)
        .get("samples_per_class", c.eval.samples_per_class)
        .get("min_class_samples", c.eval.min_class_samples)
        .get("retrieval_k", c.eval.retrieval_k)
        .get("permutation_trials", c.eval.permutation_trials)
        .finish();
    Section(j, "augment")
        .get("shots", c.augment.shots)
        .get("ratios", c.augment.ratios)
        .get("etas", c.augment.etas)
        .get("seeds", c.augment.seeds)
        .get("test_per_class", c.augment.test_per_class)
        .get("epochs", c.augment.epochs)
        .get("batch_size", c.augment.batch_size)
        .get("learning_rate", c.augment.learning_rate)
        .get("base_channels", c.augment.base_channels)
        .get("blocks", c.augment.blocks)
        .finish();
    Section(j, "")
        .get("seed", c.seed)
        .get("output_dir", c.output_dir)
        .finish({"data", "metric", "networks", "gan", "sampler", "eval", "augment"});
    c.validate();
    return c;
}

RunConfig parse_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("config file '" + path.string() + "' not found or unreadable");
    std::stringstream text;
    text << in.rdbuf();
    const std::string s = text.str();
    if (s.find_first_not_of(" \t\r\n") == std::string::npos)
        return config_from_json(json::object());
    json j;
    try {
        j = json::parse(s);
    } catch (const json::parse_error& e) {
        throw Error("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const fs::path& path, const RunConfig& cfg)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw Error("could not write config '" + path.string() + "'");
    out << cfg.to_json().dump(2) << "\n";
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_json() == b.to_json(); }

}  // namespace opengan
