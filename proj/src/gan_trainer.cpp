#include "opengan/gan_trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace opengan {

using nn::Var;

void GanTrainConfig::validate() const
{
    if (!(lambda >= 0))
        throw Error("gan: lambda must be >= 0");
    if (batch_size < 1)
        throw Error("gan: batch_size must be >= 1");
    if (max_iterations < 0)
        throw Error("gan: max_iterations must be >= 0");
    if (checkpoint_every < 1 || log_every < 1)
        throw Error("gan: checkpoint_every and log_every must be >= 1");
    if (!(learning_rate > 0))
        throw Error("gan: learning_rate must be > 0");
}

Var<float> hinge_discriminator_loss(const Var<float>& d_real, const Var<float>& d_fake)
{
    return nn::add(nn::mean(nn::relu(nn::add_scalar(nn::scale(d_real, -1.0f), 1.0f))),
                   nn::mean(nn::relu(nn::add_scalar(d_fake, 1.0f))));
}

GeneratorLoss hinge_generator_loss(const Var<float>& d_fake, const Var<float>& fake_features,
                                   const Var<float>& features, double lambda)
{
    GeneratorLoss loss;
    loss.adversarial = nn::scale(nn::mean(d_fake), -1.0f);
    loss.feature_mse = nn::mean_row_sq_norm(nn::sub(fake_features, features));
    loss.total = nn::add(loss.adversarial, nn::scale(loss.feature_mse, static_cast<float>(lambda)));
    return loss;
}

namespace {

nn::Adam<float>::Config adam_config(const GanTrainConfig& cfg)
{
    return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
}

}  // namespace

GanTrainer::GanTrainer(const NetworkConfig& net, FeatureExtractor& F, const GanTrainConfig& cfg)
    : F_(&F), cfg_(cfg), z_rng_(nn::derive_seed(cfg.seed, "gan.z"))
{
    cfg_.validate();
    if (!F.frozen())
        throw Error("GAN training needs a frozen feature extractor");
    if (F.dim() != net.embedding_dim)
        throw Error("feature extractor gives " + std::to_string(F.dim()) + "-dim features, networks expect " +
                    std::to_string(net.embedding_dim));
    if (F.config().resolution != net.resolution)
        throw Error("feature extractor resolution differs from generator resolution");
    nn::Rng g_rng(nn::derive_seed(cfg.seed, "gan.init.G"));
    nn::Rng d_rng(nn::derive_seed(cfg.seed, "gan.init.D"));
    G = Generator<float>(net, g_rng);
    D = Discriminator<float>(net, d_rng);
    opt_g_ = nn::Adam<float>(G.registry().vars(), adam_config(cfg_));
    opt_d_ = nn::Adam<float>(D.registry().vars(), adam_config(cfg_));
}

nn::Tensor<float> GanTrainer::sample_z(nn::Index n)
{
    auto z = z_rng_.normal_tensor<float>({n, G.config().latent_dim});
    z_hashes.push_back(nn::fnv1a(z.data(), static_cast<std::size_t>(z.size()) * sizeof(float)));
    return z;
}

void GanTrainer::guard(double value, const char* what)
{
    if (std::isfinite(value))
        return;
    std::string where;
    if (!diagnostic_dir.empty()) {
        json dump = {{"iteration", iteration_}, {"loss", what}, {"value", std::to_string(value)}};
        auto norms = [](const nn::ParamRegistry<float>& reg) {
            json out = json::object();
            for (const auto& p : reg.params())
                out[p.name] = std::to_string(p.var.value().array().matrix().norm());
            return out;
        };
        dump["G"] = norms(G.registry());
        dump["D"] = norms(D.registry());
        fs::create_directories(diagnostic_dir);
        const auto path = diagnostic_dir / "diagnostic.json";
        std::ofstream(path) << dump.dump(2) << "\n";
        where = "; parameter norms written to " + path.string();
    }
    throw Error(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration_) + where);
}

double GanTrainer::discriminator_step(const nn::Tensor<float>& real, const nn::Tensor<float>& features,
                                      const nn::Tensor<float>& z)
{
    Var<float> f(features, false);
    nn::Tensor<float> fake;
    {
        nn::NoGradGuard no_grad;
        fake = G.forward(Var<float>(z, false), f, true).value();
    }
    opt_d_.zero_grad();
    auto d_real = D.forward(Var<float>(real, false), f, true);
    auto d_fake = D.forward(Var<float>(std::move(fake), false), f, true);
    auto loss = hinge_discriminator_loss(d_real, d_fake);
    guard(loss.value()[0], "discriminator loss");
    nn::backward(loss);
    opt_d_.step();
    ++d_steps;
    return loss.value()[0];
}

std::pair<double, double> GanTrainer::generator_step(const nn::Tensor<float>& features, const nn::Tensor<float>& z)
{
    Var<float> f(features, false);
    auto d_reg = D.registry();
    d_reg.set_trainable(false);
    opt_g_.zero_grad();
    auto fake = G.forward(Var<float>(z, false), f, true);
    auto loss = hinge_generator_loss(D.forward(fake, f, true), F_->forward(fake), f, cfg_.lambda);
    d_reg.set_trainable(true);
    guard(loss.total.value()[0], "generator loss");
    nn::backward(loss.total);
    opt_g_.step();
    ++g_steps;
    return {loss.adversarial.value()[0], loss.feature_mse.value()[0]};
}

GanMetrics GanTrainer::iterate(const nn::Tensor<float>& real)
{
    const auto features = F_->extract(real);
    GanMetrics m;
    m.loss_d = discriminator_step(real, features, sample_z(real.dim(0)));
    std::tie(m.loss_g_adv, m.feature_mse) = generator_step(features, sample_z(real.dim(0)));
    m.iteration = ++iteration_;
    return m;
}

json network_config_json(const NetworkConfig& c)
{
    return {{"latent_dim", c.latent_dim},
            {"base_channels", c.base_channels},
            {"resolution", c.resolution},
            {"residual_blocks", c.residual_blocks},
            {"embedding_dim", c.embedding_dim},
            {"generator_attention", c.generator_attention},
            {"discriminator_attention", c.discriminator_attention},
            {"norm", c.norm_mode == NormMode::batch ? "batch" : "instance"},
            {"epsilon", c.epsilon}};
}

NetworkConfig network_config_from_json(const json& j)
{
    NetworkConfig c;
    c.latent_dim = j.at("latent_dim");
    c.base_channels = j.at("base_channels");
    c.resolution = j.at("resolution");
    c.residual_blocks = j.at("residual_blocks");
    c.embedding_dim = j.at("embedding_dim");
    c.generator_attention = j.at("generator_attention");
    c.discriminator_attention = j.at("discriminator_attention");
    c.norm_mode = j.at("norm") == "instance" ? NormMode::instance : NormMode::batch;
    c.epsilon = j.at("epsilon");
    c.validate();
    return c;
}

Checkpoint gan_checkpoint(GanTrainer& trainer, const json& provenance)
{
    FeatureExtractor& F = trainer.extractor();
    const auto& e = F.config();
    const auto& cfg = trainer.config();
    Checkpoint ckpt;
    ckpt.header = {
        {"kind", "gan"},
        {"iteration", trainer.iteration()},
        {"trained", trainer.iteration() > 0},
        {"networks", network_config_json(trainer.G.config())},
        {"encoder", {{"resolution", e.resolution}, {"base_channels", e.base_channels}, {"blocks", e.blocks},
                     {"output_dim", e.output_dim}}},
        {"gan", {{"lambda", cfg.lambda}, {"learning_rate", cfg.learning_rate}, {"adam_beta1", cfg.adam_beta1},
                 {"adam_beta2", cfg.adam_beta2}, {"batch_size", cfg.batch_size}, {"seed", cfg.seed}}},
        {"metric_hash", nn::hex64(F.hash())},
        {"provenance", provenance},
    };
    ckpt.store(trainer.G.registry(), "");
    ckpt.store(trainer.D.registry(), "");
    ckpt.store(F.registry(), "F.");
    return ckpt;
}

GanModels load_gan(const Checkpoint& ckpt)
{
    if (ckpt.header.value("kind", "") != "gan")
        throw Error("checkpoint is not a GAN checkpoint (kind '" + ckpt.header.value("kind", "") + "')");
    GanModels m;
    const auto net = network_config_from_json(ckpt.header.at("networks"));
    nn::Rng rng(0);
    m.G = Generator<float>(net, rng);
    m.D = Discriminator<float>(net, rng);
    Checkpoint as_metric;
    as_metric.header = {{"kind", "metric"}, {"encoder", ckpt.header.at("encoder")}};
    for (const auto& [name, t] : ckpt.tensors)
        if (name.rfind("F.", 0) == 0)
            as_metric.tensors.emplace_back(name, t);
    m.F = load_feature_extractor(as_metric);
    ckpt.restore(m.G.registry(), "");
    ckpt.restore(m.D.registry(), "");
    m.iterations = ckpt.header.at("iteration");
    m.header = ckpt.header;
    return m;
}

GanRunResult train_gan(const Dataset& train, FeatureExtractor& F, const NetworkConfig& net,
                       const GanTrainConfig& cfg, const fs::path& out_dir, const json& provenance,
                       const std::function<void(const GanMetrics&)>& on_log)
{
    if (train.size() == 0)
        throw Error("train_gan: empty dataset");
    GanTrainer trainer(net, F, cfg);
    const int batch_size = static_cast<int>(std::min<std::size_t>(cfg.batch_size, train.size()));
    BatchStream stream(train, batch_size, nn::derive_seed(cfg.seed, "gan.data"), cfg.augment);
    const std::uint64_t f_hash = F.hash();

    GanRunResult result;
    std::ofstream log_file;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        trainer.diagnostic_dir = out_dir;
        log_file.open(out_dir / "metrics.jsonl");
        if (!log_file)
            throw Error("could not open metrics log in '" + out_dir.string() + "'");
    }
    auto write_checkpoint = [&](const fs::path& path) {
        if (out_dir.empty())
            return;
        save_checkpoint(path, gan_checkpoint(trainer, provenance));
        result.final_checkpoint = path;
    };
    auto numbered = [&](long it) {
        std::ostringstream name;
        name << "gan_" << std::setw(6) << std::setfill('0') << it << ".ckpt";
        return out_dir / name.str();
    };

    if (cfg.max_iterations == 0)
        write_checkpoint(numbered(0));
    const std::string config_hash = provenance.is_object() ? provenance.value("config_hash", "") : "";
    for (int it = 0; it < cfg.max_iterations; ++it) {
        auto m = trainer.iterate(stream.next().images);
        if (m.iteration % cfg.log_every == 0 || m.iteration == cfg.max_iterations) {
            result.log.push_back(m);
            if (log_file.is_open()) {
                json line = {{"iteration", m.iteration}, {"loss_d", m.loss_d}, {"loss_g_adv", m.loss_g_adv},
                             {"feature_mse", m.feature_mse}};
                if (!config_hash.empty())
                    line["config_hash"] = config_hash;
                log_file << line.dump() << "\n";
                log_file.flush();
            }
            if (on_log)
                on_log(m);
        }
        if (m.iteration % cfg.checkpoint_every == 0)
            write_checkpoint(numbered(m.iteration));
    }
    if (F.hash() != f_hash)
        throw Error("feature extractor changed during GAN training");
    if (cfg.max_iterations > 0)
        write_checkpoint(out_dir / "gan_final.ckpt");
    return result;
}

}  // namespace opengan
