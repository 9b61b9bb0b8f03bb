#include "opengan/interpolation.hpp"

#include <fstream>
#include <set>

namespace opengan {

using nn::Tensor;

Tensor<float> InterpolationGrid::image(int latent_index, int feature_index) const
{
    if (latent_index < 0 || latent_index >= steps || feature_index < 0 || feature_index >= steps)
        throw Error("interpolation grid index out of range");
    const nn::Index per = images.size() / images.dim(0);
    Tensor<float> out(nn::Shape{1, images.dim(1), images.dim(2), images.dim(3)});
    out.array() = images.array().segment((feature_index * steps + latent_index) * per, per);
    return out;
}

Tensor<float> lerp(const Tensor<float>& a, const Tensor<float>& b, float u)
{
    if (a.shape() != b.shape())
        throw Error("lerp: shape mismatch " + nn::to_string(a.shape()) + " vs " + nn::to_string(b.shape()));
    if (u == 0.0f)
        return a;
    if (u == 1.0f)
        return b;
    Tensor<float> out = a;
    // a + u (b - a) keeps a == b exact along the whole axis
    out.array() = a.array() + u * (b.array() - a.array());
    return out;
}

InterpolationGrid interpolate_2d(Generator<float>& G, const Tensor<float>& z_a, const Tensor<float>& z_b,
                                 const Tensor<float>& f_a, const Tensor<float>& f_b, int steps)
{
    if (steps < 2)
        throw Error("interpolate_2d: steps must be >= 2");
    for (const auto* t : {&z_a, &z_b, &f_a, &f_b})
        if (t->dim(0) != 1)
            throw Error("interpolate_2d: endpoints must be single rows");
    InterpolationGrid grid{z_a, z_b, f_a, f_b, steps, {}, {}, {}, "linear"};
    for (int i = 0; i < steps; ++i) {
        const float u = i == steps - 1 ? 1.0f : static_cast<float>(i) / static_cast<float>(steps - 1);
        grid.s.push_back(u);
        grid.t.push_back(u);
    }
    const nn::Index R = G.config().resolution, per = 3 * R * R;
    grid.images = Tensor<float>(nn::Shape{steps * steps, 3, R, R});
    for (int j = 0; j < steps; ++j) {
        const auto f = lerp(f_a, f_b, grid.t[static_cast<std::size_t>(j)]);
        for (int i = 0; i < steps; ++i) {
            // one image per call so each cell matches a standalone generation bit for bit
            auto img = generate(G, lerp(z_a, z_b, grid.s[static_cast<std::size_t>(i)]), f, 1);
            grid.images.array().segment((j * steps + i) * per, per) = img.array();
        }
    }
    return grid;
}

namespace {

struct GroupMeans {
    Eigen::VectorXd positive, negative;
    std::size_t n_pos = 0, n_neg = 0;
};

GroupMeans group_means(const Eigen::MatrixXf& rows, const std::vector<AttributeLabels>& labels, const std::string& name)
{
    GroupMeans g;
    g.positive = g.negative = Eigen::VectorXd::Zero(rows.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = labels[i].find(name);
        if (it == labels[i].end() || it->second == 0)
            continue;
        const Eigen::VectorXd r = rows.row(static_cast<Eigen::Index>(i)).transpose().cast<double>();
        if (it->second > 0) {
            g.positive += r;
            ++g.n_pos;
        } else {
            g.negative += r;
            ++g.n_neg;
        }
    }
    if (g.n_pos)
        g.positive /= static_cast<double>(g.n_pos);
    if (g.n_neg)
        g.negative /= static_cast<double>(g.n_neg);
    return g;
}

// Unit (negative - positive); degenerate when a side is empty or the means coincide.
bool unit_direction(const GroupMeans& g, Eigen::VectorXf& out)
{
    out = Eigen::VectorXf::Zero(g.positive.size());
    if (g.n_pos == 0 || g.n_neg == 0 || g.positive.size() == 0)
        return true;
    const Eigen::VectorXd diff = g.negative - g.positive;
    const double norm = diff.norm();
    if (!(norm > 1e-12))
        return true;
    out = (diff / norm).cast<float>();
    return false;
}

}  // namespace

std::vector<AttributeDirection> find_attribute_directions(const Eigen::MatrixXf& latents, const Eigen::MatrixXf& features,
                                                          const std::vector<AttributeLabels>& labels)
{
    const auto n = static_cast<Eigen::Index>(labels.size());
    if ((latents.cols() > 0 && latents.rows() != n) || (features.cols() > 0 && features.rows() != n))
        throw Error("find_attribute_directions: one label record per sample row required");
    std::set<std::string> names;
    for (const auto& l : labels)
        for (const auto& [name, v] : l) {
            if (v != 1 && v != -1)
                throw Error("attribute '" + name + "' has label " + std::to_string(v) + "; expected +1 or -1");
            names.insert(name);
        }
    std::vector<AttributeDirection> out;
    for (const auto& name : names) {
        AttributeDirection dir;
        dir.name = name;
        const auto lg = group_means(latents.cols() ? latents : Eigen::MatrixXf(n, 0), labels, name);
        const auto fg = group_means(features.cols() ? features : Eigen::MatrixXf(n, 0), labels, name);
        dir.positives = fg.n_pos;
        dir.negatives = fg.n_neg;
        dir.latent_degenerate = unit_direction(lg, dir.latent);
        dir.feature_degenerate = unit_direction(fg, dir.feature);
        dir.latent_positive_mean = lg.positive.cast<float>();
        dir.latent_negative_mean = lg.negative.cast<float>();
        dir.feature_positive_mean = fg.positive.cast<float>();
        dir.feature_negative_mean = fg.negative.cast<float>();
        out.push_back(std::move(dir));
    }
    return out;
}

Tensor<float> traverse(Generator<float>& G, const Tensor<float>& z, const Tensor<float>& f,
                       const AttributeDirection& direction, TraverseSpace space, const std::vector<float>& scales)
{
    const bool latent = space == TraverseSpace::latent;
    if (latent ? direction.latent_degenerate : direction.feature_degenerate)
        throw Error("attribute '" + direction.name + "' has a degenerate " + (latent ? "latent" : "feature") +
                    " direction (one-sided labels); traversal is not allowed");
    const Eigen::VectorXf& v = latent ? direction.latent : direction.feature;
    const Tensor<float>& moved = latent ? z : f;
    if (moved.size() != v.size())
        throw Error("traverse: direction has " + std::to_string(v.size()) + " dims, vector has " +
                    std::to_string(moved.size()));
    const nn::Index R = G.config().resolution, per = 3 * R * R;
    Tensor<float> out(nn::Shape{static_cast<nn::Index>(scales.size()), 3, R, R});
    for (std::size_t k = 0; k < scales.size(); ++k) {
        Tensor<float> shifted = moved;
        if (scales[k] != 0.0f)
            shifted.array() += scales[k] * v.array();
        auto img = latent ? generate(G, shifted, f, 1) : generate(G, z, shifted, 1);
        out.array().segment(static_cast<nn::Index>(k) * per, per) = img.array();
    }
    return out;
}

std::map<std::string, AttributeLabels> read_attribute_labels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("could not read attribute labels '" + path.string() + "'");
    std::map<std::string, AttributeLabels> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            AttributeLabels labels;
            for (const auto& [name, v] : j.at("attrs").items())
                labels[name] = v.get<int>();
            out[j.at("id").get<std::string>()] = std::move(labels);
        } catch (const nlohmann::json::exception& e) {
            throw Error("label file line " + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace opengan
