#include "opengan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fs = std::filesystem;

namespace opengan {

namespace {

constexpr char kMagic[8] = {'O', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::istream& in, const fs::path& path)
{
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw Error("checkpoint '" + path.string() + "' is truncated");
    return value;
}

std::string take_string(std::istream& in, std::size_t n, const fs::path& path)
{
    if (n > (std::size_t{1} << 32))
        throw Error("checkpoint '" + path.string() + "' is corrupt (string length)");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), static_cast<std::streamsize>(n)))
        throw Error("checkpoint '" + path.string() + "' is truncated");
    return s;
}

}  // namespace

const nn::Tensor<float>* Checkpoint::find(const std::string& name) const
{
    for (const auto& [key, t] : tensors)
        if (key == name)
            return &t;
    return nullptr;
}

void Checkpoint::store(const nn::ParamRegistry<float>& reg, const std::string& prefix)
{
    for (const auto& p : reg.params())
        tensors.emplace_back(prefix + p.name, p.var.value());
    for (const auto& b : reg.buffers()) {
        nn::Tensor<float> t(nn::Shape{b.data->size()});
        t.array() = *b.data;
        tensors.emplace_back(prefix + b.name, std::move(t));
    }
}

void Checkpoint::restore(const nn::ParamRegistry<float>& reg, const std::string& prefix) const
{
    for (const auto& p : reg.params()) {
        const auto* t = find(prefix + p.name);
        if (!t)
            throw Error("checkpoint has no tensor '" + prefix + p.name + "'");
        if (t->shape() != p.var.shape())
            throw Error("checkpoint tensor '" + prefix + p.name + "' has shape " + nn::to_string(t->shape()) +
                        ", model expects " + nn::to_string(p.var.shape()));
        auto var = p.var;
        var.mutable_value().array() = t->array();
    }
    for (const auto& b : reg.buffers()) {
        const auto* t = find(prefix + b.name);
        if (!t)
            throw Error("checkpoint has no buffer '" + prefix + b.name + "'");
        *b.data = t->array();
    }
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    // write-then-rename so a crash never leaves a half-written checkpoint
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw Error("could not open checkpoint '" + tmp.string() + "' for writing");
        out.write(kMagic, sizeof kMagic);
        put(out, kVersion);
        const std::string header = ckpt.header.dump();
        put<std::uint64_t>(out, header.size());
        out.write(header.data(), static_cast<std::streamsize>(header.size()));
        put<std::uint64_t>(out, ckpt.tensors.size());
        for (const auto& [name, t] : ckpt.tensors) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
            for (auto d : t.shape())
                put<std::int64_t>(out, d);
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        out.flush();
        if (!out)
            throw Error("failed writing checkpoint '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("checkpoint '" + path.string() + "' not found or unreadable");
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw Error("'" + path.string() + "' is not a checkpoint file");
    const auto version = take<std::uint32_t>(in, path);
    if (version != kVersion)
        throw Error("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.header = nlohmann::json::parse(take_string(in, take<std::uint64_t>(in, path), path));
    const auto count = take<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = take_string(in, take<std::uint32_t>(in, path), path);
        const auto rank = take<std::uint32_t>(in, path);
        if (rank > 8)
            throw Error("checkpoint '" + path.string() + "' is corrupt (rank)");
        nn::Shape shape(rank);
        for (auto& d : shape)
            d = take<std::int64_t>(in, path);
        nn::Tensor<float> t(shape);
        if (t.size() && !in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw Error("checkpoint '" + path.string() + "' is truncated");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

std::string json_hash(const nlohmann::json& value)
{
    const std::string text = value.dump();
    return nn::hex64(nn::fnv1a(text.data(), text.size()));
}

}  // namespace opengan
