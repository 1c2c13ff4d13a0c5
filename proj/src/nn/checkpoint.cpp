#include "uwstereo/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uwstereo::nn {
namespace {

constexpr std::array<char, 8> kMagic = {'U', 'W', 'S', 'T', 'N', 'N', '\0', '\0'};

template <typename U>
void put_le(std::ostream& os, U value) {
    std::array<unsigned char, sizeof(U)> bytes{};
    std::memcpy(bytes.data(), &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U)))
        throw std::runtime_error("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    U value;
    std::memcpy(&value, bytes.data(), sizeof(U));
    return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json manifest = {{"meta", ckpt.meta}, {"networks", nlohmann::json::array()}};
    for (const auto& [name, net] : ckpt.networks) manifest["networks"].push_back({{"name", name}, {"graph", net.graph()}});
    const std::string text = manifest.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, net] : ckpt.networks)
        for (const auto& p : net.params())
            for (float v : p.value.vec()) put_le<float>(os, v);
    if (!os) throw std::runtime_error("error writing checkpoint " + path.string());

    std::ofstream side(path.string() + ".json");
    side << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic)
        throw std::runtime_error(path.string() + " is not a uwstereo checkpoint");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto size = get_le<std::uint64_t>(is);
    std::string text(size, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(size))) throw std::runtime_error("checkpoint truncated");
    const auto manifest = nlohmann::json::parse(text);

    Checkpoint ckpt;
    ckpt.meta = manifest.at("meta");
    // std::map iteration order on save == sorted names == manifest order.
    for (const auto& entry : manifest.at("networks")) {
        auto net = Network<float>::from_graph(entry.at("graph"));
        for (auto& p : net.params())
            for (auto& v : p.value.vec()) v = get_le<float>(is);
        ckpt.networks.emplace(entry.at("name").get<std::string>(), std::move(net));
    }
    return ckpt;
}

}  // namespace uwstereo::nn
