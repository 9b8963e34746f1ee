#include "vidsearch/vector_index.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vidsearch/jsonl.hpp"

namespace vidsearch {
namespace {

constexpr std::array<char, 8> kMagic{'V', 'S', 'E', 'M', 'B', '0', '0', '1'};

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T read_le(std::istream& in) {
    static_assert(std::is_integral_v<T>);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == EOF) throw ParseError("truncated embeddings file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

struct Header {
    std::uint32_t dimension;
    std::uint64_t count;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ParseError(path.string() + ": not an embeddings file (bad magic)");
    Header h{read_le<std::uint32_t>(in), read_le<std::uint64_t>(in)};
    if (h.dimension == 0) throw ParseError(path.string() + ": zero dimension");
    return h;
}

std::filesystem::path keys_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".keys";
    return p;
}

}  // namespace

template <typename Scalar>
void BasicVectorIndex<Scalar>::save(const std::filesystem::path& path) const {
    require_frozen();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dimension_));
    write_le<std::uint64_t>(out, keys_.size());
    for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
        for (Eigen::Index c = 0; c < dimension_; ++c) {
            const auto value = static_cast<float>(rows_(r, c));
            write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(value));
        }
    }
    std::ofstream keys(keys_path(path));
    if (!keys) throw Error("cannot write " + keys_path(path).string());
    for (const auto& k : keys_) keys << k.str() << '\n';
}

template <typename Scalar>
void BasicVectorIndex<Scalar>::load_binary(const std::filesystem::path& path, const KeyFilter& keep) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    const Header h = read_header(in, path);
    if (static_cast<Eigen::Index>(h.dimension) != dimension_)
        throw DimensionError(path.string() + ": file dimension " + std::to_string(h.dimension) +
                             " does not match index dimension " + std::to_string(dimension_));
    std::ifstream keys(keys_path(path));
    if (!keys) throw NotFound("cannot open " + keys_path(path).string());
    Eigen::VectorXf v(dimension_);
    std::string line;
    for (std::uint64_t i = 0; i < h.count; ++i) {
        for (Eigen::Index c = 0; c < dimension_; ++c) v[c] = std::bit_cast<float>(read_le<std::uint32_t>(in));
        if (!std::getline(keys, line))
            throw ParseError(keys_path(path).string() + ": fewer keys than vectors (" + std::to_string(h.count) + ")");
        FrameKey key = parse_frame_key(line);
        if (keep && !keep(key)) continue;
        add(key, v);
    }
}

template <typename Scalar>
void BasicVectorIndex<Scalar>::load_jsonl(const std::filesystem::path& path, const KeyFilter& keep) {
    for_each_jsonl(path, [&](const Json& j, std::size_t) {
        FrameKey key = parse_frame_key(j.at("key").get<std::string>());
        if (keep && !keep(key)) return;
        const auto values = j.at("vector").get<std::vector<double>>();
        add(key, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
    });
}

Eigen::Index read_embedding_dimension(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open " + path.string());
    return static_cast<Eigen::Index>(read_header(in, path).dimension);
}

template class BasicVectorIndex<float>;
template class BasicVectorIndex<double>;

}  // namespace vidsearch
