#include <cstring>
#include <fstream>

#include "hyolo/tensor.hpp"

namespace hyolo {

namespace {

const char kMagic[6] = {'H', 'Y', 'O', 'L', 'O', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

void put_f64(std::ostream& out, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

bool get_f64(std::istream& in, double& d) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&d, &u, 8);
    return true;
}

} // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    for (const auto& [name, t] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
        for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data()) put_f64(out, v);
    }
    if (!out) throw DataError("write failure on checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path);

    std::vector<std::pair<std::string, Tensor>> params;
    std::uint32_t name_len;
    while (get_u32(in, name_len)) {
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw DataError("truncated checkpoint: " + path);
        std::uint32_t rank;
        if (!get_u32(in, rank)) throw DataError("truncated checkpoint: " + path);
        std::vector<int> shape(rank);
        std::int64_t count = 1;
        for (auto& d : shape) {
            std::uint32_t v;
            if (!get_u32(in, v)) throw DataError("truncated checkpoint: " + path);
            d = static_cast<int>(v);
            count *= d;
        }
        std::vector<double> data(static_cast<std::size_t>(count));
        for (auto& v : data)
            if (!get_f64(in, v)) throw DataError("truncated checkpoint: " + path);
        params.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return params;
}

} // namespace hyolo
