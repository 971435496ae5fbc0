#include "mixbridge/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mixbridge {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("mbw1: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("mbw1: truncated file");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

constexpr char kMagic[4] = {'M', 'B', 'W', '1'};

}  // namespace

void mbw1_save(const std::string& path, const std::vector<Tensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("mbw1: cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor& t : tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f64(out, v);
    }
    if (!out) throw std::runtime_error("mbw1: write failed: " + path);
}

std::vector<Tensor> mbw1_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("mbw1: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("mbw1: bad magic in " + path);

    const std::uint32_t count = get_u32(in);
    std::vector<Tensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t rank = get_u32(in);
        std::vector<std::size_t> shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = get_u32(in);
            if (d == 0) throw std::runtime_error("mbw1: zero dim in " + path);
            n *= d;
        }
        Tensor t(shape);
        for (std::size_t j = 0; j < n; ++j) t.data[j] = get_f64(in);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

std::vector<Tensor> mlp_to_tensors(const Mlp& net) {
    std::vector<Tensor> out;
    for (const Dense& d : net.layers) {
        Tensor w{{d.out_dim, d.in_dim}};
        w.data = d.w;
        Tensor b{{d.out_dim}};
        b.data = d.b;
        out.push_back(std::move(w));
        out.push_back(std::move(b));
    }
    return out;
}

void mlp_from_tensors(Mlp& net, const std::vector<Tensor>& tensors, std::size_t offset) {
    if (tensors.size() < offset + 2 * net.layers.size())
        throw std::runtime_error("weights: tensor count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Tensor& w = tensors[offset + 2 * l];
        const Tensor& b = tensors[offset + 2 * l + 1];
        Dense& d = net.layers[l];
        if (w.shape != std::vector<std::size_t>{d.out_dim, d.in_dim} ||
            b.shape != std::vector<std::size_t>{d.out_dim})
            throw std::runtime_error("weights: layer shape mismatch");
        d.w = w.data;
        d.b = b.data;
    }
}

std::vector<Tensor> router_to_tensors(const Router& r) {
    std::vector<Tensor> out = mlp_to_tensors(r.feature);
    Tensor w{{r.head.out_dim, r.head.in_dim}};
    w.data = r.head.w;
    Tensor b{{r.head.out_dim}};
    b.data = r.head.b;
    out.push_back(std::move(w));
    out.push_back(std::move(b));
    return out;
}

void router_from_tensors(Router& r, const std::vector<Tensor>& tensors) {
    const std::size_t head_at = 2 * r.feature.layers.size();
    if (tensors.size() != head_at + 2) throw std::runtime_error("weights: router tensor count");
    mlp_from_tensors(r.feature, tensors, 0);
    const Tensor& w = tensors[head_at];
    const Tensor& b = tensors[head_at + 1];
    if (w.shape != std::vector<std::size_t>{r.head.out_dim, r.head.in_dim} ||
        b.shape != std::vector<std::size_t>{r.head.out_dim})
        throw std::runtime_error("weights: router head shape mismatch");
    r.head.w = w.data;
    r.head.b = b.data;
}

}  // namespace mixbridge
