#include "sfac/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "SFT1/SFAC containers assume a little-endian host");

namespace sfac {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw FormatError(std::string("SFT1: truncated while reading ") + what);
    return v;
}

}  // namespace

void write_sft1(const std::string& path, const Tensor& t, Dtype dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("SFT1: cannot open for writing: " + path);
    nlohmann::json header;
    header["shape"] = t.shape();
    header["dtype"] = dtype == Dtype::F64 ? "f64" : "f32";
    const std::string hs = header.dump();
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    if (dtype == Dtype::F64) {
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    } else {
        std::vector<float> narrow(t.numel());
        for (std::size_t i = 0; i < t.numel(); ++i) narrow[i] = static_cast<float>(t[i]);
        os.write(reinterpret_cast<const char*>(narrow.data()),
                 static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    }
    if (!os) throw FormatError("SFT1: write failed: " + path);
}

Tensor read_sft1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("SFT1: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("SFT1: bad magic in " + path);
    }
    const std::uint32_t hlen = read_u32(is, "header length");
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    if (!is) throw FormatError("SFT1: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("SFT1: invalid JSON header: ") + e.what());
    }
    if (!header.contains("shape") || !header.contains("dtype")) {
        throw FormatError("SFT1: header missing shape/dtype in " + path);
    }
    std::vector<int> shape = header["shape"].get<std::vector<int>>();
    const std::string dtype = header["dtype"].get<std::string>();

    Tensor t(shape);
    if (dtype == "f64") {
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw FormatError("SFT1: truncated f64 payload in " + path);
    } else if (dtype == "f32") {
        std::vector<float> narrow(t.numel());
        is.read(reinterpret_cast<char*>(narrow.data()),
                static_cast<std::streamsize>(narrow.size() * sizeof(float)));
        if (!is) throw FormatError("SFT1: truncated f32 payload in " + path);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(narrow[i]);
    } else {
        throw FormatError("SFT1: unknown dtype \"" + dtype + "\" in " + path);
    }
    return t;
}

}  // namespace sfac
