#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "exfilab/common.hpp"
#include "exfilab/network.hpp"

namespace exfilab {

// MWT1 weight archive: the bit-exact export boundary. Layout:
//   magic "MWT1" | u32 version=1 | u32 entry_count
//   per entry: u16 name_len | name | u8 dtype (0 = binary32) | u8 ndim
//              | ndim x u32 dims | product(dims) x little-endian binary32
// Entries are stored in layer order, weight before bias. No checksum: the
// mitigations legitimately rewrite payload bits.
struct ArchiveEntry {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> values;

    uint64_t value_count() const {
        uint64_t n = 1;
        for (uint32_t d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }
};

struct WeightArchive {
    uint32_t version = 1;
    std::vector<ArchiveEntry> entries;

    uint64_t total_params() const {
        uint64_t n = 0;
        for (const auto& e : entries) n += e.values.size();
        return n;
    }

    // Flat parameter access in archive order (the stego embedding order).
    float param(uint64_t k) const {
        for (const auto& e : entries) {
            if (k < e.values.size()) return e.values[k];
            k -= e.values.size();
        }
        throw ArgumentError("archive: parameter index out of range");
    }
    float& param(uint64_t k) {
        for (auto& e : entries) {
            if (k < e.values.size()) return e.values[k];
            k -= e.values.size();
        }
        throw ArgumentError("archive: parameter index out of range");
    }
};

namespace detail {

inline void put_u16(std::vector<uint8_t>& buf, uint16_t v) {
    buf.push_back(static_cast<uint8_t>(v & 0xff));
    buf.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::vector<uint8_t>& buf, float v) {
    put_u32(buf, std::bit_cast<uint32_t>(v));
}

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size, std::string what)
        : data_(data), size_(size), what_(std::move(what)) {}

    size_t offset() const { return off_; }
    size_t remaining() const { return size_ - off_; }

    void need(size_t n, const char* field) {
        if (off_ + n > size_)
            throw ParseError(what_ + ": truncated while reading " + field + " at byte offset " +
                             std::to_string(off_));
    }
    uint8_t u8(const char* field) {
        need(1, field);
        return data_[off_++];
    }
    uint16_t u16(const char* field) {
        need(2, field);
        uint16_t v = static_cast<uint16_t>(data_[off_] | (data_[off_ + 1] << 8));
        off_ += 2;
        return v;
    }
    uint32_t u32(const char* field) {
        need(4, field);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[off_ + i]) << (8 * i);
        off_ += 4;
        return v;
    }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
    std::string bytes(size_t n, const char* field) {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data_ + off_), n);
        off_ += n;
        return s;
    }
    void done() {
        if (off_ != size_)
            throw ParseError(what_ + ": " + std::to_string(size_ - off_) +
                             " trailing bytes after byte offset " + std::to_string(off_));
    }

private:
    const uint8_t* data_;
    size_t size_;
    size_t off_ = 0;
    std::string what_;
};

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure on " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failure on " + path.string());
}

}  // namespace detail

inline std::vector<uint8_t> serialize_archive(const WeightArchive& a) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), {'M', 'W', 'T', '1'});
    detail::put_u32(buf, a.version);
    detail::put_u32(buf, static_cast<uint32_t>(a.entries.size()));
    for (const auto& e : a.entries) {
        require(e.name.size() <= 0xffff, "archive: entry name too long");
        require(e.dims.size() <= 0xff, "archive: too many dims");
        require_shape(e.value_count() == e.values.size(),
                      "archive: entry " + e.name + " value count does not match dims");
        detail::put_u16(buf, static_cast<uint16_t>(e.name.size()));
        buf.insert(buf.end(), e.name.begin(), e.name.end());
        buf.push_back(0);  // dtype binary32
        buf.push_back(static_cast<uint8_t>(e.dims.size()));
        for (uint32_t d : e.dims) detail::put_u32(buf, d);
        for (float v : e.values) {
            if (!std::isfinite(v)) throw NumericError("archive: refusing to write non-finite value in " + e.name);
            detail::put_f32(buf, v);
        }
    }
    return buf;
}

inline WeightArchive parse_archive(const std::vector<uint8_t>& bytes, const std::string& what) {
    detail::ByteReader r(bytes.data(), bytes.size(), what);
    if (r.bytes(4, "magic") != "MWT1") throw ParseError(what + ": bad magic, expected MWT1");
    WeightArchive a;
    a.version = r.u32("version");
    if (a.version != 1)
        throw ParseError(what + ": unsupported version " + std::to_string(a.version));
    uint32_t count = r.u32("entry count");
    a.entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        ArchiveEntry e;
        uint16_t name_len = r.u16("name length");
        e.name = r.bytes(name_len, "name");
        uint8_t dtype = r.u8("dtype");
        if (dtype != 0)
            throw ParseError(what + ": unsupported dtype " + std::to_string(dtype) + " in entry " +
                             e.name);
        uint8_t ndim = r.u8("ndim");
        uint64_t prod = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            e.dims.push_back(r.u32("dims"));
            prod *= e.dims.back();
            if (prod > 0xffffffffULL)
                throw ParseError(what + ": dims product overflow in entry " + e.name +
                                 " at byte offset " + std::to_string(r.offset()));
        }
        uint64_t n = e.value_count();
        r.need(static_cast<size_t>(n) * 4, "values");
        e.values.reserve(static_cast<size_t>(n));
        for (uint64_t k = 0; k < n; ++k) e.values.push_back(r.f32("values"));
        for (const auto& prev : a.entries)
            if (prev.name == e.name) throw ParseError(what + ": duplicate entry name " + e.name);
        a.entries.push_back(std::move(e));
    }
    r.done();
    return a;
}

// Layer parameters in layer order, weight before bias, logical [out x in]
// layout; doubles round to nearest-even binary32.
inline WeightArchive archive_from_network(const Network& net) {
    WeightArchive a;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const DenseLayer& l = net.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        ArchiveEntry w;
        w.name = "layer" + std::to_string(li + 1) + ".weight";
        w.dims = {static_cast<uint32_t>(out_d), static_cast<uint32_t>(in_d)};
        w.values.reserve(out_d * in_d);
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i) w.values.push_back(static_cast<float>(l.w(o, i)));
        a.entries.push_back(std::move(w));

        ArchiveEntry b;
        b.name = "layer" + std::to_string(li + 1) + ".bias";
        b.dims = {static_cast<uint32_t>(out_d)};
        for (double v : l.bias) b.values.push_back(static_cast<float>(v));
        a.entries.push_back(std::move(b));
    }
    return a;
}

inline void load_network_weights(Network& net, const WeightArchive& a) {
    require(a.entries.size() == 2 * net.layers.size(),
            "load_network_weights: archive has " + std::to_string(a.entries.size()) +
                " entries, network expects " + std::to_string(2 * net.layers.size()));
    for (size_t li = 0; li < net.layers.size(); ++li) {
        DenseLayer& l = net.layers[li];
        const size_t out_d = l.out_dim(), in_d = l.in_dim();
        const ArchiveEntry& w = a.entries[2 * li];
        const ArchiveEntry& b = a.entries[2 * li + 1];
        require(w.name == "layer" + std::to_string(li + 1) + ".weight" &&
                    b.name == "layer" + std::to_string(li + 1) + ".bias",
                "load_network_weights: unexpected entry names at layer " + std::to_string(li + 1));
        require_shape(w.dims.size() == 2 && w.dims[0] == out_d && w.dims[1] == in_d,
                      "load_network_weights: weight dims mismatch at layer " + std::to_string(li + 1));
        require_shape(b.dims.size() == 1 && b.dims[0] == out_d,
                      "load_network_weights: bias dims mismatch at layer " + std::to_string(li + 1));
        for (size_t o = 0; o < out_d; ++o)
            for (size_t i = 0; i < in_d; ++i) l.w(o, i) = static_cast<double>(w.values[o * in_d + i]);
        for (size_t o = 0; o < out_d; ++o) l.bias[o] = static_cast<double>(b.values[o]);
    }
}

inline uint64_t write_archive(const WeightArchive& a, const std::filesystem::path& path) {
    std::vector<uint8_t> bytes = serialize_archive(a);
    detail::write_file_bytes(path, bytes);
    return bytes.size();
}

inline uint64_t write_archive(const Network& net, const std::filesystem::path& path) {
    return write_archive(archive_from_network(net), path);
}

inline WeightArchive read_archive(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
    return parse_archive(detail::read_file_bytes(path), path.filename().string());
}

struct ArchiveDiff {
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double changed_param_fraction = 0.0;
    double changed_bit_fraction = 0.0;
};

inline ArchiveDiff diff_archives(const WeightArchive& a, const WeightArchive& b) {
    require(a.entries.size() == b.entries.size(), "diff_archives: entry count mismatch");
    ArchiveDiff d;
    uint64_t params = 0, changed = 0, bits = 0;
    double abs_sum = 0.0;
    for (size_t i = 0; i < a.entries.size(); ++i) {
        const auto& ea = a.entries[i];
        const auto& eb = b.entries[i];
        require(ea.name == eb.name && ea.dims == eb.dims,
                "diff_archives: structure mismatch at entry " + ea.name);
        for (size_t k = 0; k < ea.values.size(); ++k) {
            uint32_t ba = std::bit_cast<uint32_t>(ea.values[k]);
            uint32_t bb = std::bit_cast<uint32_t>(eb.values[k]);
            double delta = std::fabs(static_cast<double>(ea.values[k]) -
                                     static_cast<double>(eb.values[k]));
            d.max_abs = std::max(d.max_abs, delta);
            abs_sum += delta;
            if (ba != bb) ++changed;
            bits += std::popcount(ba ^ bb);
            ++params;
        }
    }
    if (params > 0) {
        d.mean_abs = abs_sum / static_cast<double>(params);
        d.changed_param_fraction = static_cast<double>(changed) / static_cast<double>(params);
        d.changed_bit_fraction = static_cast<double>(bits) / (32.0 * static_cast<double>(params));
    }
    return d;
}

}  // namespace exfilab
