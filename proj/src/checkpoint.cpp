#include "mamfsd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mamfsd/error.hpp"

namespace mamfsd {

namespace {

void put_u16(std::ostream& out, uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

uint16_t get_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw DataError("checkpoint: truncated");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_block(std::ostream& out, const NamedTensors& tensors) {
    detail::put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        check(name.size() <= 0xffff, "checkpoint: tensor name too long");
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_mft1(out, t);
    }
}

NamedTensors read_block(std::istream& in) {
    const uint32_t count = detail::get_u32(in);
    if (count > 100000) throw DataError("checkpoint: implausible tensor count");
    NamedTensors out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t len = get_u16(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw DataError("checkpoint: truncated name");
        out.emplace_back(std::move(name), read_mft1<float>(in));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors,
                     const NamedTensors* opt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for write: " + path);
    out.write("MFCK", 4);
    write_block(out, tensors);
    if (opt != nullptr) write_block(out, *opt);
    if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MFCK", 4) != 0) throw DataError("checkpoint: bad magic");
    Checkpoint ckpt;
    ckpt.tensors = read_block(in);
    if (in.peek() != std::char_traits<char>::eof()) {
        ckpt.opt = read_block(in);
        ckpt.has_opt = true;
    }
    return ckpt;
}

}  // namespace mamfsd
