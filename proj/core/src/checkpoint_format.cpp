#include "sharnn/checkpoint_format.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace sharnn::ckpt {

namespace {

constexpr char kMagic[4] = {'S', 'H', 'R', 'N'};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<uint8_t>& out, float f) {
    const uint32_t v = std::bit_cast<uint32_t>(f);
    put_u32(out, v);
}

struct Reader {
    std::span<const uint8_t> bytes;
    size_t pos = 0;

    void need(size_t n, const char* what) {
        if (pos + n > bytes.size()) {
            throw IntegrityError(std::string("checkpoint truncated while reading ") + what);
        }
    }
    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = uint16_t(bytes[pos]) | (uint16_t(bytes[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
};

std::string render_meta(const std::map<std::string, std::string>& meta) {
    std::string out;
    for (const auto& [k, v] : meta) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> parse_meta(const std::string& text) {
    std::map<std::string, std::string> meta;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("checkpoint metadata line without '=': '" + line + "'");
        }
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

}  // namespace

size_t record_size(const std::string& name, size_t rank, size_t payload_elems) {
    return 2 + name.size() + 1 + 4 * rank + 4 * payload_elems;
}

std::vector<uint8_t> encode(const RawCheckpoint& c) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);

    const std::string meta = render_meta(c.meta);
    if (meta.size() > 0xFFFFFFFFull) throw FormatError("checkpoint metadata too large");
    put_u32(out, uint32_t(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());

    const size_t records_begin = out.size();
    for (const RawTensor& t : c.tensors) {
        if (t.name.empty() || t.name.size() > 0xFFFF) {
            throw FormatError("tensor name length out of range: '" + t.name + "'");
        }
        if (t.dims.size() > 0xFF) throw FormatError("tensor rank out of range");
        uint64_t numel = 1;
        for (uint32_t d : t.dims) numel *= d;
        if (numel != t.data.size()) {
            throw FormatError("tensor '" + t.name + "': dims do not match payload size");
        }
        put_u16(out, uint16_t(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        out.push_back(uint8_t(t.dims.size()));
        for (uint32_t d : t.dims) put_u32(out, d);
        for (float f : t.data) put_f32(out, f);
    }
    const uint32_t crc = crc32_ieee(out.data() + records_begin, out.size() - records_begin);
    put_u32(out, crc);
    return out;
}

RawCheckpoint decode(std::span<const uint8_t> bytes) {
    if (bytes.size() < 12 + 4) throw FormatError("checkpoint too small to be valid");
    Reader r{bytes};
    char magic[4];
    r.need(4, "magic");
    std::memcpy(magic, bytes.data(), 4);
    r.pos = 4;
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    const uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                           " (expected " + std::to_string(kVersion) + ")");
    }
    const uint32_t meta_len = r.u32("metadata length");
    r.need(meta_len, "metadata");
    const std::string meta_text(reinterpret_cast<const char*>(bytes.data() + r.pos), meta_len);
    r.pos += meta_len;

    const size_t records_begin = r.pos;
    if (bytes.size() < records_begin + 4) throw IntegrityError("checkpoint missing checksum");
    const size_t records_end = bytes.size() - 4;

    RawCheckpoint c;
    c.meta = parse_meta(meta_text);
    while (r.pos < records_end) {
        RawTensor t;
        const uint16_t name_len = r.u16("tensor name length");
        r.need(name_len, "tensor name");
        t.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const uint8_t rank = r.u8("tensor rank");
        uint64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            const uint32_t d = r.u32("tensor dimension");
            t.dims.push_back(d);
            numel *= d;
        }
        if (numel > (1ull << 33)) throw FormatError("tensor '" + t.name + "' implausibly large");
        if (r.pos + 4 * numel > records_end) {
            throw IntegrityError("checkpoint truncated inside tensor '" + t.name + "'");
        }
        t.data.resize(size_t(numel));
        for (uint64_t i = 0; i < numel; ++i) t.data[size_t(i)] = r.f32("tensor payload");
        c.tensors.push_back(std::move(t));
    }

    const uint32_t stored = Reader{bytes, records_end}.u32("checksum");
    const uint32_t actual =
        crc32_ieee(bytes.data() + records_begin, records_end - records_begin);
    if (stored != actual) {
        throw IntegrityError("checkpoint checksum mismatch: payload corrupted");
    }
    return c;
}

void write_checkpoint_file(const std::string& path, const RawCheckpoint& c) {
    const std::vector<uint8_t> bytes = encode(c);
    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed on '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path + "': " + ec.message());
}

RawCheckpoint read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on '" + path + "'");
    return decode(bytes);
}

std::string meta_get(const RawCheckpoint& c, const std::string& key) {
    const auto it = c.meta.find(key);
    if (it == c.meta.end()) throw FormatError("checkpoint metadata missing key '" + key + "'");
    return it->second;
}

int64_t meta_get_i64(const RawCheckpoint& c, const std::string& key) {
    try {
        return std::stoll(meta_get(c, key));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        throw FormatError("checkpoint metadata key '" + key + "' is not an integer");
    }
}

double meta_get_f64(const RawCheckpoint& c, const std::string& key) {
    try {
        return std::stod(meta_get(c, key));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        throw FormatError("checkpoint metadata key '" + key + "' is not a number");
    }
}

}  // namespace sharnn::ckpt
