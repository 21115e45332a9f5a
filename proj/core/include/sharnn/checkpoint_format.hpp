#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sharnn/errors.hpp"

namespace sharnn {

uint32_t crc32_ieee(const void* data, size_t len, uint32_t seed = 0);

namespace ckpt {

// On-disk layout, all integers little-endian:
//   bytes 0..3   magic "SHRN"
//   bytes 4..7   format version (u32), currently 1
//   bytes 8..11  metadata length (u32), then that many bytes of key=value
//                lines ('\n'-separated UTF-8)
//   tensor records until 4 bytes before EOF, each:
//                u16 name length, name bytes, u8 rank, rank * u32 dims,
//                then the row-major payload as 32-bit little-endian floats
//   last 4 bytes CRC32 (IEEE) over the whole tensor-records region
constexpr uint32_t kVersion = 1;

struct RawTensor {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;  // row-major
};

struct RawCheckpoint {
    std::map<std::string, std::string> meta;
    std::vector<RawTensor> tensors;
};

std::vector<uint8_t> encode(const RawCheckpoint& c);
RawCheckpoint decode(std::span<const uint8_t> bytes);

// Byte size a record with this name and payload occupies in the file.
size_t record_size(const std::string& name, size_t rank, size_t payload_elems);

// Writes to a temp file in the same directory, then renames over `path`.
void write_checkpoint_file(const std::string& path, const RawCheckpoint& c);
RawCheckpoint read_checkpoint_file(const std::string& path);

std::string meta_get(const RawCheckpoint& c, const std::string& key);
int64_t meta_get_i64(const RawCheckpoint& c, const std::string& key);
double meta_get_f64(const RawCheckpoint& c, const std::string& key);

}  // namespace ckpt
}  // namespace sharnn
