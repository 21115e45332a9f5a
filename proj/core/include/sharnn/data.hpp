#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sharnn/errors.hpp"

namespace sharnn {

// Byte corpus split into contiguous train/valid/test ranges. The vocabulary
// is the identity map over byte values, so no id table is needed.
struct Corpus {
    std::vector<uint8_t> train, valid, test;
};

// Splits `bytes` into the first floor(f_train*n) bytes for training, the next
// floor(f_valid*n) for validation, and, when the fractions sum to 1, the
// remainder for test (floor(f_test*n) otherwise). Fails for fewer than 100
// bytes or fractions that are negative or sum above 1.
Corpus split_bytes(std::vector<uint8_t> bytes, double f_train = 0.90, double f_valid = 0.05,
                   double f_test = 0.05);

Corpus load_and_split(const std::string& path, double f_train = 0.90, double f_valid = 0.05,
                      double f_test = 0.05);

std::vector<uint8_t> read_bytes(const std::string& path);
void write_bytes(const std::string& path, std::span<const uint8_t> bytes);

// Columnar batch layout: the stream is cut into `batch` contiguous chunks of
// floor(n/batch) bytes (the remainder is dropped); chunk b becomes column b.
// Cell (t, b) is byte t of chunk b, so recurrent state flows down each column.
struct BatchStream {
    int64_t batch = 0;
    int64_t steps = 0;
    std::vector<uint8_t> cells;  // row-major [steps][batch]

    uint8_t at(int64_t t, int64_t b) const {
        return cells[static_cast<size_t>(t * batch + b)];
    }
};

BatchStream batchify(std::span<const uint8_t> bytes, int64_t batch);

// One truncated-backpropagation window: input rows [t0, t0+len), target rows
// [t0+1, t0+len+1) of the same stream (targets are inputs shifted one step).
struct Segment {
    int64_t t0 = 0;
    int64_t len = 0;
};

// Non-overlapping segments covering rows [0, steps-1); the final segment is
// shorter when bptt does not divide steps-1. The very last row is consumed
// only as a target.
std::vector<Segment> bptt_segments(const BatchStream& stream, int64_t bptt);

// Flattened [len x batch] id matrices for one segment.
std::vector<int32_t> segment_inputs(const BatchStream& stream, const Segment& seg);
std::vector<int32_t> segment_targets(const BatchStream& stream, const Segment& seg);

}  // namespace sharnn
