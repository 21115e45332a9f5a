#include "sharnn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace sharnn {

std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed on '" + path + "'");
    return bytes;
}

void write_bytes(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed on '" + path + "'");
}

Corpus split_bytes(std::vector<uint8_t> bytes, double f_train, double f_valid, double f_test) {
    const int64_t n = static_cast<int64_t>(bytes.size());
    if (n < 100) {
        throw DataError("corpus has " + std::to_string(n) + " bytes; need at least 100");
    }
    for (double f : {f_train, f_valid, f_test}) {
        if (f < 0.0) throw DataError("split fractions must be >= 0");
    }
    const double sum = f_train + f_valid + f_test;
    if (sum > 1.0 + 1e-9) throw DataError("split fractions sum above 1");

    const int64_t n_train = static_cast<int64_t>(std::floor(f_train * double(n)));
    const int64_t n_valid = static_cast<int64_t>(std::floor(f_valid * double(n)));
    const int64_t n_test = (std::fabs(sum - 1.0) <= 1e-9)
                               ? n - n_train - n_valid
                               : static_cast<int64_t>(std::floor(f_test * double(n)));

    Corpus c;
    c.train.assign(bytes.begin(), bytes.begin() + n_train);
    c.valid.assign(bytes.begin() + n_train, bytes.begin() + n_train + n_valid);
    c.test.assign(bytes.begin() + n_train + n_valid, bytes.begin() + n_train + n_valid + n_test);
    return c;
}

Corpus load_and_split(const std::string& path, double f_train, double f_valid, double f_test) {
    return split_bytes(read_bytes(path), f_train, f_valid, f_test);
}

BatchStream batchify(std::span<const uint8_t> bytes, int64_t batch) {
    if (batch < 1) throw DataError("batch size must be >= 1");
    const int64_t n = static_cast<int64_t>(bytes.size());
    if (n < batch) {
        throw DataError("cannot batchify " + std::to_string(n) + " bytes into " +
                        std::to_string(batch) + " columns");
    }
    BatchStream s;
    s.batch = batch;
    s.steps = n / batch;
    s.cells.resize(static_cast<size_t>(s.steps * batch));
    for (int64_t b = 0; b < batch; ++b) {
        const uint8_t* chunk = bytes.data() + b * s.steps;
        for (int64_t t = 0; t < s.steps; ++t) s.cells[static_cast<size_t>(t * batch + b)] = chunk[t];
    }
    return s;
}

std::vector<Segment> bptt_segments(const BatchStream& stream, int64_t bptt) {
    if (bptt < 1) throw DataError("bptt must be >= 1");
    std::vector<Segment> segs;
    for (int64_t t0 = 0; t0 + 1 < stream.steps; t0 += bptt) {
        segs.push_back({t0, std::min(bptt, stream.steps - 1 - t0)});
    }
    return segs;
}

namespace {

std::vector<int32_t> segment_rows(const BatchStream& stream, int64_t row0, int64_t len) {
    std::vector<int32_t> ids(static_cast<size_t>(len * stream.batch));
    for (int64_t t = 0; t < len; ++t)
        for (int64_t b = 0; b < stream.batch; ++b)
            ids[static_cast<size_t>(t * stream.batch + b)] = stream.at(row0 + t, b);
    return ids;
}

}  // namespace

std::vector<int32_t> segment_inputs(const BatchStream& stream, const Segment& seg) {
    return segment_rows(stream, seg.t0, seg.len);
}

std::vector<int32_t> segment_targets(const BatchStream& stream, const Segment& seg) {
    return segment_rows(stream, seg.t0 + 1, seg.len);
}

}  // namespace sharnn
