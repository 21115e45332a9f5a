#include <numeric>

#include "doctest.h"
#include "sharnn/data.hpp"

using namespace sharnn;

namespace {

std::vector<uint8_t> iota_bytes(int n) {
    std::vector<uint8_t> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = uint8_t(i & 0xFF);
    return v;
}

}  // namespace

TEST_CASE("split_bytes uses floor boundaries and the remainder for test") {
    auto c = split_bytes(iota_bytes(1000));
    CHECK(c.train.size() == 900);
    CHECK(c.valid.size() == 50);
    CHECK(c.test.size() == 50);
    CHECK(c.train.front() == 0);
    CHECK(c.train.back() == uint8_t(899 & 0xFF));
    CHECK(c.valid.front() == uint8_t(900 & 0xFF));
    CHECK(c.test.back() == uint8_t(999 & 0xFF));

    // 0.5/0.3/0.2 of 10 bytes -> 5/3/2 ... but the 100-byte floor applies first.
    auto d = split_bytes(iota_bytes(100), 0.5, 0.3, 0.2);
    CHECK(d.train.size() == 50);
    CHECK(d.valid.size() == 30);
    CHECK(d.test.size() == 20);

    CHECK_THROWS_AS(split_bytes(iota_bytes(99)), DataError);
    CHECK_THROWS_AS(split_bytes(iota_bytes(200), 0.9, 0.2, 0.1), DataError);
    CHECK_THROWS_AS(split_bytes(iota_bytes(200), -0.1, 0.5, 0.5), DataError);

    // Fractions below 1 leave a gap instead of stretching test.
    auto e = split_bytes(iota_bytes(200), 0.5, 0.25, 0.1);
    CHECK(e.train.size() == 100);
    CHECK(e.valid.size() == 50);
    CHECK(e.test.size() == 20);
}

TEST_CASE("batchify forms contiguous columns and drops the remainder") {
    auto s = batchify(iota_bytes(10), 2);
    CHECK(s.batch == 2);
    CHECK(s.steps == 5);
    // column 0 = bytes 0..4, column 1 = bytes 5..9
    for (int t = 0; t < 5; ++t) {
        CHECK(s.at(t, 0) == t);
        CHECK(s.at(t, 1) == t + 5);
    }

    auto dropped = batchify(iota_bytes(10), 3);
    CHECK(dropped.steps == 3);  // one byte dropped
    CHECK(dropped.at(0, 0) == 0);
    CHECK(dropped.at(2, 2) == 8);

    CHECK_THROWS_AS(batchify(iota_bytes(2), 3), DataError);
    CHECK_THROWS_AS(batchify(iota_bytes(10), 0), DataError);
}

TEST_CASE("bptt segments shift targets by one and keep the short tail") {
    auto s = batchify(iota_bytes(10), 2);  // 5 steps
    auto segs = bptt_segments(s, 2);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].t0 == 0);
    CHECK(segs[0].len == 2);
    CHECK(segs[1].t0 == 2);
    CHECK(segs[1].len == 2);  // row 4 is consumed as a target only

    auto in0 = segment_inputs(s, segs[0]);
    auto tg0 = segment_targets(s, segs[0]);
    REQUIRE(in0.size() == 4);
    CHECK(in0[0] == 0);  // (t=0,b=0)
    CHECK(in0[1] == 5);  // (t=0,b=1)
    CHECK(tg0[0] == 1);
    CHECK(tg0[1] == 6);

    // Shift property: targets of segment k are inputs shifted one row.
    for (const auto& seg : segs) {
        auto in = segment_inputs(s, seg);
        auto tg = segment_targets(s, seg);
        for (int64_t t = 0; t + 1 < seg.len; ++t)
            for (int64_t b = 0; b < s.batch; ++b)
                CHECK(in[(t + 1) * s.batch + b] == tg[t * s.batch + b]);
    }

    // Uneven split: 7 steps with bptt 3 -> lengths 3, 3 (last row target-only).
    auto s7 = batchify(iota_bytes(7), 1);
    auto segs7 = bptt_segments(s7, 3);
    REQUIRE(segs7.size() == 2);
    CHECK(segs7[1].len == 3);
    auto s8 = batchify(iota_bytes(8), 1);
    auto segs8 = bptt_segments(s8, 3);
    REQUIRE(segs8.size() == 3);
    CHECK(segs8[2].len == 1);  // short tail emitted

    // Reconstruction: concatenating segment inputs re-yields rows [0, steps-1).
    std::vector<int32_t> rebuilt;
    for (const auto& seg : segs8) {
        auto in = segment_inputs(s8, seg);
        rebuilt.insert(rebuilt.end(), in.begin(), in.end());
    }
    REQUIRE(rebuilt.size() == 7);
    for (int i = 0; i < 7; ++i) CHECK(rebuilt[static_cast<size_t>(i)] == i);

    CHECK_THROWS_AS(bptt_segments(s, 0), DataError);
}

TEST_CASE("identity vocabulary: ids are the byte values themselves") {
    std::vector<uint8_t> bytes = {0, 127, 255, 10};
    auto s = batchify(bytes, 1);
    auto segs = bptt_segments(s, 10);
    auto in = segment_inputs(s, segs[0]);
    CHECK(in[0] == 0);
    CHECK(in[1] == 127);
    CHECK(in[2] == 255);
}
