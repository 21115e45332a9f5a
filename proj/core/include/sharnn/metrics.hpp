#pragma once

#include <cstdint>

namespace sharnn {

// Converts a bits-per-character figure into a word-level perplexity:
// ppl = 2^(bpc * n_chars / n_words). The conversion spreads the total bit
// budget evenly, i.e. it treats every character (and every word) as carrying
// the same number of bits, which real text does not; treat the result as an
// estimate, not an exact equivalent. Both counts must be positive.
double bpc_to_word_ppl(double bpc, uint64_t n_chars, uint64_t n_words);

}  // namespace sharnn
