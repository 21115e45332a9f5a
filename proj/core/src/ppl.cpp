#include "sharnn/metrics.hpp"

#include <cmath>

#include "sharnn/errors.hpp"

namespace sharnn {

double bpc_to_word_ppl(double bpc, uint64_t n_chars, uint64_t n_words) {
    if (n_chars == 0 || n_words == 0) {
        throw ContractError("bpc_to_word_ppl: character and word counts must be positive");
    }
    return std::exp2(bpc * (double(n_chars) / double(n_words)));
}

}  // namespace sharnn
