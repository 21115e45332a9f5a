#pragma once

#include <functional>
#include <vector>

#include "sharnn/errors.hpp"
#include "sharnn/tensor.hpp"

namespace sharnn {

// Define-by-run gradient tape. Ops append one record per executed primitive;
// backward() replays the records in exact reverse execution order. A tape is
// rebuilt for every forward pass and cleared afterwards; it is confined to one
// thread of execution.
template <class S>
class Tape {
  public:
    void record(std::function<void()> backward_fn) {
        records_.push_back(std::move(backward_fn));
    }

    size_t size() const { return records_.size(); }

    // Frees every record (and thereby the closures' tensor handles).
    void clear() {
        records_.clear();
        records_.shrink_to_fit();
    }

    // Seeds d(loss)/d(loss) = 1 and propagates. Replays every record, so all
    // reachable inputs end with an allocated (possibly zero) gradient. Call
    // once per forward build; a second call would accumulate on top.
    void backward(Tensor<S> loss) {
        if (loss.numel() != 1) {
            throw ShapeError("backward() expects a scalar loss, got shape " +
                             shape_str(loss.shape()));
        }
        loss.ensure_grad()[0] += S(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

  private:
    std::vector<std::function<void()>> records_;
};

}  // namespace sharnn
