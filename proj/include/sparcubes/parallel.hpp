#pragma once

#include <cstddef>
#include <memory>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/partitioner.h>

namespace sparcubes {

/// Caps the worker count for the lifetime of the object. 0 leaves TBB's default.
class ThreadLimit {
  public:
    explicit ThreadLimit(std::size_t threads) {
        if (threads > 0)
            control_ = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, threads);
    }

  private:
    std::unique_ptr<tbb::global_control> control_;
};

/// Runs body(i) for i in [begin, end). Bodies must only write to slots owned by i,
/// which keeps results independent of the thread count.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, Body&& body, std::size_t grain = 1024) {
    if (end <= begin) return;
    if (end - begin <= grain) {
        for (std::size_t i = begin; i < end; ++i) body(i);
        return;
    }
    tbb::parallel_for(tbb::blocked_range<std::size_t>(begin, end, grain),
                      [&](const tbb::blocked_range<std::size_t>& r) {
                          for (std::size_t i = r.begin(); i != r.end(); ++i) body(i);
                      });
}

} // namespace sparcubes
