#pragma once

#include <cstddef>

namespace kobt {

/// Worker-thread cap shared by all parallel regions. 0 means "use
/// hardware_concurrency". Reductions over parallel results always run in
/// fixed index order, so outputs do not depend on this setting.
void set_max_threads(int n);
int max_threads();

namespace detail {
void parallel_for_impl(std::size_t n, void* ctx, void (*body)(void*, std::size_t));
}

/// Runs fn(i) for i in [0, n) on up to max_threads() workers with static
/// index blocks. fn must only write to slots owned by index i. The first
/// exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    auto thunk = [](void* ctx, std::size_t i) { (*static_cast<Fn*>(ctx))(i); };
    detail::parallel_for_impl(n, const_cast<void*>(static_cast<const void*>(&fn)), thunk);
}

}  // namespace kobt
