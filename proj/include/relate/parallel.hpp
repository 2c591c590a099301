// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace relate {

// Worker cap: RELATE_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

// Runs fn(chunk) for chunk in [0, num_chunks) on up to thread_count()
// threads. Chunks are independent; callers reduce per-chunk results in
// index order so output never depends on the thread count.
void parallel_chunks(std::size_t num_chunks, const std::function<void(std::size_t)>& fn);

}  // namespace relate
