#pragma once

namespace segn {

/// Process-wide setup for long training runs: keeps freed tensor buffers in
/// the heap instead of returning them to the OS on every batch, and applies
/// SEGN_THREADS (when set) as the Eigen thread count. Safe to call repeatedly.
void configure_runtime();

}  // namespace segn
