#pragma once

#include "ezquant/types.hpp"

namespace ezquant {

/// Whole-tensor mean, population standard deviation, and max |x|.
///
/// Two passes over the data in a fixed order: partial sums are taken over
/// consecutive 8192-element chunks of the row-major array (each chunk
/// accumulated sequentially in double) and merged in chunk order. The order is
/// the same whether the chunk loop runs on one thread or many, so the result
/// is independent of thread count.
TensorStats tensor_stats(const DenseMatrix& W);

namespace serial {
// Reference implementation without OpenMP pragmas. Same summation order,
// bit-identical result.
TensorStats tensor_stats(const DenseMatrix& W);
}  // namespace serial

}  // namespace ezquant
