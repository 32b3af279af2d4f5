#include "ezquant/types.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ezquant {

void DenseMatrix::validate() const {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("matrix shape must be positive, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    if (static_cast<size_t>(rows) * static_cast<size_t>(cols) != data.size())
        throw std::invalid_argument("matrix data length " + std::to_string(data.size()) +
                                    " does not match shape " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    for (size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw std::invalid_argument("non-finite element at flat index " + std::to_string(i));
    }
}

void QuantConfig::validate() const {
    if (bits < 2 || bits > 8)
        throw std::invalid_argument("bits must be in [2, 8], got " + std::to_string(bits));
    if (!(sigma_n >= 0.0f) || !std::isfinite(sigma_n))
        throw std::invalid_argument("sigma_n must be finite and >= 0");
    if (!(lr > 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("lr must be finite and > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0))
        throw std::invalid_argument("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw std::invalid_argument("adam_beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0))
        throw std::invalid_argument("adam_eps must be > 0");
    if (steps < 0)
        throw std::invalid_argument("steps must be >= 0");
    if (select_step < 0)
        throw std::invalid_argument("select_step must be >= 0");
}

}  // namespace ezquant
