#pragma once

#include <cstddef>
#include <span>

// Dense row-major matrix products. The parallel versions split output rows
// across threads; each output element is accumulated in the same order as
// the serial reference, so both agree bitwise.

namespace amrt::kernels {

// C(m x n) = A(m x k) * B(k x n)
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// C(m x n) = alpha * A(m x k) * B(n x k)^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, double alpha = 1.0);
// C(m x n) += A(k x m)^T * B(k x n)
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

// Row-wise max-subtracted softmax, in place on an m x n matrix.
void softmax_rows(std::span<double> x, std::size_t m, std::size_t n);

namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, double alpha = 1.0);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<double> x, std::size_t m, std::size_t n);
}  // namespace serial

}  // namespace amrt::kernels
