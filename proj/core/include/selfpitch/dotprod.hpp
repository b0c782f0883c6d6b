// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace selfpitch {

/// Dot product with eight independent partial sums. The fixed lane pattern
/// lets the compiler vectorize the reduction while keeping the summation
/// order a pure function of n, so results are reproducible run to run.
template <typename T>
inline T dot8(const T* a, const T* b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        acc[0] += a[i + 0] * b[i + 0];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        acc[4] += a[i + 4] * b[i + 4];
        acc[5] += a[i + 5] * b[i + 5];
        acc[6] += a[i + 6] * b[i + 6];
        acc[7] += a[i + 7] * b[i + 7];
    }
    T tail = T(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

/// paired dot against two right-hand sides sharing one left operand
template <typename T>
inline void dot8_dual(const T* a, const T* b0, const T* b1, int n, T& out0, T& out1) {
    T acc0[4] = {T(0), T(0), T(0), T(0)};
    T acc1[4] = {T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0[0] += a[i + 0] * b0[i + 0];
        acc0[1] += a[i + 1] * b0[i + 1];
        acc0[2] += a[i + 2] * b0[i + 2];
        acc0[3] += a[i + 3] * b0[i + 3];
        acc1[0] += a[i + 0] * b1[i + 0];
        acc1[1] += a[i + 1] * b1[i + 1];
        acc1[2] += a[i + 2] * b1[i + 2];
        acc1[3] += a[i + 3] * b1[i + 3];
    }
    T t0 = T(0), t1 = T(0);
    for (; i < n; ++i) {
        t0 += a[i] * b0[i];
        t1 += a[i] * b1[i];
    }
    out0 = (acc0[0] + acc0[1]) + (acc0[2] + acc0[3]) + t0;
    out1 = (acc1[0] + acc1[1]) + (acc1[2] + acc1[3]) + t1;
}

}  // namespace selfpitch
