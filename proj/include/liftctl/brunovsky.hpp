#pragma once

#include "liftctl/common.hpp"

namespace liftctl {

// Delay-chain pair (A_c, B_c) and the block matrices of the extended lifted
// dynamics: A = blkdiag(A_c, A_c), B1 = [0; B_c] (input channel),
// B2 = [B_c; 0] (output-map channel).
struct BrunovskyBlocks {
    int N = 0;
    Mat A_c;  // ones on the first superdiagonal
    Vec B_c;  // last unit vector
    Mat A;    // 2N x 2N
    Vec B1;   // 2N
    Vec B2;   // 2N

    static BrunovskyBlocks make(int window_length) {
        if (window_length < 1) throw ValidationError("Brunovsky blocks need N >= 1");
        BrunovskyBlocks b;
        b.N = window_length;
        b.A_c = Mat::Zero(window_length, window_length);
        for (int i = 0; i + 1 < window_length; ++i) b.A_c(i, i + 1) = 1.0;
        b.B_c = Vec::Zero(window_length);
        b.B_c(window_length - 1) = 1.0;

        b.A = Mat::Zero(2 * window_length, 2 * window_length);
        b.A.topLeftCorner(window_length, window_length) = b.A_c;
        b.A.bottomRightCorner(window_length, window_length) = b.A_c;
        b.B1 = Vec::Zero(2 * window_length);
        b.B1(2 * window_length - 1) = 1.0;
        b.B2 = Vec::Zero(2 * window_length);
        b.B2(window_length - 1) = 1.0;
        return b;
    }
};

}  // namespace liftctl
