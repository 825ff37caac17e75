// Times the OpenMP kernels against the serial reference and checks they
// produce identical bits.

#include <chrono>
#include <cstdio>
#include <functional>

#include "fedlab/matrix.hpp"
#include "fedlab/rng.hpp"

using namespace fedlab;

namespace {

Matrix random_matrix(size_t r, size_t c, Rng& rng) {
    Matrix m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * rng.uniform() - 1.0;
    return m;
}

double time_ms(const std::function<Matrix()>& fn, Matrix& out) {
    const auto t0 = std::chrono::steady_clock::now();
    out = fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

bool identical(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

}  // namespace

int main() {
    Rng rng(1234);
    std::printf("%-14s %8s %12s %12s %8s %6s\n", "kernel", "n", "serial_ms", "parallel_ms",
                "speedup", "bits");
    int bad = 0;
    for (size_t n : {128, 256, 384, 512}) {
        const Matrix a = random_matrix(n, n, rng);
        const Matrix b = random_matrix(n, n, rng);
        struct Case {
            const char* name;
            std::function<Matrix()> ser;
            std::function<Matrix()> par;
        };
        const Case cases[] = {
            {"matmul", [&] { return serial::matmul(a, b); }, [&] { return matmul(a, b); }},
            {"matmul_at_b", [&] { return serial::matmul_at_b(a, b); },
             [&] { return matmul_at_b(a, b); }},
            {"matmul_a_bt", [&] { return serial::matmul_a_bt(a, b); },
             [&] { return matmul_a_bt(a, b); }},
        };
        for (const auto& c : cases) {
            Matrix rs, rp;
            const double ts = time_ms(c.ser, rs);
            const double tp = time_ms(c.par, rp);
            const bool ok = identical(rs, rp);
            if (!ok) ++bad;
            std::printf("%-14s %8zu %12.2f %12.2f %7.2fx %6s\n", c.name, n, ts, tp, ts / tp,
                        ok ? "same" : "DIFF");
        }
    }
    return bad ? 1 : 0;
}
