// Serial vs OpenMP timings for the conv and projection kernels.
//
//   bench_kernels [repeats]
//
// Thread count follows OMP_NUM_THREADS.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

#include "hgm_ehr/kernels.hpp"
#include "hgm_ehr/rng.hpp"

using namespace hgm_ehr;
namespace k = hgm_ehr::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
    fn();  // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() / repeats;
}

void fill(Rng& rng, std::vector<double>& v) {
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-34s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 20;
    std::printf("threads: %d, repeats: %d\n", omp_get_max_threads(), repeats);
    Rng rng(1);

    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{128, 409}, {512, 3796}}) {
        Matrix w(rows, cols);
        fill(rng, w.data);
        std::vector<double> x(cols), out(rows);
        fill(rng, x);
        char name[64];
        std::snprintf(name, sizeof name, "matvec %zux%zu", rows, cols);
        report(name, time_ms([&] { k::serial::matvec(w, x, out); }, repeats),
               time_ms([&] { k::omp::matvec(w, x, out); }, repeats));
    }

    // feature widths of the RawLabs, EmbedPlusLabs and RawLabsDiag arms at
    // paper scale
    for (std::size_t features : {409, 537, 3796}) {
        k::ConvShape s{48, features, 32, 3};
        std::vector<double> input(s.time * s.features);
        fill(rng, input);
        Matrix filters(s.filters, s.kernel * s.features);
        fill(rng, filters.data);
        std::vector<double> bias(s.filters, 0.1);
        Matrix out(s.filters, s.out_time()), grad_out(s.filters, s.out_time()), grad(s.filters, s.kernel * s.features);
        fill(rng, grad_out.data);
        char name[64];
        std::snprintf(name, sizeof name, "conv_forward T=48 F=%zu", features);
        report(name, time_ms([&] { k::serial::conv_forward(s, input, filters, bias, out); }, repeats),
               time_ms([&] { k::omp::conv_forward(s, input, filters, bias, out); }, repeats));
        std::snprintf(name, sizeof name, "conv_filter_grad T=48 F=%zu", features);
        report(name, time_ms([&] { k::serial::conv_filter_grad(s, input, grad_out, grad); }, repeats),
               time_ms([&] { k::omp::conv_filter_grad(s, input, grad_out, grad); }, repeats));
    }
    return 0;
}
