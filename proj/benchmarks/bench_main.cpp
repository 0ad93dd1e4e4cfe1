#include <benchmark/benchmark.h>

// The distro's static benchmark_main is built with a different LTO version, so provide main here.
BENCHMARK_MAIN();
