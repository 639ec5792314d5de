#include <benchmark/benchmark.h>

int main_placeholder;
BENCHMARK_MAIN();
