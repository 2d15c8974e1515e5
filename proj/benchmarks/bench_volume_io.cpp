#include <benchmark/benchmark.h>

#include <filesystem>

#include "refrm3d/rng.hpp"
#include "refrm3d/volume.hpp"
#include "refrm3d/vxl.hpp"

using namespace refrm3d;

static void BM_VxlRoundTrip(benchmark::State& state) {
  const auto n = state.range(0);
  Volume3D volume({n, n, n}, {});
  Rng rng(1);
  for (auto& v : volume.data) v = static_cast<float>(rng.uniform());
  const auto path = std::filesystem::temp_directory_path() / "bench.vxl";
  for (auto _ : state) {
    write_vxl(path, volume);
    Volume3D back = read_vxl_volume(path);
    benchmark::DoNotOptimize(back.data.data());
  }
  state.SetBytesProcessed(state.iterations() * volume.dims.voxels() * 4 * 2);
  std::filesystem::remove(path);
}
BENCHMARK(BM_VxlRoundTrip)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
