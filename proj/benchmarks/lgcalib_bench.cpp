#include <random>

#include <benchmark/benchmark.h>

#include "lgcalib/kdtree.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/metrics.hpp"
#include "lgcalib/point_cloud.hpp"
#include "lgcalib/simgen.hpp"

namespace {

using namespace lgcalib;

std::vector<Vector3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::vector<Vector3> pts(n);
  for (Vector3& p : pts) p = Vector3(u(rng), u(rng), 0.1 * u(rng));
  return pts;
}

void BM_KdTreeBuild(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(KdTree(pts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdTreeBuild)->Arg(10000)->Arg(100000);

void BM_KdTreeNearest(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 2);
  const auto queries = random_points(1024, 3);
  const KdTree tree(pts);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tree.nearest(queries[i++ % queries.size()], 1.0));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KdTreeNearest)->Arg(10000)->Arg(100000);

void BM_KdTreeKnn20(benchmark::State& state) {
  const auto pts = random_points(100000, 4);
  const KdTree tree(pts);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tree.knn(pts[(i++ * 7919) % pts.size()], 20));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KdTreeKnn20);

// One simulated scan of each of two nearby keyframes.
struct ScanPair {
  std::shared_ptr<ScanFrame> a, b;
  RigidTransform pose_a, pose_b;
};

const ScanPair& scan_pair() {
  static const ScanPair pair = [] {
    const sim::World world = sim::default_world(10.0, 14.0);
    const sim::LidarModel model = sim::spinning_lidar();
    ScanPair p;
    p.pose_a = RigidTransform::from_translation(0.0, 0.0, 1.8);
    p.pose_b = RigidTransform::from_translation(1.5, 0.3, 1.8);
    FrameOptions fo;
    p.a = prepare_frame(sim::simulate_scan(world, model, p.pose_a, 1), RigidTransform(), 0.1, fo);
    p.b = prepare_frame(sim::simulate_scan(world, model, p.pose_b, 2), RigidTransform(), 0.1, fo);
    return p;
  }();
  return pair;
}

void BM_EstimateCovariances(benchmark::State& state) {
  const sim::World world = sim::default_world(10.0, 14.0);
  const PointCloud cloud = voxel_downsample(
      sim::simulate_scan(world, sim::spinning_lidar(), RigidTransform::from_translation(0, 0, 1.8), 5), 0.3);
  CovarianceOptions opt;
  opt.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_covariances(cloud, opt));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cloud.points.size()));
}
BENCHMARK(BM_EstimateCovariances)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

std::vector<FrameNode> pair_nodes(const ScanPair& p) {
  return {{p.a, {ChainElement::fixed(p.pose_a)}, 0, 0}, {p.b, {ChainElement::fixed(p.pose_b)}, 0, 1}};
}

void BM_BuildMatchTerms(benchmark::State& state) {
  const auto nodes = pair_nodes(scan_pair());
  const std::vector<std::pair<std::size_t, std::size_t>> pairs = {{0, 1}};
  for (auto _ : state) benchmark::DoNotOptimize(build_match_terms(nodes, pairs, Values{}, {}));
}
BENCHMARK(BM_BuildMatchTerms)->Unit(benchmark::kMillisecond);

void BM_LinearizeMatchPair(benchmark::State& state) {
  // Put the second frame's pose in a variable so the term has a block.
  const ScanPair& p = scan_pair();
  Values values = {p.pose_b};
  const std::vector<FrameNode> nodes = {{p.a, {ChainElement::fixed(p.pose_a)}, 0, 0},
                                        {p.b, {ChainElement::var(0)}, 0, 1}};
  const MatchTermSet set = build_match_terms(nodes, {{0, 1}}, values, {});
  Linearization lin;
  for (auto _ : state) {
    for (const auto& t : set.terms) t->linearize(values, RobustKernel{}, lin);
    benchmark::DoNotOptimize(lin.cost);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.correspondences));
}
BENCHMARK(BM_LinearizeMatchPair)->Unit(benchmark::kMicrosecond);

void BM_MapEntropy(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::normal_distribution<double> g(0.0, 0.02);
  std::vector<Vector3> pts;
  for (int i = 0; i < 50000; ++i) pts.emplace_back(u(rng), u(rng), g(rng));
  MetricOptions opt;
  opt.max_query_points = 5000;
  for (auto _ : state) benchmark::DoNotOptimize(mean_map_entropy(pts, opt));
}
BENCHMARK(BM_MapEntropy)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
