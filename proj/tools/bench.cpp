// Kernel benchmark: OpenMP-parallel paths against their serial references,
// with an equality check so the comparison is trustworthy.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lens/matrix.hpp"
#include "lens/reward.hpp"
#include "lens/rng.hpp"
#include "lens/vae.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

lens::Matrix random_matrix(std::size_t rows, std::size_t cols, lens::Rng& rng) {
  lens::Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.normal();
  }
  return m;
}

void bench_matmul(lens::Rng& rng) {
  std::printf("%-28s %10s %10s %8s %8s\n", "kernel", "serial(s)", "omp(s)",
              "speedup", "equal");
  for (std::size_t n : {128, 256, 512}) {
    const lens::Matrix a = random_matrix(n, n, rng);
    const lens::Matrix b = random_matrix(n, n, rng);
    const auto t0 = Clock::now();
    const lens::Matrix cs = lens::matmul_serial(a, b);
    const double ts = seconds_since(t0);
    const auto t1 = Clock::now();
    const lens::Matrix cp = lens::matmul(a, b);
    const double tp = seconds_since(t1);
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %zux%zu", n, n);
    std::printf("%-28s %10.4f %10.4f %8.2f %8s\n", label, ts, tp, ts / tp,
                cs == cp ? "bitwise" : "NO");
  }
}

void bench_total_loss(lens::Rng& rng) {
  const int dim = 64;
  lens::VaeParams params =
      lens::VaeParams::init(dim, 16, 64, lens::Sharing::shared_trunk, rng);
  std::vector<lens::PreferencePair> batch(512);
  std::vector<std::vector<double>> eps_p(batch.size()), eps_m(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i].prompt_id = static_cast<std::int64_t>(i);
    batch[i].e_plus = rng.normal_vec(dim);
    batch[i].e_minus = rng.normal_vec(dim);
    eps_p[i] = rng.normal_vec(16);
    eps_m[i] = rng.normal_vec(16);
  }

  lens::VaeParams gs = lens::VaeParams::zeros_like(params);
  const auto t0 = Clock::now();
  const double ls =
      lens::total_loss_serial(params, batch, eps_p, eps_m, 1.0, 0.1, &gs);
  const double ts = seconds_since(t0);

  lens::VaeParams gp = lens::VaeParams::zeros_like(params);
  const auto t1 = Clock::now();
  const double lp =
      lens::total_loss_with_noise(params, batch, eps_p, eps_m, 1.0, 0.1, &gp);
  const double tp = seconds_since(t1);

  std::printf("%-28s %10.4f %10.4f %8.2f %8s\n", "vae total_loss b=512", ts, tp,
              ts / tp,
              std::abs(ls - lp) < 1e-9 * std::abs(ls) ? "1e-9" : "NO");
}

void bench_bt_loss(lens::Rng& rng) {
  const int dim = 64;
  lens::RewardHead head = lens::RewardHead::init(dim, 256, rng);
  std::vector<lens::PreferencePair> batch(2048);
  for (auto& p : batch) {
    p.e_plus = rng.normal_vec(dim);
    p.e_minus = rng.normal_vec(dim);
  }
  lens::RewardHead gs = lens::RewardHead::init(dim, 256, rng);
  for (lens::Matrix* t : gs.tensors()) t->fill(0.0);
  const auto t0 = Clock::now();
  const double ls = lens::batch_bt_loss_serial(head, batch, &gs);
  const double ts = seconds_since(t0);

  lens::RewardHead gp = lens::RewardHead::init(dim, 256, rng);
  for (lens::Matrix* t : gp.tensors()) t->fill(0.0);
  const auto t1 = Clock::now();
  const double lp = lens::batch_bt_loss(head, batch, &gp);
  const double tp = seconds_since(t1);

  std::printf("%-28s %10.4f %10.4f %8.2f %8s\n", "reward bt_loss b=2048", ts, tp,
              ts / tp,
              std::abs(ls - lp) < 1e-9 * std::abs(ls) ? "1e-9" : "NO");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP with %d threads\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; parallel paths run serially\n");
#endif
  lens::Rng rng(20240817);
  bench_matmul(rng);
  bench_total_loss(rng);
  bench_bt_loss(rng);
  return 0;
}
