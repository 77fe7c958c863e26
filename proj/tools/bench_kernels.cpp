// Times the OpenMP kernels against the serial reference at benchmark sizes
// and checks that both produce identical bits.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "modnet/kernels.hpp"
#include "modnet/rng.hpp"
#include "reference_kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / reps;
}

std::vector<double> random_buffer(size_t n, uint64_t seed) {
  modnet::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void report(const std::string& name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   max|diff| %g\n",
              name.c_str(), serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int h = argc > 1 ? std::atoi(argv[1]) : 96;
  const int w = h;
  const int cin = argc > 2 ? std::atoi(argv[2]) : 32;
  const int cout = cin;
  const int reps = argc > 3 ? std::atoi(argv[3]) : 5;
  std::printf("feature map %dx%dx%d, %d reps per measurement\n\n", h, w, cin, reps);

  const auto x = random_buffer(static_cast<size_t>(h) * w * cin, 1);
  const auto wgt = random_buffer(9ull * cin * cout, 2);
  const auto bias = random_buffer(cout, 3);
  const auto dy_valid = random_buffer(static_cast<size_t>(h - 2) * (w - 2) * cout, 4);
  const auto dy_same = random_buffer(static_cast<size_t>(h) * w * cout, 5);

  {
    std::vector<double> ys(static_cast<size_t>(h - 2) * (w - 2) * cout);
    std::vector<double> yp(ys.size());
    const double ts = time_ms([&] {
      modnet::refk::conv3x3_valid_forward(x.data(), h, w, cin, wgt.data(), bias.data(), cout, ys.data());
    }, reps);
    const double tp = time_ms([&] {
      modnet::kernels::conv3x3_valid_forward(x.data(), h, w, cin, wgt.data(), bias.data(), cout, yp.data());
    }, reps);
    report("conv3x3 valid forward", ts, tp, max_abs_diff(ys, yp));
  }
  {
    std::vector<double> dxs(x.size()), dxp(x.size());
    std::vector<double> dws(wgt.size(), 0.0), dwp(wgt.size(), 0.0);
    std::vector<double> dbs(cout, 0.0), dbp(cout, 0.0);
    const double ts = time_ms([&] {
      std::fill(dws.begin(), dws.end(), 0.0);
      std::fill(dbs.begin(), dbs.end(), 0.0);
      modnet::refk::conv3x3_valid_backward(x.data(), h, w, cin, wgt.data(), cout, dy_valid.data(),
                                           dxs.data(), dws.data(), dbs.data());
    }, reps);
    const double tp = time_ms([&] {
      std::fill(dwp.begin(), dwp.end(), 0.0);
      std::fill(dbp.begin(), dbp.end(), 0.0);
      modnet::kernels::conv3x3_valid_backward(x.data(), h, w, cin, wgt.data(), cout, dy_valid.data(),
                                              dxp.data(), dwp.data(), dbp.data());
    }, reps);
    report("conv3x3 valid backward", ts, tp,
           std::max({max_abs_diff(dxs, dxp), max_abs_diff(dws, dwp), max_abs_diff(dbs, dbp)}));
  }
  {
    std::vector<double> ys(static_cast<size_t>(h) * w * cout), yp(ys.size());
    const double ts = time_ms([&] {
      modnet::refk::conv3x3_same_forward(x.data(), h, w, cin, wgt.data(), bias.data(), cout, ys.data());
    }, reps);
    const double tp = time_ms([&] {
      modnet::kernels::conv3x3_same_forward(x.data(), h, w, cin, wgt.data(), bias.data(), cout, yp.data());
    }, reps);
    report("conv3x3 same forward", ts, tp, max_abs_diff(ys, yp));
  }
  {
    std::vector<double> dxs(x.size()), dxp(x.size());
    std::vector<double> dws(wgt.size(), 0.0), dwp(wgt.size(), 0.0);
    std::vector<double> dbs(cout, 0.0), dbp(cout, 0.0);
    const double ts = time_ms([&] {
      std::fill(dws.begin(), dws.end(), 0.0);
      std::fill(dbs.begin(), dbs.end(), 0.0);
      modnet::refk::conv3x3_same_backward(x.data(), h, w, cin, wgt.data(), cout, dy_same.data(),
                                          dxs.data(), dws.data(), dbs.data());
    }, reps);
    const double tp = time_ms([&] {
      std::fill(dwp.begin(), dwp.end(), 0.0);
      std::fill(dbp.begin(), dbp.end(), 0.0);
      modnet::kernels::conv3x3_same_backward(x.data(), h, w, cin, wgt.data(), cout, dy_same.data(),
                                             dxp.data(), dwp.data(), dbp.data());
    }, reps);
    report("conv3x3 same backward", ts, tp,
           std::max({max_abs_diff(dxs, dxp), max_abs_diff(dws, dwp), max_abs_diff(dbs, dbp)}));
  }
  {
    const int fc_in = h * w * cin / 4, fc_out = 512;
    const auto fx = random_buffer(fc_in, 6);
    const auto fw = random_buffer(static_cast<size_t>(fc_out) * fc_in, 7);
    const auto fb = random_buffer(fc_out, 8);
    std::vector<double> ys(fc_out), yp(fc_out);
    const double ts = time_ms([&] {
      modnet::refk::fc_forward(fx.data(), fc_in, fw.data(), fb.data(), fc_out, ys.data());
    }, reps);
    const double tp = time_ms([&] {
      modnet::kernels::fc_forward(fx.data(), fc_in, fw.data(), fb.data(), fc_out, yp.data());
    }, reps);
    report("fully-connected forward", ts, tp, max_abs_diff(ys, yp));
  }
  {
    const auto wv = random_buffer(cin, 9);
    std::vector<double> ys(x.size()), yp(x.size());
    const double ts = time_ms([&] {
      modnet::refk::scale_channels_forward(x.data(), h * w, cin, wv.data(), ys.data());
    }, reps);
    const double tp = time_ms([&] {
      modnet::kernels::scale_channels_forward(x.data(), h * w, cin, wv.data(), yp.data());
    }, reps);
    report("channel scaling forward", ts, tp, max_abs_diff(ys, yp));
  }
  {
    const auto wm = random_buffer(static_cast<size_t>(cin) * cin, 10);
    std::vector<double> ys(x.size()), yp(x.size());
    const double ts = time_ms([&] {
      modnet::refk::project_channels_forward(x.data(), h * w, cin, wm.data(), ys.data());
    }, reps);
    const double tp = time_ms([&] {
      modnet::kernels::project_channels_forward(x.data(), h * w, cin, wm.data(), yp.data());
    }, reps);
    report("channel projection forward", ts, tp, max_abs_diff(ys, yp));
  }
  return 0;
}
