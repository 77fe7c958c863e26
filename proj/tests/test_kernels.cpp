#include <doctest.h>

#include <vector>

#include "modnet/kernels.hpp"
#include "modnet/rng.hpp"
#include "reference_kernels.hpp"

using namespace modnet;

namespace {

std::vector<double> rand_buf(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_equal(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

// One size below the parallel cutoff, one above, so both code paths run.
struct ConvCase {
  int h, w, cin, cout;
};
const ConvCase conv_cases[] = {{6, 7, 2, 3}, {40, 38, 12, 16}};

}  // namespace

TEST_CASE("conv3x3 valid matches the serial reference bit for bit") {
  for (const auto& c : conv_cases) {
    const auto x = rand_buf(static_cast<size_t>(c.h) * c.w * c.cin, 11);
    const auto wgt = rand_buf(9ull * c.cin * c.cout, 12);
    const auto bias = rand_buf(c.cout, 13);
    const size_t on = static_cast<size_t>(c.h - 2) * (c.w - 2) * c.cout;
    std::vector<double> ys(on), yp(on);
    refk::conv3x3_valid_forward(x.data(), c.h, c.w, c.cin, wgt.data(), bias.data(), c.cout, ys.data());
    kernels::conv3x3_valid_forward(x.data(), c.h, c.w, c.cin, wgt.data(), bias.data(), c.cout, yp.data());
    check_equal(ys, yp);

    const auto dy = rand_buf(on, 14);
    std::vector<double> dxs(x.size()), dxp(x.size());
    std::vector<double> dws(wgt.size(), 0.5), dwp(wgt.size(), 0.5);  // accumulation preserved
    std::vector<double> dbs(c.cout, -0.25), dbp(c.cout, -0.25);
    refk::conv3x3_valid_backward(x.data(), c.h, c.w, c.cin, wgt.data(), c.cout, dy.data(), dxs.data(),
                                 dws.data(), dbs.data());
    kernels::conv3x3_valid_backward(x.data(), c.h, c.w, c.cin, wgt.data(), c.cout, dy.data(),
                                    dxp.data(), dwp.data(), dbp.data());
    check_equal(dxs, dxp);
    check_equal(dws, dwp);
    check_equal(dbs, dbp);
  }
}

TEST_CASE("conv3x3 same matches the serial reference bit for bit") {
  for (const auto& c : conv_cases) {
    const auto x = rand_buf(static_cast<size_t>(c.h) * c.w * c.cin, 21);
    const auto wgt = rand_buf(9ull * c.cin * c.cin, 22);
    const auto bias = rand_buf(c.cin, 23);
    const size_t on = x.size();
    std::vector<double> ys(on), yp(on);
    refk::conv3x3_same_forward(x.data(), c.h, c.w, c.cin, wgt.data(), bias.data(), c.cin, ys.data());
    kernels::conv3x3_same_forward(x.data(), c.h, c.w, c.cin, wgt.data(), bias.data(), c.cin, yp.data());
    check_equal(ys, yp);

    const auto dy = rand_buf(on, 24);
    std::vector<double> dxs(x.size()), dxp(x.size());
    std::vector<double> dws(wgt.size(), 0.0), dwp(wgt.size(), 0.0);
    std::vector<double> dbs(c.cin, 0.0), dbp(c.cin, 0.0);
    refk::conv3x3_same_backward(x.data(), c.h, c.w, c.cin, wgt.data(), c.cin, dy.data(), dxs.data(),
                                dws.data(), dbs.data());
    kernels::conv3x3_same_backward(x.data(), c.h, c.w, c.cin, wgt.data(), c.cin, dy.data(),
                                   dxp.data(), dwp.data(), dbp.data());
    check_equal(dxs, dxp);
    check_equal(dws, dwp);
    check_equal(dbs, dbp);
  }
}

TEST_CASE("relu and maxpool match the serial reference") {
  const auto x = rand_buf(301, 31);
  std::vector<double> ys(x.size()), yp(x.size());
  refk::relu_forward(x.data(), x.size(), ys.data());
  kernels::relu_forward(x.data(), x.size(), yp.data());
  check_equal(ys, yp);

  const auto dy = rand_buf(x.size(), 32);
  std::vector<double> dxs(x.size()), dxp(x.size());
  refk::relu_backward(ys.data(), dy.data(), x.size(), dxs.data());
  kernels::relu_backward(yp.data(), dy.data(), x.size(), dxp.data());
  check_equal(dxs, dxp);

  // Odd extents: the trailing row/column is dropped.
  const int h = 5, w = 7, c = 3;
  const auto xm = rand_buf(static_cast<size_t>(h) * w * c, 33);
  const size_t on = static_cast<size_t>(h / 2) * (w / 2) * c;
  std::vector<double> pys(on), pyp(on);
  std::vector<int> args(on), argp(on);
  refk::maxpool2_forward(xm.data(), h, w, c, pys.data(), args.data());
  kernels::maxpool2_forward(xm.data(), h, w, c, pyp.data(), argp.data());
  check_equal(pys, pyp);
  for (size_t i = 0; i < on; ++i) REQUIRE(args[i] == argp[i]);

  // Independent max over each window.
  for (int r = 0; r < h / 2; ++r) {
    for (int col = 0; col < w / 2; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        double best = -1e300;
        for (int dy2 = 0; dy2 < 2; ++dy2) {
          for (int dx2 = 0; dx2 < 2; ++dx2) {
            best = std::max(best, xm[((2 * r + dy2) * w + 2 * col + dx2) * c + ch]);
          }
        }
        REQUIRE(pys[(r * (w / 2) + col) * c + ch] == best);
      }
    }
  }

  const auto pdy = rand_buf(on, 34);
  std::vector<double> pdxs(xm.size()), pdxp(xm.size());
  refk::maxpool2_backward(args.data(), pdy.data(), on, xm.size(), pdxs.data());
  kernels::maxpool2_backward(argp.data(), pdy.data(), on, xm.size(), pdxp.data());
  check_equal(pdxs, pdxp);
}

TEST_CASE("fully-connected and modulation kernels match the serial reference") {
  const int in = 97, out = 41;
  const auto x = rand_buf(in, 41);
  const auto wgt = rand_buf(static_cast<size_t>(out) * in, 42);
  const auto bias = rand_buf(out, 43);
  std::vector<double> ys(out), yp(out);
  refk::fc_forward(x.data(), in, wgt.data(), bias.data(), out, ys.data());
  kernels::fc_forward(x.data(), in, wgt.data(), bias.data(), out, yp.data());
  check_equal(ys, yp);

  const auto dy = rand_buf(out, 44);
  std::vector<double> dxs(in), dxp(in), dws(wgt.size(), 0.0), dwp(wgt.size(), 0.0);
  std::vector<double> dbs(out, 0.0), dbp(out, 0.0);
  refk::fc_backward(x.data(), in, wgt.data(), out, dy.data(), dxs.data(), dws.data(), dbs.data());
  kernels::fc_backward(x.data(), in, wgt.data(), out, dy.data(), dxp.data(), dwp.data(), dbp.data());
  check_equal(dxs, dxp);
  check_equal(dws, dwp);
  check_equal(dbs, dbp);

  const int hw = 53, c = 9;
  const auto fx = rand_buf(static_cast<size_t>(hw) * c, 45);
  const auto wv = rand_buf(c, 46);
  std::vector<double> sys(fx.size()), syp(fx.size());
  refk::scale_channels_forward(fx.data(), hw, c, wv.data(), sys.data());
  kernels::scale_channels_forward(fx.data(), hw, c, wv.data(), syp.data());
  check_equal(sys, syp);

  const auto sdy = rand_buf(fx.size(), 47);
  std::vector<double> sdxs(fx.size()), sdxp(fx.size()), sdws(c, 0.0), sdwp(c, 0.0);
  refk::scale_channels_backward(fx.data(), wv.data(), hw, c, sdy.data(), sdxs.data(), sdws.data());
  kernels::scale_channels_backward(fx.data(), wv.data(), hw, c, sdy.data(), sdxp.data(), sdwp.data());
  check_equal(sdxs, sdxp);
  check_equal(sdws, sdwp);

  const auto wm = rand_buf(static_cast<size_t>(c) * c, 48);
  std::vector<double> pys(fx.size()), pyp(fx.size());
  refk::project_channels_forward(fx.data(), hw, c, wm.data(), pys.data());
  kernels::project_channels_forward(fx.data(), hw, c, wm.data(), pyp.data());
  check_equal(pys, pyp);

  std::vector<double> pdxs(fx.size()), pdxp(fx.size()), pdws(wm.size(), 0.0), pdwp(wm.size(), 0.0);
  refk::project_channels_backward(fx.data(), wm.data(), hw, c, sdy.data(), pdxs.data(), pdws.data());
  kernels::project_channels_backward(fx.data(), wm.data(), hw, c, sdy.data(), pdxp.data(),
                                     pdwp.data());
  check_equal(pdxs, pdxp);
  check_equal(pdws, pdwp);
}
