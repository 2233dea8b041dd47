#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>

#include "dn2n/adam.hpp"
#include "dn2n/errors.hpp"
#include "dn2n/frame_io.hpp"
#include "dn2n/grad_check.hpp"
#include "dn2n/model.hpp"
#include "dn2n/model_io.hpp"
#include "dn2n/rng.hpp"
#include "dn2n/tensor.hpp"
#include "support.hpp"

using namespace dn2n;
using namespace dn2n::nn;

namespace {

Tensor4 random_tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Tensor4 t(n, c, h, w);
  rng::Stream s(seed, rng::Purpose::Test, 1);
  for (auto& v : t.values()) v = 2.0 * s.uniform() - 1.0;
  return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n);
  rng::Stream s(seed, rng::Purpose::Test, 2);
  for (auto& x : v) x = 2.0 * s.uniform() - 1.0;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central differences of `loss` w.r.t. every entry of `x`, compared with `analytic`.
// Entries far below the gradient's scale are judged against 1e-3 of that scale.
double max_fd_error(std::vector<double>& x, const std::function<double()>& loss, std::span<const double> analytic,
                    double h = 1e-5) {
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3 * scale, 1e-12});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

ModelSpec small_spec() {
  ModelSpec s;
  s.levels = {4, 8};
  return s;
}

}  // namespace

TEST_CASE("philox known-answer vectors") {
  CHECK(rng::philox4x32_10({0, 0, 0, 0}, {0, 0}) == rng::PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(rng::philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        rng::PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(rng::philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        rng::PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and independent") {
  rng::Stream a(5, rng::Purpose::Test, 1, 2), b(5, rng::Purpose::Test, 1, 2);
  rng::Stream c(5, rng::Purpose::Test, 1, 3), d(5, rng::Purpose::Shuffle, 1, 2);
  const std::uint64_t first = a.next_u64();
  CHECK(first == b.next_u64());
  CHECK(first != c.next_u64());
  CHECK(first != d.next_u64());

  rng::Stream s(1, rng::Purpose::Test);
  std::vector<double> u, z;
  std::vector<std::size_t> counts(7, 0);
  for (int i = 0; i < 100000; ++i) {
    const double v = s.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    u.push_back(v);
    z.push_back(s.normal());
    ++counts[s.below(7)];
  }
  const auto mu = test::moments(u);
  CHECK(std::abs(mu.mean - 0.5) < 3 * std::sqrt(1.0 / 12 / 1e5));
  const auto mz = test::moments(z);
  CHECK(std::abs(mz.mean) < 3 * std::sqrt(1.0 / 1e5));
  CHECK(std::abs(mz.var - 1.0) < 3 * std::sqrt(2.0 / 1e5));
  for (std::size_t c2 : counts) CHECK(std::abs(static_cast<double>(c2) - 1e5 / 7) < 4 * std::sqrt(1e5 / 7));
}

TEST_CASE("poisson sampler moments on both branches") {
  for (double rate : {0.0, 0.7, 12.0, 29.9, 30.0, 250.0, 4375.0}) {
    rng::Stream s(3, rng::Purpose::Test, static_cast<std::uint64_t>(rate * 10));
    std::vector<double> xs;
    for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<double>(rng::poisson(s, rate)));
    const auto m = test::moments(xs);
    if (rate == 0.0) {
      CHECK(m.mean == 0.0);
      continue;
    }
    CAPTURE(rate);
    CHECK(std::abs(m.mean - rate) < 3 * std::sqrt(rate / 1e5));
    // Var of the sample variance is about (mu4 - var^2) / n, with mu4 = rate (1 + 3 rate) for Poisson.
    const double se_var = std::sqrt((rate * (1 + 3 * rate) - rate * rate) / 1e5);
    CHECK(std::abs(m.var - rate) < 3 * se_var);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  for (std::size_t k : {1u, 3u, 5u}) {
    const std::size_t cin = 3, cout = 2;
    Tensor4 x = random_tensor(2, cin, 5, 6, 10 + k);
    auto w = random_vector(cout * cin * k * k, 20 + k);
    auto b = random_vector(cout, 30 + k);
    const auto c = random_vector(2 * cout * 5 * 6, 40 + k);
    const auto loss = [&] { return dot(c, conv2d(x, w, b, cout, k).values()); };

    Tensor4 dy(2, cout, 5, 6);
    std::copy(c.begin(), c.end(), dy.data());
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
    Tensor4 dx;
    conv2d_backward(x, dy, w, k, dw, db, &dx);
    CAPTURE(k);
    CHECK(max_fd_error(w, loss, dw) < 1e-6);
    CHECK(max_fd_error(b, loss, db) < 1e-6);
    std::vector<double> xs(x.values().begin(), x.values().end());
    const auto loss_x = [&] {
      Tensor4 xx(2, cin, 5, 6);
      std::copy(xs.begin(), xs.end(), xx.data());
      return dot(c, conv2d(xx, w, b, cout, k).values());
    };
    CHECK(max_fd_error(xs, loss_x, dx.values()) < 1e-6);
  }
}

TEST_CASE("conv2d matches a direct loop") {
  const Tensor4 x = random_tensor(1, 2, 4, 5, 1);
  const auto w = random_vector(3 * 2 * 9, 2);
  const auto b = random_vector(3, 3);
  const Tensor4 y = conv2d(x, w, b, 3, 3);
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t col = 0; col < 5; ++col) {
        double s = b[o];
        for (std::size_t i = 0; i < 2; ++i) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int rr = static_cast<int>(r) + dy, cc = static_cast<int>(col) + dx;
              if (rr < 0 || rr >= 4 || cc < 0 || cc >= 5) continue;
              s += w[((o * 2 + i) * 3 + (dy + 1)) * 3 + (dx + 1)] * x.at(0, i, rr, cc);
            }
          }
        }
        CHECK(y.at(0, o, r, col) == doctest::Approx(s).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("pooling, upsampling, rectifier and concat gradients") {
  const auto c = random_vector(2 * 3 * 4 * 6, 7);

  Tensor4 x = random_tensor(2, 3, 4, 6, 5);
  std::vector<double> xs(x.values().begin(), x.values().end());
  const auto to_tensor = [](const std::vector<double>& v, std::size_t n, std::size_t ch, std::size_t h,
                            std::size_t w) {
    Tensor4 t(n, ch, h, w);
    std::copy(v.begin(), v.end(), t.data());
    return t;
  };

  SUBCASE("avg_pool2") {
    const auto cp = random_vector(2 * 3 * 2 * 3, 8);
    Tensor4 dy = to_tensor(cp, 2, 3, 2, 3);
    const Tensor4 dx = avg_pool2_backward(dy);
    CHECK(max_fd_error(xs, [&] { return dot(cp, avg_pool2(to_tensor(xs, 2, 3, 4, 6)).values()); }, dx.values()) <
          1e-6);
    CHECK(avg_pool2(x).at(1, 2, 1, 2) ==
          doctest::Approx((x.at(1, 2, 2, 4) + x.at(1, 2, 2, 5) + x.at(1, 2, 3, 4) + x.at(1, 2, 3, 5)) / 4));
  }
  SUBCASE("upsample2") {
    const auto cu = random_vector(2 * 3 * 8 * 12, 9);
    const Tensor4 dx = upsample2_backward(to_tensor(cu, 2, 3, 8, 12));
    CHECK(max_fd_error(xs, [&] { return dot(cu, upsample2(to_tensor(xs, 2, 3, 4, 6)).values()); }, dx.values()) <
          1e-6);
    CHECK(upsample2(x).at(1, 1, 5, 7) == x.at(1, 1, 2, 3));
  }
  SUBCASE("leaky rectifier") {
    for (auto& v : xs) {
      if (std::abs(v) < 1e-3) v = 0.5;  // stay clear of the kink
    }
    const auto act = [&] {
      Tensor4 t = to_tensor(xs, 2, 3, 4, 6);
      leaky_relu_inplace(t, 0.1);
      return t;
    };
    Tensor4 dy = to_tensor(c, 2, 3, 4, 6);
    leaky_relu_backward_inplace(act(), dy, 0.1);
    CHECK(max_fd_error(xs, [&] { return dot(c, act().values()); }, dy.values()) < 1e-6);
  }
  SUBCASE("concat and split") {
    const Tensor4 a = random_tensor(2, 1, 4, 6, 11);
    const Tensor4 cat = concat_channels(x, a);
    CHECK(cat.c() == 4);
    CHECK(cat.at(1, 3, 2, 2) == a.at(1, 0, 2, 2));
    CHECK(cat.at(1, 2, 2, 2) == x.at(1, 2, 2, 2));
    Tensor4 p, q;
    split_channels(cat, 3, p, q);
    CHECK(p == x);
    CHECK(q == a);
  }
}

TEST_CASE("identity 1x1 model passes the selected channel through") {
  ModelSpec spec;
  spec.levels = {1};
  spec.kernel = 1;
  ParamStore p = make_param_layout(spec);
  p.view("enc0.conv1.weight")[0] = 1.0;  // select channel 0, drop the time plane
  p.view("enc0.conv2.weight")[0] = 1.0;
  p.view("head.weight")[0] = 1.0;
  Tensor4 x = random_tensor(1, 2, 3, 5, 1);
  for (std::size_t i = 0; i < x.plane(); ++i) x.plane_ptr(0, 0)[i] = std::abs(x.plane_ptr(0, 0)[i]) + 0.01;
  const Tensor4 y = nn::predict(spec, p, x);
  REQUIRE(y.c() == 1);
  for (std::size_t i = 0; i < x.plane(); ++i) CHECK(y.data()[i] == x.plane_ptr(0, 0)[i]);
}

TEST_CASE("zero head gives zero output") {
  const ModelSpec spec = small_spec();
  ParamStore p = init_params(spec, 3);
  for (auto& v : p.view("head.weight")) v = 0.0;
  const Tensor4 y = nn::predict(spec, p, random_tensor(1, 2, 8, 8, 2));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("forward preserves spatial dims and validates input") {
  const ModelSpec spec;
  const ParamStore p = init_params(spec, 1);
  const Tensor4 y = nn::predict(spec, p, random_tensor(1, 2, 12, 20, 3));
  CHECK(y.c() == 1);
  CHECK(y.h() == 12);
  CHECK(y.w() == 20);
  CHECK_THROWS_AS(nn::predict(spec, p, random_tensor(1, 2, 10, 12, 3)), std::invalid_argument);
  CHECK_THROWS_AS(nn::predict(spec, p, random_tensor(1, 3, 12, 12, 3)), std::invalid_argument);
}

TEST_CASE("parameter count of the default spec") {
  // Convolution c_in -> c_out with k x k kernels has c_out (c_in k^2 + 1) parameters.
  const auto conv = [](std::size_t ci, std::size_t co, std::size_t k) { return co * (ci * k * k + 1); };
  const std::size_t expected = conv(2, 16, 3) + conv(16, 16, 3) + conv(16, 32, 3) + conv(32, 32, 3) +
                               conv(32, 64, 3) + conv(64, 64, 3) + conv(64, 32, 3) + conv(64, 32, 3) +
                               conv(32, 32, 3) + conv(32, 16, 3) + conv(32, 16, 3) + conv(16, 16, 3) + conv(16, 1, 1);
  CHECK(parameter_count(ModelSpec{}) == expected);
  CHECK(expected == 129697);
  CHECK(init_params(ModelSpec{}, 1).size() == expected);
}

TEST_CASE("initialization is seeded and bounded") {
  const ModelSpec spec = small_spec();
  const ParamStore a = init_params(spec, 4), b = init_params(spec, 4), c = init_params(spec, 5);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const auto w = a.view("enc1.conv1.weight");
  const double bound = std::sqrt(6.0 / (4 * 9 + 8 * 9));
  for (double v : w) CHECK(std::abs(v) <= bound);
  for (double v : a.view("enc1.conv1.bias")) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic") {
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 9);
  const Tensor4 x = random_tensor(1, 2, 16, 16, 9);
  CHECK(nn::predict(spec, p, x) == nn::predict(spec, p, x));
  CHECK(nn::predict(spec, p, x) == nn::forward(spec, p, x).output);
}

TEST_CASE("forward matches the frozen golden frame") {
  // Regenerate with DN2N_WRITE_GOLDEN=1 only after an intentional change to the forward pass.
  const auto path = std::filesystem::path(DN2N_FIXTURE_DIR) / "golden_forward.dnf";
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 3);
  Tensor4 x = random_tensor(1, 2, 16, 16, 7);
  for (std::size_t i = 0; i < x.plane(); ++i) x.plane_ptr(0, 1)[i] = 0.5;
  const Tensor4 y = nn::predict(spec, p, x);
  const Image out(16, 16, std::vector<double>(y.values().begin(), y.values().end()), PixelDomain::Unit);
  if (std::getenv("DN2N_WRITE_GOLDEN")) write_float_frame(path, out);
  REQUIRE(std::filesystem::exists(path));
  const Image golden = read_float_frame(path, PixelDomain::Unit);
  REQUIRE(golden.same_shape(out));
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(golden.pixels()[i] - out.pixels()[i]) <= 1e-12);
}

TEST_CASE("zero output gradient gives zero parameter gradient") {
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 2);
  const auto fw = nn::forward(spec, p, random_tensor(1, 2, 8, 8, 1));
  const ParamStore g = backward(spec, p, fw.tape, Tensor4(1, 1, 8, 8));
  CHECK(g.same_layout(p));
  for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("hand-differentiated one-weight network") {
  // f(x) = h * w * x for positive x and weights, L = |f|^2 / 2.
  ModelSpec spec;
  spec.in_channels = 1;
  spec.levels = {1};
  spec.kernel = 1;
  ParamStore p = make_param_layout(spec);
  const double w = 0.7, h = 1.3;
  p.view("enc0.conv1.weight")[0] = 1.0;
  p.view("enc0.conv2.weight")[0] = w;
  p.view("head.weight")[0] = h;
  Tensor4 x(1, 1, 2, 3);
  const double xs[6] = {0.2, 1.0, 0.5, 3.0, 0.1, 2.0};
  std::copy(xs, xs + 6, x.data());
  double sum_x2 = 0.0;
  for (double v : xs) sum_x2 += v * v;

  const auto fw = nn::forward(spec, p, x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(fw.output.data()[i] == doctest::Approx(h * w * xs[i]));
  const ParamStore g = backward(spec, p, fw.tape, fw.output);
  CHECK(g.view("enc0.conv2.weight")[0] == doctest::Approx(h * h * w * sum_x2).epsilon(1e-14));
  CHECK(g.view("head.weight")[0] == doctest::Approx(h * w * w * sum_x2).epsilon(1e-14));
  CHECK(g.view("head.bias")[0] == doctest::Approx(h * w * (0.2 + 1.0 + 0.5 + 3.0 + 0.1 + 2.0)).epsilon(1e-14));
}

TEST_CASE("grad check on the small spec") {
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 5);
  GradCheckOptions opts;
  opts.samples = 50;
  const auto report = grad_check(spec, p, random_tensor(1, 2, 8, 8, 5), opts);
  CHECK(report.checked >= 45);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.passed);
}

TEST_CASE("grad check on every parameter of a narrow three-level model") {
  ModelSpec spec;
  spec.levels = {2, 3, 4};
  const ParamStore p = init_params(spec, 8);
  GradCheckOptions opts;
  opts.samples = p.size();
  const auto report = grad_check(spec, p, random_tensor(1, 2, 8, 8, 8), opts);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.passed);
}

TEST_CASE("grad check is at round-off level for a linear network") {
  ModelSpec spec = small_spec();
  spec.leaky_slope = 1.0;
  const ParamStore p = init_params(spec, 6);
  // The output is affine in each single parameter, so any step is exact up to round-off.
  GradCheckOptions opts;
  opts.step = 1e-2;
  const auto report = grad_check(spec, p, random_tensor(1, 2, 8, 8, 6), opts);
  CHECK(report.checked >= 40);
  CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("grad check flags a corrupted backward pass") {
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 5);
  const auto report = grad_check(spec, p, random_tensor(1, 2, 8, 8, 5), {},
                                 [](ParamStore& g) { g.scale(-1.0); });
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error > 1.0);
}

TEST_CASE("adam closed forms") {
  ParamStore p;
  p.add("w", {1});
  ParamStore g = p.zeros_like();

  AdamState zero(1, 1e-4);
  adam_step(p, g, zero);
  CHECK(p.values()[0] == 0.0);

  g.values()[0] = 2.0;
  AdamState s(1, 1e-4);
  adam_step(p, g, s);
  CHECK(p.values()[0] == doctest::Approx(-1e-4 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  const double after_one = p.values()[0];
  adam_step(p, g, s);
  const double delta = std::abs(p.values()[0] - after_one);
  CHECK(delta >= 0.999e-4);
  CHECK(delta <= 1e-4);

  for (double big : {1e3, -1e6}) {
    ParamStore q = p.zeros_like();
    ParamStore gb = p.zeros_like();
    gb.values()[0] = big;
    AdamState sb(1, 1e-4);
    adam_step(q, gb, sb);
    CHECK(std::abs(q.values()[0]) >= 1e-4 * (1 - 1e-6));
    CHECK(std::abs(q.values()[0]) <= 1e-4);
    CHECK((q.values()[0] < 0) == (big > 0));
  }
}

TEST_CASE("model file round trip and validation") {
  const ModelSpec spec = small_spec();
  const ParamStore p = init_params(spec, 12);
  const auto dir = test::scratch_dir("model_io");
  save_model(dir / "m.dnm", spec, p);
  const auto loaded = load_model(dir / "m.dnm");
  CHECK(loaded.spec == spec);
  CHECK(loaded.params == p);
  const Tensor4 x = random_tensor(1, 2, 8, 8, 3);
  CHECK(nn::predict(loaded.spec, loaded.params, x) == nn::predict(spec, p, x));

  auto bytes = encode_model(spec, p);
  auto tampered = bytes;
  tampered[0] = 'X';
  CHECK_THROWS_AS(decode_model(tampered), FormatError);
  auto version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_model(version), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_model(truncated), FormatError);
  auto hashed = bytes;
  hashed[8] ^= 1;  // in_channels changes, stored hash no longer matches
  CHECK_THROWS_AS(decode_model(hashed), FormatError);
}

TEST_CASE("descriptor encodes one width field per level") {
  ModelSpec spec;
  spec.levels = {16, 32};
  const auto d = encode_spec_descriptor(spec);
  // in, out, kernel (u32), slope (f64), level count (u32), widths (u32 each).
  REQUIRE(d.size() == 4 + 4 + 4 + 8 + 4 + 2 * 4);
  CHECK(d[20] == 2);
  CHECK(d[24] == 16);
  CHECK(d[28] == 32);
  double slope;
  std::memcpy(&slope, d.data() + 12, 8);
  CHECK(slope == 0.1);
}
