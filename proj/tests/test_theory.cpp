#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dn2n/synth.hpp"
#include "dn2n/theory.hpp"
#include "support.hpp"

using namespace dn2n;
using namespace dn2n::theory;

namespace {

Vector shrink(double t, const Vector& x) {
  Vector out = x;
  for (auto& v : out) v *= 1.0 - t;
  return out;
}

DiscreteInstance shrinking_instance() {
  DiscreteInstance d;
  d.x0 = {1.0};
  d.noise = {{-1.0}, {1.0}};
  d.noise_probs = {0.5, 0.5};
  d.taus = {0.2, 0.5};
  d.tau_probs = {0.5, 0.5};
  d.phi = shrink;
  return d;
}

// Independent check: y_tau's noise is independent of y_0, so the cell mean is phi_tau(x0).
void check_against_conditional_mean(const DiscreteInstance& d, const Prop1Result& r) {
  for (const auto& cell : r.cells) {
    const Vector expected = d.phi(cell.tau, d.x0);
    REQUIRE(cell.minimizer.size() == expected.size());
    for (std::size_t p = 0; p < expected.size(); ++p) CHECK(std::abs(cell.minimizer[p] - expected[p]) <= 1e-12);
  }
  for (const auto& lim : r.limits) {
    for (std::size_t p = 0; p < lim.size(); ++p) CHECK(std::abs(lim[p] - d.x0[p]) <= 1e-9);
  }
  CHECK(r.verdict);
}

FrameSequence unit_pixels(const std::vector<double>& values) {
  std::vector<Image> frames;
  for (double v : values) frames.emplace_back(1, 1, std::vector<double>{v}, PixelDomain::Unit);
  return FrameSequence::uniform(frames);
}

}  // namespace

TEST_CASE("shrinking instance") {
  const auto d = shrinking_instance();
  const auto r = prop1_oracle(d);
  REQUIRE(r.cells.size() == 4);
  for (const auto& cell : r.cells) {
    CHECK((cell.y0[0] == 0.0 || cell.y0[0] == 2.0));
    CHECK(cell.minimizer[0] == doctest::Approx(cell.tau == 0.2 ? 0.8 : 0.5).epsilon(1e-14));
  }
  REQUIRE(r.limits.size() == 2);
  check_against_conditional_mean(d, r);
}

TEST_CASE("identity instance recovers the clean value") {
  DiscreteInstance d = shrinking_instance();
  d.taus = {0.0};
  d.tau_probs = {1.0};
  d.phi = [](double, const Vector& x) { return x; };
  const auto r = prop1_oracle(d);
  for (const auto& cell : r.cells) CHECK(cell.minimizer[0] == 1.0);
  check_against_conditional_mean(d, r);
}

TEST_CASE("asymmetric noise gives the same minimizers") {
  DiscreteInstance d = shrinking_instance();
  d.noise = {{-1.0}, {2.0}};
  d.noise_probs = {2.0 / 3.0, 1.0 / 3.0};
  const auto r = prop1_oracle(d);
  for (const auto& cell : r.cells) {
    CHECK((cell.y0[0] == 0.0 || cell.y0[0] == 3.0));
    CHECK(cell.minimizer[0] == doctest::Approx(cell.tau == 0.2 ? 0.8 : 0.5).epsilon(1e-14));
  }
  check_against_conditional_mean(d, r);
}

TEST_CASE("vector instance with three taus") {
  DiscreteInstance d;
  d.x0 = {0.5, -1.0};
  d.noise = {{-0.3, 0.1}, {0.3, -0.2}, {0.0, 0.05}};
  d.noise_probs = {0.25, 0.25, 0.5};
  d.taus = {0.1, 0.4, 0.9};
  d.tau_probs = {0.2, 0.3, 0.5};
  d.phi = [](double t, const Vector& x) { return Vector{x[0] * (1.0 - t), x[1] + 0.5 * t}; };
  check_against_conditional_mean(d, prop1_oracle(d));
}

TEST_CASE("a transform that misses x0 at tau = 0 fails the verdict") {
  DiscreteInstance d = shrinking_instance();
  d.phi = [](double t, const Vector& x) { return Vector{(1.0 - t) * x[0] + 0.1}; };
  const auto r = prop1_oracle(d);
  CHECK_FALSE(r.verdict);
  CHECK(r.max_limit_error == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(r.max_cell_error < kCellTolerance);
}

TEST_CASE("instance validation") {
  DiscreteInstance d = shrinking_instance();
  d.noise_probs = {0.5, 0.4};
  CHECK_THROWS_AS(prop1_oracle(d), std::invalid_argument);
  d = shrinking_instance();
  d.noise = {{0.0}, {1.0}};
  CHECK_THROWS_AS(prop1_oracle(d), std::invalid_argument);
  d = shrinking_instance();
  d.tau_probs = {1.0};
  CHECK_THROWS_AS(prop1_oracle(d), std::invalid_argument);
  d = shrinking_instance();
  d.x0 = {1.0, 2.0};
  CHECK_THROWS_AS(prop1_oracle(d), std::invalid_argument);
  d = shrinking_instance();
  d.noise.clear();
  d.noise_probs.clear();
  for (int i = -50; i <= 50; ++i) {
    d.noise.push_back({static_cast<double>(i)});
    d.noise_probs.push_back(1.0 / 101.0);
  }
  CHECK_THROWS_AS(prop1_oracle(d), std::invalid_argument);
}

TEST_CASE("g_phi") {
  const GapTerm g = g_phi(unit_pixels({1.0, 0.8, 0.6}));
  CHECK(g.raw == doctest::Approx(0.09).epsilon(1e-14));
  CHECK(g.per_pixel == g.raw);

  const Image a = test::random_image(6, 6, 1);
  CHECK(g_phi(FrameSequence::uniform({a, a, a, a})).raw < 1e-28);

  const Image b = test::random_image(6, 6, 2), c = test::random_image(6, 6, 3), e = test::random_image(6, 6, 4);
  const double forward = g_phi(FrameSequence::uniform({a, b, c, e})).raw;
  CHECK(g_phi(FrameSequence::uniform({a, e, b, c})).raw == doctest::Approx(forward).epsilon(1e-14));

  // Raw frames are compared in unit intensities; weights select frames.
  const GapTerm w = g_phi(FrameSequence::uniform({Image(2, 1, PixelDomain::Raw255, 255.0),
                                                  Image(2, 1, PixelDomain::Raw255, 0.0),
                                                  Image(2, 1, PixelDomain::Raw255, 204.0)}),
                          {0.0, 1.0});
  CHECK(w.raw == doctest::Approx(2 * 0.04).epsilon(1e-14));
  CHECK(w.per_pixel == doctest::Approx(0.04).epsilon(1e-14));

  CHECK_THROWS_AS(g_phi(unit_pixels({1.0, 0.8, 0.6}), {1.0}), std::invalid_argument);
}

TEST_CASE("g_phi orders the toy schedules") {
  const auto toy = synth::ToySpec::for_side(96);
  const synth::NoiseSpec none{25.0, 25.0, 1};
  const auto slow = synth::make_toy_dataset(synth::DenatureMode::Slow, toy, none).clean;
  const auto fast = synth::make_toy_dataset(synth::DenatureMode::Fast, toy, none).clean;
  CHECK(g_phi(slow).raw < g_phi(fast).raw);
  CHECK(g_phi(slow).raw > 0.0);
}

TEST_CASE("expected tau squared") {
  CHECK(expected_tau_sq({0.0}) == 0.0);
  std::vector<double> taus;
  for (int i = 1; i <= 24; ++i) taus.push_back(i / 10.0);
  // sum i^2 = 24 * 25 * 49 / 6 = 4900.
  CHECK(std::abs(expected_tau_sq(taus) - 4900.0 / 2400.0) < 1e-12);
  std::vector<double> scaled = taus;
  for (auto& t : scaled) t *= 3.0;
  CHECK(expected_tau_sq(scaled) == doctest::Approx(9.0 * expected_tau_sq(taus)).epsilon(1e-14));
  CHECK(expected_tau_sq({1.0, 2.0}, {0.25, 0.75}) == doctest::Approx(3.25));
  CHECK_THROWS_AS(expected_tau_sq({1.0, 2.0}, {0.5, 0.6}), std::invalid_argument);
}

TEST_CASE("bound report") {
  const nn::ModelSpec spec{.levels = {4, 8}};
  const auto zero = nn::make_param_layout(spec);
  const auto zeros = FrameSequence::uniform(std::vector<Image>(5, Image(8, 8, PixelDomain::Raw255, 0.0)));
  TrainConfig c;
  c.model = spec;
  c.sigma_tilde = 0.0;
  KeyValues meta;
  meta.set("mode", std::string("slow"));
  const auto r = bound_report(spec, zero, zeros, zeros, c, meta);
  CHECK(r.g_phi == 0.0);
  CHECK(r.g_phi_per_pixel == 0.0);
  CHECK(r.e_f_proxy == 0.0);
  CHECK(r.pred_gap == 0.0);
  CHECK(r.e_tau_sq == doctest::Approx((1 + 4 + 9 + 16) / 400.0).epsilon(1e-14));
  const auto kv = r.to_kv();
  for (const char* key : {"g_phi", "g_phi_per_pixel", "e_tau_sq", "e_f_proxy", "pred_gap", "mode"}) {
    CHECK(kv.get(key).has_value());
  }
}
