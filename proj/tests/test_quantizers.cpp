#include <doctest.h>

#include <cmath>

#include "qfisher/error.hpp"
#include "qfisher/quantizers.hpp"

using namespace qfisher;

namespace {

Sample point(double x) { return Sample::Constant(1, x); }

}  // namespace

TEST_CASE("quantize examples") {
  Rng rng(1);
  const Model disc = make_discrete(2);
  const Quantizer id = Quantizer::identity(3);
  CHECK(id.k() == 2);
  // Messages are 0-based, so category 2 maps to message index 1.
  CHECK(quantize(id, disc, point(2), rng) == 1);

  const Model gauss = make_gaussian_location(1, 1.0, 1.0);
  CHECK(quantize(Quantizer::sign(0.0), gauss, point(-0.7), rng) == 0);
  CHECK(quantize(Quantizer::sign(0.0), gauss, point(0.7), rng) == 1);
  CHECK(quantize(Quantizer::sign(0.0), gauss, point(0.0), rng) == 0);
}

TEST_CASE("quantizer validation") {
  CHECK_THROWS_AS(Quantizer(1, DiscreteTable{{{0.5, 0.6}}}), Error);
  CHECK_THROWS_AS(Quantizer(1, DiscreteTable{{{1.0, 0.0, 0.0}}}), Error);
  CHECK_THROWS_AS(Quantizer(1, CellPartition{{1.0, 0.0}, {}}), Error);
  CHECK_THROWS_AS(Quantizer(1, CellPartition{{-1.0, 0.0, 1.0}, {}}), Error);
  CHECK_NOTHROW(Quantizer(1, CellPartition{{-1.0, 0.0, 1.0}, {{1, 0}, {0, 1}, {1, 0}, {0, 1}}}));
  CHECK_THROWS_AS(Quantizer(1, CoordinateSign{{0, 1}, {0.0, 0.0}}), Error);
  CHECK_THROWS_AS(Quantizer(2, CoordinateSign{{0, 1}, {0.0}}), Error);
  CHECK(bits_for(1) == 1);
  CHECK(bits_for(2) == 1);
  CHECK(bits_for(3) == 2);
  CHECK(bits_for(9) == 4);
}

TEST_CASE("table rows must cover the sample") {
  Rng rng(2);
  const Quantizer q = Quantizer::identity(2);
  CHECK_THROWS_AS(quantize(q, make_discrete(2), point(3), rng), Error);
}

TEST_CASE("deterministic fast path agrees with the conditional") {
  const Model disc = make_discrete(3);
  const int assignment[] = {1, 0, 1, 1};
  const Quantizer q = Quantizer::from_assignment(assignment, 1);
  for (int c = 1; c <= 4; ++c) {
    const auto m = q.deterministic_message(disc, point(c));
    REQUIRE(m.has_value());
    CHECK(*m == assignment[c - 1]);
    CHECK(q.conditional(disc, point(c))[*m] == 1.0);
  }

  const Quantizer mixed(1, DiscreteTable{{{0.5, 0.5}, {1, 0}, {0, 1}, {0, 1}}});
  CHECK_FALSE(mixed.deterministic_message(disc, point(1)).has_value());
  CHECK(mixed.deterministic_message(disc, point(2)) == 0);

  const Model gauss = make_gaussian_location(3, 1.0, 1.0);
  const Quantizer signs(2, CoordinateSign{{2, 0}, {0.0, 0.5}});
  Sample x(3);
  x << 1.0, -4.0, 0.1;
  CHECK(signs.deterministic_message(gauss, x) == 3);
  x << 1.0, -4.0, -0.1;
  CHECK(signs.deterministic_message(gauss, x) == 2);
}

TEST_CASE("randomized tables are sampled with the right frequencies") {
  const Model disc = make_discrete(1);
  const Quantizer q(1, DiscreteTable{{{0.3, 0.7}, {1.0, 0.0}}});
  Rng rng(9);
  int ones = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ones += quantize(q, disc, point(1), rng);
  const double se = std::sqrt(0.7 * 0.3 / draws);
  CHECK(std::abs(ones / double(draws) - 0.7) < 4 * se);
}

TEST_CASE("message_likelihood examples") {
  const Model disc = make_discrete(2);
  Vector theta(2);
  theta << 0.125, 0.125;
  CHECK(message_likelihood(Quantizer::identity(3), disc, theta, 2) == doctest::Approx(0.75));
  CHECK(message_likelihood(Quantizer::identity(3), disc, theta, 3) == 0.0);

  const Model gauss = make_gaussian_location(1, 1.0, 2.0);
  const Quantizer sign = Quantizer::sign(0.0);
  CHECK(message_likelihood(sign, gauss, Vector::Zero(1), 0) == doctest::Approx(0.5));
  CHECK(message_likelihood(sign, gauss, Vector::Zero(1), 1) == doctest::Approx(0.5));
  CHECK(message_likelihood(sign, gauss, Vector::Ones(1), 1) ==
        doctest::Approx(0.841345).epsilon(1e-6));
}

TEST_CASE("atomize is exact on finite supports and sums to one on the line") {
  const Model disc = make_discrete(2);
  Vector theta(2);
  theta << 0.2, 0.3;
  const auto atoms = atomize(disc, theta, {});
  REQUIRE(atoms.size() == 3);
  CHECK(atoms[2].mass == doctest::Approx(0.5));
  Vector score_total = Vector::Zero(2);
  for (const Atom& a : atoms) score_total += a.score_mass;
  CHECK(score_total.norm() < 1e-14);

  const Model gauss = make_gaussian_location(1, 1.5, 2.0);
  const double cuts[] = {-1.0, 0.0, 2.5};
  const auto line = atomize(gauss, Vector::Constant(1, 0.3), cuts);
  CHECK(line.size() == 4);
  double mass = 0.0;
  double smass = 0.0;
  for (const Atom& a : line) {
    mass += a.mass;
    smass += a.score_mass[0];
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(smass) < 1e-9);
}

TEST_CASE("sequential strategy serves listed histories first") {
  SequentialStrategy strategy(1, [](std::span<const Message> h) {
    return Quantizer::sign(static_cast<double>(h.size()));
  });
  strategy.set({1}, Quantizer::sign(-5.0));
  const std::vector<Message> empty;
  CHECK(strategy.for_history(empty).breakpoints() == std::vector<double>{0.0});
  CHECK(strategy.for_history(std::vector<Message>{1}).breakpoints() == std::vector<double>{-5.0});
  CHECK(strategy.for_history(std::vector<Message>{0, 1}).breakpoints() ==
        std::vector<double>{2.0});

  SequentialStrategy wrong(2, [](std::span<const Message>) { return Quantizer::sign(0.0); });
  CHECK_THROWS_AS(wrong.for_history(empty), Error);
}

TEST_CASE("bit functions parse and print") {
  for (const char* text : {"sign@0.5", "interval@[-1,2]", "table@[0.25,1,0]", "const@0.5"}) {
    CHECK(BitFunction::parse(text).to_string() == text);
  }
  CHECK_THROWS_AS(BitFunction::parse("wobble@1"), Error);
  const Model gauss = make_gaussian_location(1, 1.0, 1.0);
  CHECK(BitFunction::parse("interval@[-1,2]")(gauss, point(2.0)) == 1.0);
  CHECK(BitFunction::parse("interval@[-1,2]")(gauss, point(-1.0)) == 0.0);
  CHECK_THROWS_AS(BitFunction::parse("const@1.5"), Error);
  CHECK_FALSE(BitFunction(ConstBit{1.5}).in_unit_interval(nullptr));
}
