#include <doctest.h>

#include "qfisher/error.hpp"
#include "qfisher/verify.hpp"

using namespace qfisher;

TEST_CASE("small lemma2 and tree runs pass") {
  const SuiteReport lemma = verify_lemma2(9, 1);
  CHECK(lemma.checks.size() == 9);
  CHECK(lemma.passed());
  CHECK(lemma.max_value("triple") < 1e-5);

  const SuiteReport trees = verify_tree_identity(8, 2);
  CHECK(trees.checks.size() == 16);
  CHECK(trees.passed());

  const SuiteReport board = verify_blackboard_chain(4, 3);
  CHECK(board.checks.size() == 4 * 2 + 10);
  CHECK(board.passed());
}

TEST_CASE("orlicz suite passes") {
  const SuiteReport r = verify_orlicz();
  CHECK(r.checks.size() == 2);
  CHECK(r.passed());
}

TEST_CASE("suite names and dispatch") {
  CHECK(suite_names().size() == 6);
  CHECK_THROWS_AS(run_suite("no-such-suite", 1), Error);
  CHECK(run_suite("orlicz", 1).suite == "orlicz");
}

TEST_CASE("an empty report does not pass") {
  SuiteReport empty{"x", {}};
  CHECK_FALSE(empty.passed());
  SuiteReport one{"x", {{"a", 1.0, 2.0, true}, {"b", 3.0, 2.0, false}}};
  CHECK_FALSE(one.passed());
  CHECK(one.max_value("") == 3.0);
  CHECK(one.max_value("a") == 1.0);
}
