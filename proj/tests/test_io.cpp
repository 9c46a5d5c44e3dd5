#include <doctest.h>

#include <clocale>
#include <cmath>
#include <string>

#include "qfisher/error.hpp"
#include "qfisher/io.hpp"

using namespace qfisher;

namespace {

const std::string kData = QFISHER_TEST_DATA;

std::string config_path(const Json& j) {
  try {
    parse_simulate_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

Json sweep() {
  return Json::parse(R"({
    "model": {"kind": "discrete", "d": 3},
    "scheme": "discrete_grouping",
    "n": [100, 200, 400],
    "k": 1,
    "trials": 10,
    "seed": 4
  })");
}

}  // namespace

TEST_CASE("format_number prints nine significant digits") {
  CHECK(format_number(56.0 / 3.0) == "18.6666667");
  CHECK(format_number(1e-5) == "1e-05");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(123456789012.0) == "1.23456789e+11");
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(round_sig9(56.0 / 3.0) == 18.6666667);
}

TEST_CASE("number formatting ignores the process locale") {
  const char* previous = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = previous ? previous : "C";
  if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8") != nullptr) {
    CHECK(format_number(0.5) == "0.5");
    CHECK(round_sig9(0.25) == 0.25);
  }
  std::setlocale(LC_NUMERIC, saved.c_str());
}

TEST_CASE("json_number spells out non-finite values") {
  CHECK(json_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(json_number(2.5).get<double>() == 2.5);
  Vector v(2);
  v << 1.0, 1.0 / 3.0;
  CHECK(json_vector(v).dump() == "[1.0,0.333333333]");
}

TEST_CASE("models parse and round-trip") {
  const std::vector<std::string> texts = {
      R"({"kind":"gaussian_location","d":3,"sigma":2.0,"B":1.5})",
      R"({"kind":"gaussian_cov","d":2,"sigma_min":0.5,"sigma_max":2.0})",
      R"({"kind":"discrete","d":4,"domain":"corollary"})",
      R"({"kind":"discrete","d":4,"domain":"simplex"})",
      R"({"kind":"bernoulli","d":2,"regime":"sparse","eps":0.25})",
      R"({"kind":"holder","s":1.0,"L":1.0,"d":5})"};
  for (const std::string& t : texts) {
    const Model m = parse_model(Json::parse(t));
    const Model again = parse_model(model_to_json(m));
    CHECK(model_to_json(again) == model_to_json(m));
  }
  const Model cor = parse_model(Json::parse(R"({"kind":"discrete","d":4,"domain":"corollary"})"));
  CHECK(domain(cor).lower[0] == doctest::Approx(1.0 / 16));
}

TEST_CASE("model errors name the offending field") {
  const auto path_of = [](const char* text) {
    try {
      parse_model(Json::parse(text));
    } catch (const ConfigError& e) {
      return e.path();
    }
    return std::string();
  };
  CHECK(path_of(R"({"kind":"gaussian_location","d":3,"B":1})") == "model.sigma");
  CHECK(path_of(R"({"kind":"gaussian_location","d":3,"sigma":"x","B":1})") == "model.sigma");
  CHECK(path_of(R"({"kind":"gaussian_location","d":1.5,"sigma":1,"B":1})") == "model.d");
  CHECK(path_of(R"({"kind":"weird"})") == "model.kind");
  CHECK(path_of(R"({"kind":"bernoulli","d":2,"regime":"medium","eps":0.1})") == "model.regime");
  CHECK(path_of(R"({"kind":"discrete","d":2,"domain":"cube"})") == "model.domain");
  CHECK(path_of(R"({"kind":"gaussian_cov","d":1,"sigma_min":2,"sigma_max":1})") == "model");
  CHECK(path_of("[1,2]") == "model");
}

TEST_CASE("malformed JSON is a parse error") {
  try {
    read_json_file(kData + "/malformed.json");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
  CHECK(read_json_file(kData + "/discrete_d2.json")["d"] == 2);
  CHECK_THROWS_AS(read_text_file(kData + "/does_not_exist.json"), Error);
}

TEST_CASE("vectors parse from lists and arrays") {
  CHECK(parse_vector("0.125,0.125", "theta").isApprox(Vector::Constant(2, 0.125)));
  CHECK(parse_vector("[1, 2.5]", "theta")[1] == 2.5);
  CHECK_THROWS_AS(parse_vector("1,abc", "theta"), Error);
  CHECK_THROWS_AS(parse_vector("", "theta"), Error);
}

TEST_CASE("quantizer specs") {
  const Model disc = make_discrete(2);
  const Model gauss = make_gaussian_location(1, 1.0, 1.0);
  const Model gauss3 = make_gaussian_location(3, 1.0, 1.0);
  CHECK(parse_quantizer_spec("identity", disc).k() == 2);
  CHECK(parse_quantizer_spec("onecell", disc).k() == 1);
  CHECK(parse_quantizer_spec("onecell", gauss).k() == 1);
  CHECK(parse_quantizer_spec("sign@0.5", gauss).breakpoints() == std::vector<double>{0.5});
  CHECK(parse_quantizer_spec("sign", gauss).breakpoints() == std::vector<double>{0.0});
  CHECK(std::holds_alternative<CoordinateSign>(parse_quantizer_spec("sign", gauss3).representation()));
  CHECK(parse_quantizer_spec("cells@[-1,0,1]", gauss).k() == 2);
  const Quantizer coords = parse_quantizer_spec("coords@[1,3]", gauss3);
  CHECK(std::get<CoordinateSign>(coords.representation()).coords == std::vector<int>{0, 2});
  const Quantizer table = parse_quantizer_spec("csv@" + kData + "/table_k1.csv", disc);
  CHECK(table.k() == 1);
  CHECK(table.conditional(disc, Sample::Constant(1, 1))[0] == 0.5);

  CHECK_THROWS_AS(parse_quantizer_spec("identity", gauss), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("identity@3", disc), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("cells@", gauss), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("cells@[1,", gauss), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("coords@[4]", gauss3), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("sign@zero", gauss), Error);
  CHECK_THROWS_AS(parse_quantizer_spec("magic", gauss), Error);
  CHECK_THROWS_AS(load_table_csv(kData + "/table_bad_width.csv"), Error);
}

TEST_CASE("trees round-trip with 1-based labels") {
  const Json j = Json::parse(R"({"n":2,"k":1,"nodes":[
      {"label":1,"bit":"sign@0"},
      {"label":2,"bit":"interval@[-1,1]"},
      {"label":2,"bit":"const@0.5"}]})");
  const ProtocolTree tree = parse_tree(j);
  CHECK(tree.node(0).label == 0);
  CHECK(tree.node(2).label == 1);
  const Json back = tree_to_json(tree);
  CHECK(back["nodes"][1]["label"] == 2);
  CHECK(parse_tree(back).nodes().size() == 3);
  CHECK(tree_to_json(parse_tree(back)) == back);
}

TEST_CASE("simulate config: single sweep and sweep lists") {
  const auto one = parse_simulate_config(sweep());
  REQUIRE(one.size() == 1);
  CHECK(one[0].ns == std::vector<int>{100, 200, 400});
  CHECK(one[0].ks == std::vector<int>{1});
  CHECK(one[0].base.seed == 4);
  CHECK(one[0].resolved["protocol"] == "independent");

  Json many;
  many["sweeps"] = Json::array({sweep(), sweep()});
  many["sweeps"][1]["fit"] = "n";
  const auto two = parse_simulate_config(many);
  REQUIRE(two.size() == 2);
  CHECK_FALSE(two[0].fit.has_value());
  CHECK(two[1].fit == "n");
}

TEST_CASE("simulate config errors carry JSON paths") {
  Json j = sweep();
  j["trials"] = 0;
  CHECK(config_path(j) == "$.trials");

  j = sweep();
  j["n"] = Json::array({100, 0, 300});
  CHECK(config_path(j) == "$.n[1]");

  j = sweep();
  j["colour"] = "blue";
  CHECK(config_path(j) == "$.colour");

  j = sweep();
  j["scheme"] = "gaussian_sign";
  CHECK(config_path(j) == "$.scheme");

  j = sweep();
  j["model"].erase("d");
  CHECK(config_path(j) == "$.model.d");

  j = sweep();
  j["protocol"] = "shout";
  CHECK(config_path(j) == "$.protocol");

  j = sweep();
  j["fit"] = "trials";
  CHECK(config_path(j) == "$.fit");

  Json many;
  many["sweeps"] = Json::array({sweep(), sweep()});
  many["sweeps"][1]["k"] = "two";
  CHECK(config_path(many) == "sweeps[1].k");
  many["sweeps"] = Json::array();
  CHECK(config_path(many) == "sweeps");
}

TEST_CASE("results rows follow the CSV header") {
  ExperimentConfig c{make_discrete(3), "discrete_grouping"};
  c.n = 100;
  c.k = 1;
  RiskEstimate r;
  r.risk = 0.01;
  r.std_error = 0.001;
  r.trials = 10;
  r.bound.value = 0.004;
  r.ratio = 2.5;
  CHECK(std::string(kResultsCsvHeader) ==
        "model,d,n,k,protocol,scheme,trials,risk,stderr,bound,ratio");
  CHECK(results_csv_row(c, r) ==
        "discrete,3,100,1,independent,discrete_grouping,10,0.01,0.001,0.004,2.5");
  const Json j = to_json(c, r);
  CHECK(j["stderr"] == 0.001);
  CHECK(j["bound"]["value"] == 0.004);
}
