#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "barter/rational.hpp"

using namespace barter;

TEST_CASE("rational parsing is exact") {
  CHECK(*try_parse_rational("12") == Rat(12));
  CHECK(*try_parse_rational("-7") == Rat(-7));
  CHECK(*try_parse_rational("3/4") == Rat(3, 4));
  CHECK(*try_parse_rational("-3/4") == Rat(-3, 4));
  CHECK(*try_parse_rational("0.25") == Rat(1, 4));
  CHECK(*try_parse_rational("-1.5") == Rat(-3, 2));
  CHECK(*try_parse_rational("0.1") == Rat(1, 10));  // not representable in binary
  CHECK(*try_parse_rational("100.") == Rat(100));
  CHECK(*try_parse_rational(".5") == Rat(1, 2));
  CHECK(*try_parse_rational("6/4") == Rat(3, 2));  // normalized

  CHECK_FALSE(try_parse_rational(""));
  CHECK_FALSE(try_parse_rational("abc"));
  CHECK_FALSE(try_parse_rational("1/0"));
  CHECK_FALSE(try_parse_rational("1.2.3"));
  CHECK_FALSE(try_parse_rational("1e5"));
  CHECK_FALSE(try_parse_rational("."));
}

TEST_CASE("formatting uses lowest terms") {
  CHECK(format_rational(Rat(3)) == "3");
  CHECK(format_rational(Rat(-3, 2)) == "-3/2");
  CHECK(format_rational(Rat(6, 4)) == "3/2");
  CHECK(format_rational(Rat(0)) == "0");
}

TEST_CASE("format and parse round-trip") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    long long num = (long long)(rng() % 20001) - 10000;
    long long den = 1 + (long long)(rng() % 999);
    Rat r(num, den);
    auto back = try_parse_rational(format_rational(r));
    REQUIRE(back);
    CHECK(*back == r);
  }
}

TEST_CASE("floor and ceiling handle negatives") {
  CHECK(floor_int(Rat(7, 2)) == 3);
  CHECK(ceil_int(Rat(7, 2)) == 4);
  CHECK(floor_int(Rat(-7, 2)) == -4);
  CHECK(ceil_int(Rat(-7, 2)) == -3);
  CHECK(floor_int(Rat(4)) == 4);
  CHECK(ceil_int(Rat(4)) == 4);
  CHECK(frac_part(Rat(7, 2)) == Rat(1, 2));
  CHECK(frac_part(Rat(-7, 2)) == Rat(1, 2));
  CHECK(is_integer(Rat(8, 4)));
  CHECK_FALSE(is_integer(Rat(8, 3)));
}
