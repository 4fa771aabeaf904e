#include <catch2/catch_amalgamated.hpp>
#include "astro/pipeline.hpp"
TEST_CASE("smoke", "[topology]") { REQUIRE(true); }
