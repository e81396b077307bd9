#include <catch2/catch_amalgamated.hpp>
// populated alongside the matching module
