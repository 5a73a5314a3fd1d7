#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "hybridlm/delay.hpp"

using namespace hybridlm;

static constexpr int32_t P = 99;

TEST_CASE("single codebook is the identity layout") {
    auto grid = apply_delay({{7}, {8}}, 1, P);
    REQUIRE(grid.rows.size() == 1);
    CHECK(grid.rows[0] == std::vector<int32_t>{7, 8});
    CHECK(invert_delay(grid) == std::vector<Frame>{{7}, {8}});
}

TEST_CASE("staircase layout for J=3, T=2") {
    std::vector<Frame> frames = {{1, 2, 3}, {4, 5, 6}};
    auto grid = apply_delay(frames, 3, P);
    CHECK(grid.width() == 4);
    CHECK(grid.rows[0] == std::vector<int32_t>{1, 4, P, P});
    CHECK(grid.rows[1] == std::vector<int32_t>{P, 2, 5, P});
    CHECK(grid.rows[2] == std::vector<int32_t>{P, P, 3, 6});
    CHECK(invert_delay(grid) == frames);

    CHECK(delayed_column(grid, 0) == Frame{1, P, P});
    CHECK(delayed_column(grid, 2) == Frame{P, 5, 3});
    CHECK_THROWS_AS(delayed_column(grid, 4), std::out_of_range);
}

TEST_CASE("empty frame list gives an empty grid") {
    auto grid = apply_delay({}, 4, P);
    CHECK(grid.width() == 0);
    CHECK(grid.num_frames == 0);
    CHECK(invert_delay(grid).empty());
}

TEST_CASE("errors") {
    CHECK_THROWS_AS(apply_delay({{1, 2}}, 3, P), std::invalid_argument);

    auto grid = apply_delay({{1, 2, 3}, {4, 5, 6}}, 3, P);
    SUBCASE("pad inside the non-pad window") {
        grid.rows[1][1] = P;
        CHECK_THROWS_AS(invert_delay(grid), std::invalid_argument);
    }
    SUBCASE("non-pad in the margin") {
        grid.rows[2][0] = 1;
        CHECK_THROWS_AS(invert_delay(grid), std::invalid_argument);
    }
    SUBCASE("inconsistent width") {
        grid.rows[0].pop_back();
        CHECK_THROWS_AS(invert_delay(grid), std::invalid_argument);
    }
}

TEST_CASE("roundtrip, pad count, and width monotonicity") {
    std::mt19937 rng(11);
    for (int J : {1, 2, 4, 8}) {
        size_t prev_width = 0;
        for (int T : {1, 2, 5, 17, 64}) {
            std::vector<Frame> frames((size_t)T, Frame((size_t)J));
            for (auto& f : frames)
                for (auto& v : f) v = (int32_t)(rng() % 90);  // stays clear of pad id 99

            auto grid = apply_delay(frames, J, P);
            CHECK(grid.width() == (size_t)(T + J - 1));
            CHECK(grid.width() > prev_width);
            prev_width = grid.width();

            size_t pads = 0;
            for (const auto& row : grid.rows)
                for (int32_t v : row)
                    if (v == P) ++pads;
            CHECK(pads == (size_t)(J * (J - 1)));
            CHECK((size_t)J * grid.width() - pads == (size_t)(J * T));

            CHECK(invert_delay(grid) == frames);
            CHECK(grid_well_formed(grid));
        }
    }
}
