#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hybridlm/dialog.hpp"

using namespace hybridlm;

static Turn make_turn(Role role, std::vector<int32_t> text, std::vector<Frame> audio = {}) {
    Turn t;
    t.role = role;
    t.text = std::move(text);
    t.audio = std::move(audio);
    return t;
}

TEST_CASE("compact_history drops assistant audio only") {
    std::vector<Turn> turns = {make_turn(Role::User, {1, 2}, {{5, 6}}),
                               make_turn(Role::Assistant, {3}, {{7, 8}, {9, 10}})};
    auto out = compact_history(turns);
    REQUIRE(out.size() == 2);
    CHECK(out[0].audio.size() == 1);   // user speech kept as-is
    CHECK(out[1].audio.empty());       // assistant speech dropped
    CHECK(out[1].text == std::vector<int32_t>{3});
}

TEST_CASE("compact_history is idempotent and preserves count") {
    std::vector<Turn> turns = {make_turn(Role::User, {1}), make_turn(Role::Assistant, {2}, {{3, 4}}),
                               make_turn(Role::System, {5})};
    auto once = compact_history(turns);
    auto twice = compact_history(once);
    CHECK(once.size() == turns.size());
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].role == twice[i].role);
        CHECK(once[i].text == twice[i].text);
        CHECK(once[i].audio == twice[i].audio);
    }
    CHECK(compact_history({}).empty());
}

TEST_CASE("assemble_context produces the documented skeleton") {
    VocabSpec spec = make_vocab(50, 2, 8);
    Query q;
    q.text = {20};
    std::vector<double> agent = {1.0, 0.0};
    std::vector<double> user = {0.0, 1.0};

    auto ctx = assemble_context({}, q, agent, user, spec, 64, true);
    REQUIRE(ctx.items.size() == 5);
    CHECK(ctx.items[0].token.text_id == spec.role_user_id);
    CHECK(ctx.items[1].kind == ContextItem::Kind::SpeakerSlot);
    CHECK(ctx.items[1].vec == user);
    CHECK(ctx.items[2].token.text_id == 20);
    CHECK(ctx.items[3].token.text_id == spec.role_assistant_id);
    CHECK(ctx.items[4].kind == ContextItem::Kind::SpeakerSlot);
    CHECK(ctx.items[4].vec == agent);
    CHECK(ctx.injection_positions == std::vector<size_t>{1, 4});

    SUBCASE("injection disabled drops the slots") {
        auto plain = assemble_context({}, q, agent, user, spec, 64, false);
        CHECK(plain.items.size() == 3);
        CHECK(plain.injection_positions.empty());
    }
    SUBCASE("overlong context reports the overflow amount") {
        try {
            assemble_context({}, q, agent, user, spec, 3, true);
            FAIL("expected overflow");
        } catch (const ContextOverflowError& e) {
            CHECK(e.overflow() == 2);
        }
    }
}

TEST_CASE("assemble_context renders history turns with markers") {
    VocabSpec spec = make_vocab(50, 2, 8);
    std::vector<Turn> history = {make_turn(Role::System, {30}),
                                 make_turn(Role::User, {31}, {{1, 2}}),
                                 make_turn(Role::Assistant, {32}, {{3, 4}})};
    Query q;
    q.text = {20};
    auto ctx = assemble_context(history, q, {}, {}, spec, 64, false);
    // system, 30, user, 31, frame, assistant, 32 (audio compacted), user, 20, assistant
    REQUIRE(ctx.items.size() == 10);
    CHECK(ctx.items[0].token.text_id == spec.role_system_id);
    CHECK(ctx.items[4].token.is_audio());
    CHECK(ctx.items[6].token.text_id == 32);
    CHECK(ctx.items[9].token.text_id == spec.role_assistant_id);
}

TEST_CASE("feature queries ride the adapter path") {
    VocabSpec spec = make_vocab(50, 2, 8);
    Query q;
    q.features = {{0.5, -0.5}, {0.25, 0.0}};
    auto ctx = assemble_context({}, q, {}, {}, spec, 64, false);
    REQUIRE(ctx.items.size() == 4);
    CHECK(ctx.items[1].kind == ContextItem::Kind::Feature);
    CHECK(ctx.items[2].kind == ContextItem::Kind::Feature);
}

TEST_CASE("system turns never carry audio") {
    VocabSpec spec = make_vocab(50, 2, 8);
    std::vector<Turn> history = {make_turn(Role::System, {30}, {{1, 2}})};
    Query q;
    CHECK_THROWS_AS(assemble_context(history, q, {}, {}, spec, 64, false),
                    std::invalid_argument);
}

TEST_CASE("average_speaker_embeddings") {
    auto e = average_speaker_embeddings({{3.0, 0.0}});
    CHECK(e.vec == std::vector<double>{1.0, 0.0});
    CHECK(e.norm == doctest::Approx(1.0).epsilon(1e-12));

    auto same = average_speaker_embeddings({{0.0, 2.0}, {0.0, 2.0}});
    CHECK(same.vec[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto mixed = average_speaker_embeddings({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(mixed.vec[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(mixed.vec[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    // permutation invariance
    auto swapped = average_speaker_embeddings({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(swapped.vec == mixed.vec);

    CHECK_THROWS_AS(average_speaker_embeddings({}), std::invalid_argument);
    CHECK_THROWS_AS(average_speaker_embeddings({{1.0}, {1.0, 2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(average_speaker_embeddings({{1.0, 0.0}, {-1.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("truncate_oldest drops turns from the front") {
    VocabSpec spec = make_vocab(50, 2, 8);
    std::vector<Turn> history = {make_turn(Role::User, {1, 2, 3}),
                                 make_turn(Role::Assistant, {4}),
                                 make_turn(Role::User, {5})};
    size_t dropped = truncate_oldest(history, 5, spec);
    CHECK(dropped == 1);
    REQUIRE(history.size() == 2);
    CHECK(history[0].text == std::vector<int32_t>{4});
}
