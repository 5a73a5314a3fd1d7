#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "hybridlm/loss.hpp"
#include "oracles.hpp"

using namespace hybridlm;

static std::vector<double> uniform_dist(size_t n) {
    return std::vector<double>(n, 1.0 / (double)n);
}

static std::vector<double> random_dist(std::mt19937& rng, size_t n) {
    std::vector<double> p(n);
    double sum = 0.0;
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (double& x : p) {
        x = u(rng);
        sum += x;
    }
    for (double& x : p) x /= sum;
    return p;
}

TEST_CASE("uniform head0 text loss is ln of the vocabulary size") {
    VocabSpec spec = make_vocab(100, 1, 50);  // unified size 150
    PositionPrediction pred;
    pred.head0 = uniform_dist(150);
    auto res = hybrid_nll({pred}, {HybridToken::text(42)}, {1}, spec);
    CHECK(res.total == doctest::Approx(std::log(150.0)).epsilon(1e-12));
    CHECK(res.scored_positions == 1);
}

TEST_CASE("audio loss averages codebook cross-entropies") {
    VocabSpec spec = make_vocab(10, 2, 8);
    PositionPrediction pred;
    pred.head0.assign((size_t)spec.unified_head0_size(), 0.0);
    pred.head0[(size_t)(spec.text_size + 3)] = 0.5;  // p_0(correct) = 0.5
    double rest = 0.5 / (double)(spec.unified_head0_size() - 1);
    for (size_t i = 0; i < pred.head0.size(); ++i)
        if (i != (size_t)(spec.text_size + 3)) pred.head0[i] = rest;
    pred.heads.push_back(std::vector<double>(8, 0.75 / 7.0));
    pred.heads[0][5] = 0.25;  // p_1(correct) = 0.25

    auto res = hybrid_nll({pred}, {HybridToken::audio({3, 5})}, {1}, spec);
    double want = -(std::log(0.5) + std::log(0.25)) / 2.0;
    CHECK(res.total == doctest::Approx(want).epsilon(1e-12));
    CHECK(res.total == doctest::Approx(1.0397).epsilon(1e-4));
}

TEST_CASE("unscored positions contribute exactly zero") {
    VocabSpec spec = make_vocab(10, 1, 4);
    PositionPrediction pred;
    pred.head0 = uniform_dist((size_t)spec.unified_head0_size());
    auto res = hybrid_nll({pred, pred}, {HybridToken::text(0), HybridToken::text(1)}, {0, 0}, spec);
    CHECK(res.total == 0.0);
    CHECK(res.scored_positions == 0);
    CHECK(res.per_position == std::vector<double>{0.0, 0.0});
}

TEST_CASE("argument errors") {
    VocabSpec spec = make_vocab(10, 1, 4);
    PositionPrediction pred;
    pred.head0 = uniform_dist((size_t)spec.unified_head0_size());

    CHECK_THROWS_AS(hybrid_nll({pred}, {}, {}, spec), std::invalid_argument);
    CHECK_THROWS_AS(hybrid_nll({pred}, {HybridToken::text(10)}, {1}, spec), std::out_of_range);

    PositionPrediction bad = pred;
    bad.head0[0] += 0.1;
    CHECK_THROWS_AS(hybrid_nll({bad}, {HybridToken::text(0)}, {1}, spec), std::invalid_argument);
    bad = pred;
    bad.head0[0] = -bad.head0[0];
    CHECK_THROWS_AS(hybrid_nll({bad}, {HybridToken::text(0)}, {1}, spec), std::invalid_argument);
}

TEST_CASE("layer-0 pad scores the stop signal in Token mode only") {
    VocabSpec spec = make_vocab(10, 2, 8);
    std::mt19937 rng(3);
    PositionPrediction pred;
    pred.head0 = random_dist(rng, (size_t)spec.unified_head0_size());
    pred.heads.push_back(random_dist(rng, 8));

    HybridToken tgt = HybridToken::audio({spec.pad_audio_id, 5});

    spec.audio_eos_mode = AudioEosMode::Token;
    auto token_res = hybrid_nll({pred}, {tgt}, {1}, spec);
    double want = (-std::log(pred.head0[(size_t)spec.eos_audio_id]) -
                   std::log(pred.heads[0][5])) /
                  2.0;
    CHECK(token_res.total == doctest::Approx(want).epsilon(1e-12));

    spec.audio_eos_mode = AudioEosMode::Infer;
    auto infer_res = hybrid_nll({pred}, {tgt}, {1}, spec);
    CHECK(infer_res.total == doctest::Approx(-std::log(pred.heads[0][5])).epsilon(1e-12));
}

TEST_CASE("matches the independent oracle on random small instances") {
    std::mt19937 rng(1234);
    for (int iter = 0; iter < 500; ++iter) {
        int V = 2 + (int)(rng() % 7);
        int J = 1 + (int)(rng() % 4);
        int U = 3 + (int)(rng() % 6);
        VocabSpec spec;
        spec.text_size = V + 6;
        spec.codebook_sizes.assign((size_t)J, U);
        spec.pad_audio_id = U - 1;
        spec.bos_id = 0;
        spec.eos_text_id = 1;
        spec.eos_audio_id = 2;
        spec.role_user_id = 3;
        spec.role_assistant_id = 4;
        spec.role_system_id = 5;
        spec.audio_eos_mode = (rng() % 2) ? AudioEosMode::Token : AudioEosMode::Infer;
        REQUIRE(validate(spec).ok);

        int T = 1 + (int)(rng() % 6);
        std::vector<PositionPrediction> preds((size_t)T);
        HybridSeq targets;
        LossMask mask;
        for (int t = 0; t < T; ++t) {
            preds[(size_t)t].head0 = random_dist(rng, (size_t)spec.unified_head0_size());
            for (int j = 1; j < J; ++j)
                preds[(size_t)t].heads.push_back(random_dist(rng, (size_t)U));
            if (rng() % 2) {
                targets.push_back(HybridToken::text((int32_t)(rng() % (uint32_t)spec.text_size)));
            } else {
                Frame f((size_t)J);
                for (auto& v : f)
                    v = (rng() % 4 == 0) ? spec.pad_audio_id : (int32_t)(rng() % (uint32_t)U);
                targets.push_back(HybridToken::audio(f));
            }
            mask.push_back(rng() % 4 != 0);
        }

        auto res = hybrid_nll(preds, targets, mask, spec);
        double want = oracles::hybrid_nll(preds, targets, mask, spec);
        CHECK(std::abs(res.total - want) < 1e-10);

        // additivity over scored positions
        double sum = 0.0;
        for (size_t t = 0; t < targets.size(); ++t) sum += res.per_position[t];
        CHECK(res.total == sum);
    }
}

TEST_CASE("raising the correct token's probability never increases the loss") {
    std::mt19937 rng(77);
    VocabSpec spec = make_vocab(10, 1, 6);
    for (int iter = 0; iter < 100; ++iter) {
        PositionPrediction pred;
        pred.head0 = random_dist(rng, (size_t)spec.unified_head0_size());
        int32_t tgt = (int32_t)(rng() % (uint32_t)spec.text_size);
        auto base = hybrid_nll({pred}, {HybridToken::text(tgt)}, {1}, spec);

        // move mass toward the correct token, keep the rest proportional
        PositionPrediction boosted = pred;
        double delta = 0.5 * (1.0 - boosted.head0[(size_t)tgt]);
        double other = 1.0 - boosted.head0[(size_t)tgt];
        for (size_t i = 0; i < boosted.head0.size(); ++i)
            if (i != (size_t)tgt) boosted.head0[i] *= (other - delta) / other;
        boosted.head0[(size_t)tgt] += delta;
        auto up = hybrid_nll({boosted}, {HybridToken::text(tgt)}, {1}, spec);
        CHECK(up.total <= base.total + 1e-12);
    }
}

TEST_CASE("response mask scores exactly the assistant positions") {
    VocabSpec spec = make_vocab(20, 2, 8);
    Context items;
    auto text = [&](int32_t id) { return ContextItem::from_token(HybridToken::text(id)); };
    items.push_back(text(spec.role_user_id));
    items.push_back(text(10));
    items.push_back(text(11));
    items.push_back(text(spec.role_assistant_id));
    items.push_back(text(12));
    items.push_back(ContextItem::from_token(HybridToken::audio({1, 2})));
    items.push_back(ContextItem::from_token(HybridToken::audio({3, 4})));

    auto mask = build_response_mask(items, spec);
    CHECK(mask == LossMask{0, 0, 0, 0, 1, 1, 1});

    SUBCASE("all-user sequence is fully unscored") {
        Context user_only = {text(spec.role_user_id), text(10), text(11)};
        CHECK(build_response_mask(user_only, spec) == LossMask{0, 0, 0});
    }
    SUBCASE("assistant-only sequence scores everything but the marker") {
        Context asst = {text(spec.role_assistant_id), text(10), text(11)};
        CHECK(build_response_mask(asst, spec) == LossMask{0, 1, 1});
    }
    SUBCASE("speaker slots are unscored") {
        Context with_slot = items;
        with_slot.insert(with_slot.begin() + 4, ContextItem::speaker_slot({0.1, 0.2}));
        auto m = build_response_mask(with_slot, spec);
        CHECK(m == LossMask{0, 0, 0, 0, 0, 1, 1, 1});
    }
    SUBCASE("content before any marker is rejected") {
        Context bad = {text(10), text(spec.role_user_id)};
        CHECK_THROWS_AS(build_response_mask(bad, spec), std::invalid_argument);
    }
}
