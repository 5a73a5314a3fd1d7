#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hybridlm/duplex.hpp"

using namespace hybridlm;

using EK = DuplexEvent::Kind;
using AK = DuplexAction::Kind;

static DuplexEvent ev(EK kind, int64_t seg = -1, std::string text = "", bool finished = false,
                      std::vector<int32_t> tokens = {}) {
    DuplexEvent e;
    e.kind = kind;
    e.segment = seg;
    e.text = std::move(text);
    e.finished = finished;
    e.tokens = std::move(tokens);
    return e;
}

// drive a fresh machine into the requested state through legal events
static DuplexMachine in_state(DuplexState s) {
    DuplexMachine m;
    if (s == DuplexState::Listening) return m;
    m.step(ev(EK::SpeechEnd, 0));
    if (s == DuplexState::AwaitingTranscript) return m;
    m.step(ev(EK::Transcript, 0, "hi"));
    if (s == DuplexState::AwaitingVerdict) return m;
    m.step(ev(EK::Verdict, 0, "", true));
    return m;
}

TEST_CASE("the transition table is total: every pair acts or raises") {
    struct Probe {
        EK kind;
        DuplexEvent event;
    };
    std::vector<Probe> probes = {
        {EK::SpeechStart, ev(EK::SpeechStart)},
        {EK::SpeechEnd, ev(EK::SpeechEnd, 1)},
        {EK::Transcript, ev(EK::Transcript, 0, "words")},
        {EK::Verdict, ev(EK::Verdict, 0, "", true)},
        {EK::ResponseChunk, ev(EK::ResponseChunk, -1, "", false, {7})},
        {EK::ResponseDone, ev(EK::ResponseDone)},
    };
    std::vector<DuplexState> states = {DuplexState::Listening, DuplexState::AwaitingTranscript,
                                       DuplexState::AwaitingVerdict, DuplexState::Responding};

    auto defined = [](DuplexState s, EK k) {
        switch (s) {
            case DuplexState::Listening: return k == EK::SpeechStart || k == EK::SpeechEnd;
            case DuplexState::AwaitingTranscript: return k == EK::Transcript;
            case DuplexState::AwaitingVerdict:
                return k == EK::Verdict || k == EK::SpeechStart;
            case DuplexState::Responding:
                return k == EK::ResponseChunk || k == EK::ResponseDone || k == EK::SpeechStart;
        }
        return false;
    };

    int checked = 0;
    for (DuplexState s : states) {
        for (const Probe& p : probes) {
            DuplexMachine m = in_state(s);
            if (defined(s, p.kind)) {
                CHECK_NOTHROW(m.step(p.event));
            } else {
                CHECK_THROWS_AS(m.step(p.event), ProtocolViolation);
            }
            ++checked;
        }
    }
    CHECK(checked == 24);
}

TEST_CASE("named transitions and their actions") {
    SUBCASE("finished verdict starts generation") {
        DuplexMachine m = in_state(DuplexState::AwaitingVerdict);
        auto actions = m.step(ev(EK::Verdict, 0, "", true));
        REQUIRE(actions.size() == 1);
        CHECK(actions[0].kind == AK::StartGeneration);
        CHECK(actions[0].text == "hi");
        CHECK(m.state() == DuplexState::Responding);
    }
    SUBCASE("unfinished verdict returns to listening silently") {
        DuplexMachine m = in_state(DuplexState::AwaitingVerdict);
        auto actions = m.step(ev(EK::Verdict, 0, "", false));
        CHECK(actions.empty());
        CHECK(m.state() == DuplexState::Listening);
    }
    SUBCASE("empty transcript returns to listening with no action") {
        DuplexMachine m = in_state(DuplexState::AwaitingTranscript);
        auto actions = m.step(ev(EK::Transcript, 0, ""));
        CHECK(actions.empty());
        CHECK(m.state() == DuplexState::Listening);
    }
    SUBCASE("barge-in aborts and commits the truncated prefix") {
        DuplexMachine m = in_state(DuplexState::Responding);
        m.step(ev(EK::ResponseChunk, -1, "", false, {1, 2}));
        auto actions = m.step(ev(EK::SpeechStart));
        REQUIRE(actions.size() == 2);
        CHECK(actions[0].kind == AK::AbortGeneration);
        CHECK(actions[1].kind == AK::CommitPartial);
        CHECK(actions[1].tokens == std::vector<int32_t>{1, 2});
        CHECK(actions[1].truncated);
        CHECK(m.state() == DuplexState::Listening);
    }
    SUBCASE("speech during a pending verdict cancels it") {
        DuplexMachine m = in_state(DuplexState::AwaitingVerdict);
        auto actions = m.step(ev(EK::SpeechStart));
        REQUIRE(actions.size() == 1);
        CHECK(actions[0].kind == AK::CancelVerdict);
        CHECK(m.state() == DuplexState::Listening);
    }
    SUBCASE("done commits the full response") {
        DuplexMachine m = in_state(DuplexState::Responding);
        m.step(ev(EK::ResponseChunk, -1, "", false, {1}));
        m.step(ev(EK::ResponseChunk, -1, "", false, {2, 3}));
        auto actions = m.step(ev(EK::ResponseDone));
        REQUIRE(actions.size() == 1);
        CHECK(actions[0].kind == AK::CommitTurn);
        CHECK(actions[0].tokens == std::vector<int32_t>{1, 2, 3});
    }
}

TEST_CASE("segment ids must strictly increase") {
    DuplexMachine m;
    m.step(ev(EK::SpeechEnd, 3));
    m.step(ev(EK::Transcript, 3, ""));
    CHECK_THROWS_AS(m.step(ev(EK::SpeechEnd, 3)), ProtocolViolation);
    CHECK_NOTHROW(m.step(ev(EK::SpeechEnd, 4)));
    // transcript for the wrong segment
    CHECK_THROWS_AS(m.step(ev(EK::Transcript, 3, "x")), ProtocolViolation);
}

TEST_CASE("the machine returns to listening within three events from any state") {
    // Listening: already there. AwaitingTranscript: empty transcript.
    // AwaitingVerdict: unfinished verdict. Responding: done.
    DuplexMachine a = in_state(DuplexState::AwaitingTranscript);
    a.step(ev(EK::Transcript, 0, ""));
    CHECK(a.state() == DuplexState::Listening);

    DuplexMachine b = in_state(DuplexState::AwaitingVerdict);
    b.step(ev(EK::Verdict, 0, "", false));
    CHECK(b.state() == DuplexState::Listening);

    DuplexMachine c = in_state(DuplexState::Responding);
    c.step(ev(EK::ResponseDone));
    CHECK(c.state() == DuplexState::Listening);
}

static DetectorSuite happy_suite() {
    DetectorSuite suite;
    suite.transcripts[0] = "turn on the lights";
    suite.finished[0] = true;
    suite.responses = {{{11, 12}, {13}}};
    return suite;
}

static std::vector<DuplexEvent> happy_trace() {
    return {ev(EK::SpeechStart), ev(EK::SpeechEnd, 0),   ev(EK::Transcript, 0),
            ev(EK::Verdict, 0),  ev(EK::ResponseChunk), ev(EK::ResponseChunk),
            ev(EK::ResponseDone)};
}

TEST_CASE("run folds the trace and fills payloads from the suite") {
    CHECK(run({}, {}).log.empty());

    auto result = run(happy_trace(), happy_suite());
    std::vector<AK> kinds;
    for (const auto& a : result.log) kinds.push_back(a.kind);
    CHECK(kinds == std::vector<AK>{AK::Transcribe, AK::DetectTurn, AK::StartGeneration, AK::Emit,
                                   AK::Emit, AK::CommitTurn});
    REQUIRE(result.history.size() == 1);
    CHECK(result.history[0].tokens == std::vector<int32_t>{11, 12, 13});
    CHECK_FALSE(result.history[0].truncated);
}

TEST_CASE("barge-in yields exactly one abort and a truncated history turn") {
    DetectorSuite suite;
    suite.transcripts[0] = "play some jazz";
    suite.transcripts[1] = "no stop";
    suite.finished[0] = true;
    suite.finished[1] = true;
    suite.responses = {{{21, 22}, {23, 24}}, {{31}}};

    std::vector<DuplexEvent> trace = {
        ev(EK::SpeechStart), ev(EK::SpeechEnd, 0), ev(EK::Transcript, 0), ev(EK::Verdict, 0),
        ev(EK::ResponseChunk),
        ev(EK::SpeechStart),  // barge-in
        ev(EK::SpeechEnd, 1), ev(EK::Transcript, 1), ev(EK::Verdict, 1), ev(EK::ResponseChunk),
        ev(EK::ResponseDone)};

    auto result = run(trace, suite);
    int aborts = 0;
    for (const auto& a : result.log)
        if (a.kind == AK::AbortGeneration) ++aborts;
    CHECK(aborts == 1);

    REQUIRE(result.history.size() == 2);
    CHECK(result.history[0].truncated);
    CHECK(result.history[0].tokens == std::vector<int32_t>{21, 22});
    CHECK_FALSE(result.history[1].truncated);
    CHECK(result.history[1].tokens == std::vector<int32_t>{31});
}

TEST_CASE("run is deterministic") {
    auto a = run(happy_trace(), happy_suite());
    auto b = run(happy_trace(), happy_suite());
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].kind == b.log[i].kind);
        CHECK(a.log[i].segment == b.log[i].segment);
        CHECK(a.log[i].text == b.log[i].text);
        CHECK(a.log[i].tokens == b.log[i].tokens);
    }
}

TEST_CASE("missing suite entries are reported") {
    DetectorSuite suite;  // empty tables
    std::vector<DuplexEvent> trace = {ev(EK::SpeechEnd, 0), ev(EK::Transcript, 0)};
    CHECK_THROWS_AS(run(trace, suite), std::out_of_range);
}
