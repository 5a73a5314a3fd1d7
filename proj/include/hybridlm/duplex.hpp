#pragma once
// Full-duplex turn-taking state machine: listening, transcription gating,
// turn-completion decision, response streaming, and barge-in interruption.
// Timing is trace-ordinal; detectors are replaceable table-driven stubs.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hybridlm {

enum class DuplexState { Listening, AwaitingTranscript, AwaitingVerdict, Responding };

struct DuplexEvent {
    enum class Kind { SpeechStart, SpeechEnd, Transcript, Verdict, ResponseChunk, ResponseDone };
    Kind kind = Kind::SpeechStart;
    int64_t segment = -1;              // SpeechEnd / Transcript / Verdict
    std::string text;                  // Transcript payload
    bool finished = false;             // Verdict payload
    std::vector<int32_t> tokens;       // ResponseChunk payload
};

struct DuplexAction {
    enum class Kind {
        Transcribe,
        DetectTurn,
        StartGeneration,
        Emit,
        CommitTurn,
        AbortGeneration,
        CommitPartial,
        CancelVerdict
    };
    Kind kind = Kind::Transcribe;
    int64_t segment = -1;
    std::string text;                  // DetectTurn / StartGeneration transcript
    std::vector<int32_t> tokens;       // Emit / Commit payloads
    bool truncated = false;            // CommitPartial marks the prefix truncated
};

const char* to_string(DuplexState s);
const char* to_string(DuplexEvent::Kind k);
const char* to_string(DuplexAction::Kind k);

class ProtocolViolation : public std::runtime_error {
   public:
    ProtocolViolation(DuplexState state, DuplexEvent::Kind event)
        : std::runtime_error(std::string("illegal event ") + to_string(event) + " in state " +
                             to_string(state)),
          state_(state),
          event_(event) {}
    DuplexState state() const { return state_; }
    DuplexEvent::Kind event() const { return event_; }

   private:
    DuplexState state_;
    DuplexEvent::Kind event_;
};

// The machine is single-threaded by contract; events arrive serialized.
class DuplexMachine {
   public:
    DuplexMachine() = default;

    // Applies one event; returns the emitted actions. Throws
    // ProtocolViolation on an undefined (state, event) pair and on
    // non-monotone or mismatched segment ids.
    std::vector<DuplexAction> step(const DuplexEvent& event);

    DuplexState state() const { return state_; }
    const std::vector<int32_t>& partial_response() const { return partial_; }

    // test hook: force a state (used by the exhaustive table test)
    void force_state(DuplexState s) { state_ = s; }

   private:
    DuplexState state_ = DuplexState::Listening;
    std::vector<int32_t> partial_;     // response emitted so far
    std::string pending_text_;         // transcript awaiting a verdict
    int64_t pending_segment_ = -1;
    int64_t last_segment_ = -1;
};

// Four replaceable detector roles. Activity detection is trace-driven
// (SpeechStart/SpeechEnd arrive as events); the remaining stubs fill event
// payloads from scripted tables.
struct DetectorSuite {
    std::map<int64_t, std::string> transcripts;            // segment -> text
    std::map<int64_t, bool> finished;                      // segment -> verdict
    std::vector<std::vector<std::vector<int32_t>>> responses;  // per generation: chunks
};

struct CommittedTurn {
    std::vector<int32_t> tokens;
    bool truncated = false;
};

struct RunResult {
    std::vector<DuplexAction> log;
    std::vector<CommittedTurn> history;
};

// Folds step over the trace, filling Transcript/Verdict/ResponseChunk
// payloads from the suite tables, and applies commit actions to a history.
// Deterministic; protocol violations propagate.
RunResult run(const std::vector<DuplexEvent>& trace, const DetectorSuite& suite);

// ---- file formats (line-delimited events / actions, JSON suite tables) ----

std::vector<DuplexEvent> read_trace(const std::string& path);
DetectorSuite read_suite(const std::string& path);

// one serialized action per line; golden-file comparisons use these bytes
std::string action_log_text(const std::vector<DuplexAction>& log);
void write_action_log(const std::string& path, const std::vector<DuplexAction>& log);

}  // namespace hybridlm
