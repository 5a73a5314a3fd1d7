#include "hybridlm/duplex.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hybridlm {

const char* to_string(DuplexState s) {
    switch (s) {
        case DuplexState::Listening: return "Listening";
        case DuplexState::AwaitingTranscript: return "AwaitingTranscript";
        case DuplexState::AwaitingVerdict: return "AwaitingVerdict";
        case DuplexState::Responding: return "Responding";
    }
    return "?";
}

const char* to_string(DuplexEvent::Kind k) {
    switch (k) {
        case DuplexEvent::Kind::SpeechStart: return "SpeechStart";
        case DuplexEvent::Kind::SpeechEnd: return "SpeechEnd";
        case DuplexEvent::Kind::Transcript: return "Transcript";
        case DuplexEvent::Kind::Verdict: return "Verdict";
        case DuplexEvent::Kind::ResponseChunk: return "ResponseChunk";
        case DuplexEvent::Kind::ResponseDone: return "ResponseDone";
    }
    return "?";
}

const char* to_string(DuplexAction::Kind k) {
    switch (k) {
        case DuplexAction::Kind::Transcribe: return "transcribe";
        case DuplexAction::Kind::DetectTurn: return "detect-turn";
        case DuplexAction::Kind::StartGeneration: return "start-generation";
        case DuplexAction::Kind::Emit: return "emit";
        case DuplexAction::Kind::CommitTurn: return "commit-turn";
        case DuplexAction::Kind::AbortGeneration: return "abort-generation";
        case DuplexAction::Kind::CommitPartial: return "commit-partial";
        case DuplexAction::Kind::CancelVerdict: return "cancel-verdict";
    }
    return "?";
}

std::vector<DuplexAction> DuplexMachine::step(const DuplexEvent& ev) {
    using EK = DuplexEvent::Kind;
    using AK = DuplexAction::Kind;
    std::vector<DuplexAction> actions;
    auto act = [&](AK kind) -> DuplexAction& {
        DuplexAction a;
        a.kind = kind;
        actions.push_back(std::move(a));
        return actions.back();
    };

    // segment ids must strictly increase across SpeechEnd events and match
    // the pending segment through transcript and verdict
    if (ev.kind == EK::SpeechEnd) {
        if (ev.segment <= last_segment_) throw ProtocolViolation(state_, ev.kind);
    } else if (ev.kind == EK::Transcript || ev.kind == EK::Verdict) {
        if (ev.segment != pending_segment_) throw ProtocolViolation(state_, ev.kind);
    }

    switch (state_) {
        case DuplexState::Listening:
            if (ev.kind == EK::SpeechStart) return actions;  // keep listening
            if (ev.kind == EK::SpeechEnd) {
                last_segment_ = ev.segment;
                pending_segment_ = ev.segment;
                state_ = DuplexState::AwaitingTranscript;
                auto& a = act(AK::Transcribe);
                a.segment = ev.segment;
                return actions;
            }
            break;

        case DuplexState::AwaitingTranscript:
            if (ev.kind == EK::Transcript) {
                if (ev.text.empty()) {
                    state_ = DuplexState::Listening;  // noise, nothing to process
                    return actions;
                }
                pending_text_ = ev.text;
                state_ = DuplexState::AwaitingVerdict;
                auto& a = act(AK::DetectTurn);
                a.segment = ev.segment;
                a.text = ev.text;
                return actions;
            }
            break;

        case DuplexState::AwaitingVerdict:
            if (ev.kind == EK::Verdict) {
                if (ev.finished) {
                    state_ = DuplexState::Responding;
                    partial_.clear();
                    auto& a = act(AK::StartGeneration);
                    a.segment = ev.segment;
                    a.text = pending_text_;
                    return actions;
                }
                state_ = DuplexState::Listening;  // unfinished: wait for more speech
                return actions;
            }
            if (ev.kind == EK::SpeechStart) {
                // user keeps talking: drop the pending verdict and listen on
                state_ = DuplexState::Listening;
                act(AK::CancelVerdict).segment = pending_segment_;
                return actions;
            }
            break;

        case DuplexState::Responding:
            if (ev.kind == EK::ResponseChunk) {
                partial_.insert(partial_.end(), ev.tokens.begin(), ev.tokens.end());
                act(AK::Emit).tokens = ev.tokens;
                return actions;
            }
            if (ev.kind == EK::ResponseDone) {
                state_ = DuplexState::Listening;
                auto& a = act(AK::CommitTurn);
                a.tokens = partial_;
                partial_.clear();
                return actions;
            }
            if (ev.kind == EK::SpeechStart) {
                // barge-in: abort and keep the already-spoken prefix
                state_ = DuplexState::Listening;
                act(AK::AbortGeneration);
                auto& a = act(AK::CommitPartial);
                a.tokens = partial_;
                a.truncated = true;
                partial_.clear();
                return actions;
            }
            break;
    }
    throw ProtocolViolation(state_, ev.kind);
}

RunResult run(const std::vector<DuplexEvent>& trace, const DetectorSuite& suite) {
    RunResult result;
    DuplexMachine machine;
    size_t generation = 0;   // completed or aborted StartGeneration count
    size_t chunk_cursor = 0;

    for (DuplexEvent ev : trace) {
        // fill scripted payloads
        switch (ev.kind) {
            case DuplexEvent::Kind::Transcript: {
                auto it = suite.transcripts.find(ev.segment);
                if (it == suite.transcripts.end())
                    throw std::out_of_range("suite has no transcript for segment " +
                                            std::to_string(ev.segment));
                ev.text = it->second;
                break;
            }
            case DuplexEvent::Kind::Verdict: {
                auto it = suite.finished.find(ev.segment);
                if (it == suite.finished.end())
                    throw std::out_of_range("suite has no verdict for segment " +
                                            std::to_string(ev.segment));
                ev.finished = it->second;
                break;
            }
            case DuplexEvent::Kind::ResponseChunk: {
                if (generation >= suite.responses.size())
                    throw std::out_of_range("suite has no scripted response " +
                                            std::to_string(generation));
                const auto& chunks = suite.responses[generation];
                if (chunk_cursor >= chunks.size())
                    throw std::out_of_range("scripted response " + std::to_string(generation) +
                                            " exhausted");
                ev.tokens = chunks[chunk_cursor];
                break;
            }
            default: break;
        }

        std::vector<DuplexAction> actions = machine.step(ev);
        for (const DuplexAction& a : actions) {
            switch (a.kind) {
                case DuplexAction::Kind::StartGeneration: chunk_cursor = 0; break;
                case DuplexAction::Kind::Emit: ++chunk_cursor; break;
                case DuplexAction::Kind::CommitTurn:
                    result.history.push_back({a.tokens, false});
                    ++generation;
                    break;
                case DuplexAction::Kind::CommitPartial:
                    result.history.push_back({a.tokens, true});
                    ++generation;
                    break;
                default: break;
            }
            result.log.push_back(a);
        }
    }
    return result;
}


// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

using nlohmann::json;

static DuplexEvent::Kind event_kind_from(const std::string& s, size_t line) {
    if (s == "SpeechStart") return DuplexEvent::Kind::SpeechStart;
    if (s == "SpeechEnd") return DuplexEvent::Kind::SpeechEnd;
    if (s == "Transcript") return DuplexEvent::Kind::Transcript;
    if (s == "Verdict") return DuplexEvent::Kind::Verdict;
    if (s == "ResponseChunk") return DuplexEvent::Kind::ResponseChunk;
    if (s == "ResponseDone") return DuplexEvent::Kind::ResponseDone;
    throw std::runtime_error("line " + std::to_string(line) + ": unknown event kind '" + s + "'");
}

std::vector<DuplexEvent> read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<DuplexEvent> trace;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw std::runtime_error("line " + std::to_string(lineno) + ": malformed JSON");
        DuplexEvent e;
        e.kind = event_kind_from(j.at("kind").get<std::string>(), lineno);
        e.segment = j.value("segment", (int64_t)-1);
        trace.push_back(e);
    }
    return trace;
}

DetectorSuite read_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(path + ": malformed suite JSON");
    DetectorSuite suite;
    if (j.contains("transcripts"))
        for (auto it = j["transcripts"].begin(); it != j["transcripts"].end(); ++it)
            suite.transcripts[std::stoll(it.key())] = it.value().get<std::string>();
    if (j.contains("finished"))
        for (auto it = j["finished"].begin(); it != j["finished"].end(); ++it)
            suite.finished[std::stoll(it.key())] = it.value().get<bool>();
    if (j.contains("responses"))
        suite.responses = j["responses"].get<std::vector<std::vector<std::vector<int32_t>>>>();
    return suite;
}

std::string action_log_text(const std::vector<DuplexAction>& log) {
    std::ostringstream out;
    for (const DuplexAction& a : log) {
        json j;
        j["kind"] = to_string(a.kind);
        switch (a.kind) {
            case DuplexAction::Kind::Transcribe:
            case DuplexAction::Kind::CancelVerdict: j["segment"] = a.segment; break;
            case DuplexAction::Kind::DetectTurn:
            case DuplexAction::Kind::StartGeneration:
                j["segment"] = a.segment;
                j["text"] = a.text;
                break;
            case DuplexAction::Kind::Emit: j["tokens"] = a.tokens; break;
            case DuplexAction::Kind::CommitTurn:
            case DuplexAction::Kind::CommitPartial:
                j["tokens"] = a.tokens;
                j["truncated"] = a.truncated;
                break;
            case DuplexAction::Kind::AbortGeneration: break;
        }
        out << j.dump() << "\n";
    }
    return out.str();
}

void write_action_log(const std::string& path, const std::vector<DuplexAction>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << action_log_text(log);
}

}  // namespace hybridlm
