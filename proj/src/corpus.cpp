#include "hybridlm/corpus.hpp"

#include <fstream>
#include <set>

namespace hybridlm {

using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (const std::string& l : lines) out << l << '\n';
    if (!out) throw std::runtime_error("write failed on " + path);
}

static json parse_line(const std::string& line, size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw RecordParseError(lineno, "malformed JSON");
    if (!j.is_object()) throw RecordParseError(lineno, "record is not an object");
    return j;
}

bool SeqRecord::operator==(const SeqRecord& o) const {
    bool sched_eq = schedule.has_value() == o.schedule.has_value() &&
                    (!schedule || (schedule->n == o.schedule->n && schedule->m == o.schedule->m));
    return text == o.text && frames == o.frames && sched_eq && extra == o.extra;
}

SeqRecord seq_record_from_json(const json& j, size_t line) {
    SeqRecord rec;
    try {
        if (j.contains("text")) rec.text = j.at("text").get<std::vector<int32_t>>();
        if (j.contains("frames")) rec.frames = j.at("frames").get<std::vector<Frame>>();
        if (j.contains("schedule")) {
            auto s = j.at("schedule").get<std::vector<int>>();
            if (s.size() != 2) throw RecordParseError(line, "schedule must be [n, m]");
            rec.schedule = InterleaveConfig{s[0], s[1]};
        }
    } catch (const json::exception& e) {
        throw RecordParseError(line, e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "text" && it.key() != "frames" && it.key() != "schedule")
            rec.extra[it.key()] = it.value();
    return rec;
}

json seq_record_to_json(const SeqRecord& rec) {
    json j = rec.extra.is_object() ? rec.extra : json::object();
    j["text"] = rec.text;
    j["frames"] = rec.frames;
    if (rec.schedule) j["schedule"] = std::vector<int>{rec.schedule->n, rec.schedule->m};
    return j;
}

std::vector<SeqRecord> read_seq_records(const std::string& path) {
    std::vector<SeqRecord> out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        out.push_back(seq_record_from_json(parse_line(lines[i], i + 1), i + 1));
    }
    return out;
}

void write_seq_records(const std::string& path, const std::vector<SeqRecord>& records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const SeqRecord& r : records) lines.push_back(seq_record_to_json(r).dump());
    write_lines(path, lines);
}

static const char* role_name(Role r) {
    switch (r) {
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::System: return "system";
    }
    return "?";
}

static Role role_from(const std::string& s, size_t line) {
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    if (s == "system") return Role::System;
    throw RecordParseError(line, "unknown role '" + s + "'");
}

std::vector<TurnRecord> read_turn_records(const std::string& path) {
    std::vector<TurnRecord> out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j = parse_line(lines[i], i + 1);
        TurnRecord rec;
        try {
            rec.turn.role = role_from(j.at("role").get<std::string>(), i + 1);
            rec.turn.text = j.at("text").get<std::vector<int32_t>>();
            if (j.contains("frames")) rec.turn.audio = j.at("frames").get<std::vector<Frame>>();
            if (j.contains("speaker_ref"))
                rec.turn.speaker_ref = j.at("speaker_ref").get<std::string>();
        } catch (const json::exception& e) {
            throw RecordParseError(i + 1, e.what());
        }
        for (auto it = j.begin(); it != j.end(); ++it)
            if (it.key() != "role" && it.key() != "text" && it.key() != "frames" &&
                it.key() != "speaker_ref")
                rec.extra[it.key()] = it.value();
        out.push_back(std::move(rec));
    }
    return out;
}

void write_turn_records(const std::string& path, const std::vector<TurnRecord>& records) {
    std::vector<std::string> lines;
    for (const TurnRecord& r : records) {
        json j = r.extra.is_object() ? r.extra : json::object();
        j["role"] = role_name(r.turn.role);
        j["text"] = r.turn.text;
        if (!r.turn.audio.empty()) j["frames"] = r.turn.audio;
        if (!r.turn.speaker_ref.empty()) j["speaker_ref"] = r.turn.speaker_ref;
        lines.push_back(j.dump());
    }
    write_lines(path, lines);
}

std::vector<PackedSequence> pack_sequences(const std::vector<RecordLength>& records,
                                           size_t capacity) {
    if (capacity == 0) throw std::invalid_argument("pack capacity must be positive");
    std::string offenders;
    for (const RecordLength& r : records)
        if (r.length > capacity)
            offenders += (offenders.empty() ? "" : ", ") + std::to_string(r.id) + " (len " +
                         std::to_string(r.length) + ")";
    if (!offenders.empty())
        throw std::invalid_argument("records longer than capacity " + std::to_string(capacity) +
                                    ": " + offenders);

    std::vector<PackedSequence> packs;
    for (const RecordLength& r : records) {
        if (packs.empty() || packs.back().fill + r.length > capacity) {
            packs.push_back(PackedSequence{capacity, {}, 0});
        }
        PackedSequence& p = packs.back();
        PackSegment seg;
        seg.record_id = r.id;
        seg.offset = p.fill;
        seg.length = r.length;
        seg.segment_id = (int32_t)p.segments.size();
        p.segments.push_back(seg);
        p.fill += r.length;
    }
    return packs;
}

void write_pack_manifest(const std::string& path, const std::vector<PackedSequence>& packs) {
    std::vector<std::string> lines;
    for (const PackedSequence& p : packs) {
        json segs = json::array();
        for (const PackSegment& s : p.segments)
            segs.push_back({{"record", s.record_id},
                            {"offset", s.offset},
                            {"length", s.length},
                            {"segment", s.segment_id}});
        json j = {{"capacity", p.capacity}, {"segments", segs}, {"fill", p.fill}};
        lines.push_back(j.dump());
    }
    write_lines(path, lines);
}

std::vector<PackedSequence> read_pack_manifest(const std::string& path) {
    std::vector<PackedSequence> out;
    auto lines = read_lines(path);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j = parse_line(lines[i], i + 1);
        PackedSequence p;
        try {
            p.capacity = j.at("capacity").get<size_t>();
            p.fill = j.at("fill").get<size_t>();
            for (const json& s : j.at("segments")) {
                PackSegment seg;
                seg.record_id = s.at("record").get<int64_t>();
                seg.offset = s.at("offset").get<size_t>();
                seg.length = s.at("length").get<size_t>();
                seg.segment_id = s.at("segment").get<int32_t>();
                p.segments.push_back(seg);
            }
        } catch (const json::exception& e) {
            throw RecordParseError(i + 1, e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace hybridlm
