#pragma once
// Line-delimited record files and fixed-capacity sequence packing.
//
// One JSON object per line. Hybrid sequence records carry `text` (id list),
// `frames` (T rows of J ids) and optionally `schedule` ([n, m]); dialog
// records carry `role`, `text` and optionally `frames` / `speaker_ref`.
// Unknown fields round-trip untouched.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridlm/dialog.hpp"
#include "hybridlm/interleave.hpp"

namespace hybridlm {

class RecordParseError : public std::runtime_error {
   public:
    RecordParseError(size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    size_t line() const { return line_; }

   private:
    size_t line_;
};

struct SeqRecord {
    std::vector<int32_t> text;
    std::vector<Frame> frames;
    std::optional<InterleaveConfig> schedule;
    nlohmann::json extra = nlohmann::json::object();

    bool operator==(const SeqRecord& o) const;
};

std::vector<SeqRecord> read_seq_records(const std::string& path);
void write_seq_records(const std::string& path, const std::vector<SeqRecord>& records);

nlohmann::json seq_record_to_json(const SeqRecord& rec);
SeqRecord seq_record_from_json(const nlohmann::json& j, size_t line = 0);

struct TurnRecord {
    Turn turn;
    nlohmann::json extra = nlohmann::json::object();
};

std::vector<TurnRecord> read_turn_records(const std::string& path);
void write_turn_records(const std::string& path, const std::vector<TurnRecord>& records);

// ---- sequence packing ----

struct RecordLength {
    int64_t id = 0;
    size_t length = 0;
};

struct PackSegment {
    int64_t record_id = 0;
    size_t offset = 0;      // token offset within the pack
    size_t length = 0;
    int32_t segment_id = 0; // distinct within a pack; masks reset per segment
};

struct PackedSequence {
    size_t capacity = 0;
    std::vector<PackSegment> segments;
    size_t fill = 0;
};

// Greedy first-fit in input order: append while it fits, else open a new
// pack. Throws std::invalid_argument naming every record longer than the
// capacity.
std::vector<PackedSequence> pack_sequences(const std::vector<RecordLength>& records,
                                           size_t capacity);

std::vector<PackedSequence> read_pack_manifest(const std::string& path);
void write_pack_manifest(const std::string& path, const std::vector<PackedSequence>& packs);

// generic helpers shared by the record readers and the CLI
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace hybridlm
