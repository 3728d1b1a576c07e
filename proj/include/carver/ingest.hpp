#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carver/model.hpp"

namespace carver::ingest {

enum class SourceKind { Har, Jsonl };

struct RecordingSource {
    SourceKind kind = SourceKind::Har;
    std::filesystem::path path;
    // Autodetected from the recorded URLs when empty.
    std::optional<std::string> base_url;
};

struct Recording {
    ApiSequence sequence;
    std::size_t dropped_external = 0;  // entries outside base_url
    std::size_t torn_lines = 0;        // JSONL only: unterminated trailing record
};

// Guesses the kind from the extension (.jsonl/.ndjson) and, failing that, the content.
SourceKind detect_kind(const std::filesystem::path& path);

// Throws ParseError, EmptyRecording, MixedOrigin, or Error for I/O failures.
Recording load(const RecordingSource& source);

Recording parse_har(std::string_view text, const std::optional<std::string>& base_url);
Recording parse_jsonl(std::string_view text, const std::optional<std::string>& base_url);

// Longest common URL prefix cut back to a "/" boundary, never shorter than
// scheme://authority. Throws MixedOrigin.
std::string autodetect_base_url(const std::vector<ApiCall>& calls);

}  // namespace carver::ingest
