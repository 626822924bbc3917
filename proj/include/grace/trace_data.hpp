#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace grace {

// Half-open interval [begin, end) over the supervised-token indices of one trace.
struct Span {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool contains(std::uint32_t index) const { return index >= begin && index < end; }
  bool operator==(const Span&) const = default;
};

// One reasoning trace: K step spans followed by an answer span.
struct ReasoningSample {
  std::string sample_id;
  std::vector<Span> steps;
  Span answer;
  nlohmann::ordered_json meta;  // null when the source line carried no "meta"

  std::size_t num_steps() const { return steps.size(); }
  std::size_t total_supervised_tokens() const;

  // Throws InputError when the span invariants do not hold.
  void validate() const;

  bool operator==(const ReasoningSample&) const = default;
};

ReasoningSample parse_sample_line(std::string_view line);
std::string format_sample_line(const ReasoningSample& sample);

// JSONL, one sample per line. Blank lines are skipped; ids must be unique.
std::vector<ReasoningSample> read_samples(std::istream& in);
std::vector<ReasoningSample> read_samples(const std::filesystem::path& path);
void write_samples(std::span<const ReasoningSample> samples, std::ostream& out);
void write_samples(std::span<const ReasoningSample> samples, const std::filesystem::path& path);

struct TokenSignal {
  std::uint32_t token_index = 0;
  std::vector<float> values;  // u_t, length hidden_dim

  bool operator==(const TokenSignal&) const = default;
};

// Per-sample gradient proxies for one scoring checkpoint. Step proxies are
// stored row-major in one buffer: step k (0-based) occupies
// [k * hidden_dim, (k + 1) * hidden_dim).
struct SignalRecord {
  std::string sample_id;
  std::string checkpoint_id;
  std::uint32_t hidden_dim = 0;
  std::vector<float> step_data;
  std::vector<float> answer_proxy;
  std::optional<std::vector<TokenSignal>> token_level;

  std::size_t num_steps() const { return hidden_dim == 0 ? 0 : step_data.size() / hidden_dim; }
  std::span<const float> step(std::size_t k) const {
    return std::span<const float>(step_data).subspan(k * hidden_dim, hidden_dim);
  }

  // Shape and finiteness checks. Throws InputError.
  void validate() const;

  bool operator==(const SignalRecord&) const = default;
};

// Segment means of token-level signals, written as f32 proxies. Every token
// index must fall inside one of the sample's spans and every span must be covered.
SignalRecord aggregate_token_level(const ReasoningSample& sample,
                                   std::vector<TokenSignal> tokens,
                                   std::uint32_t hidden_dim,
                                   std::string checkpoint_id);

// Largest deviation between the stored proxies and the means of the stored
// token-level signals, relative to the largest |u_t| component of the segment.
// Throws InputError when it exceeds rel_tol or the record has no token-level data.
double check_token_consistency(const SignalRecord& record, const ReasoningSample& sample,
                               double rel_tol = 1e-6);

inline constexpr std::uint16_t kGsigVersion = 1;
inline constexpr std::uint8_t kGsigTokenLevelFlag = 0x01;

// GSIG v1. The format carries no checkpoint tag; readers assign checkpoint_id.
std::vector<SignalRecord> read_signals(std::istream& in, const std::string& checkpoint_id);
std::vector<SignalRecord> read_signals(const std::filesystem::path& path,
                                       const std::string& checkpoint_id);
void write_signals(std::span<const SignalRecord> records, std::uint32_t hidden_dim,
                   std::ostream& out);
void write_signals(std::span<const SignalRecord> records, const std::filesystem::path& path);

// Bytes one record occupies on disk.
std::size_t gsig_record_size(const SignalRecord& record);
inline constexpr std::size_t kGsigHeaderSize = 4 + 2 + 4 + 1;

}  // namespace grace
