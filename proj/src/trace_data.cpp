#include "grace/trace_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include <fmt/core.h>

#include "grace/error.hpp"

namespace grace {

namespace {

using ojson = nlohmann::ordered_json;

Span parse_span(const ojson& value, std::string_view what) {
  if (!value.is_array()) throw InputError(fmt::format("{} must be an array [start, end)", what));
  if (value.empty()) throw InputError(fmt::format("empty {}", what));
  if (value.size() != 2) throw InputError(fmt::format("{} must have exactly two bounds", what));
  for (const auto& bound : value) {
    if (!bound.is_number_unsigned() && !(bound.is_number_integer() && bound.get<std::int64_t>() >= 0)) {
      throw InputError(fmt::format("{} bounds must be non-negative integers", what));
    }
    if (bound.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      throw InputError(fmt::format("{} bound exceeds 32 bits", what));
    }
  }
  return Span{value[0].get<std::uint32_t>(), value[1].get<std::uint32_t>()};
}

ojson span_json(const Span& s) { return ojson::array({s.begin, s.end}); }

// Little-endian primitives.
void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u16(std::ostream& out, std::uint16_t v) {
  const char bytes[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(bytes, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>(v >> 24)};
  out.write(bytes, 4);
}

void put_f32s(std::ostream& out, std::span<const float> values) {
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

  void read(char* dst, std::size_t n, std::string_view what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw InputError(fmt::format("truncated GSIG record (reading {})", what));
    }
  }

  std::uint8_t u8(std::string_view what) {
    char b;
    read(&b, 1, what);
    return static_cast<std::uint8_t>(b);
  }

  std::uint16_t u16(std::string_view what) {
    unsigned char b[2];
    read(reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32(std::string_view what) {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  void f32s(std::vector<float>& dst, std::size_t n, std::string_view what) {
    dst.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = std::bit_cast<float>(u32(what));
      if (!std::isfinite(dst[i])) throw InputError(fmt::format("non-finite component in {}", what));
    }
  }

 private:
  std::istream& in_;
};

void check_finite(std::span<const float> values, std::string_view what, const std::string& id) {
  for (float v : values) {
    if (!std::isfinite(v)) throw InputError(fmt::format("sample {}: non-finite component in {}", id, what));
  }
}

// Index of the segment containing token, K for the answer, nullopt when outside.
std::optional<std::size_t> segment_of(const ReasoningSample& sample, std::uint32_t token) {
  for (std::size_t k = 0; k < sample.steps.size(); ++k) {
    if (sample.steps[k].contains(token)) return k;
  }
  if (sample.answer.contains(token)) return sample.steps.size();
  return std::nullopt;
}

// Per-segment f64 sums of token signals plus the largest |component| seen.
struct SegmentAccumulator {
  std::vector<std::vector<double>> sums;
  std::vector<std::size_t> counts;
  std::vector<double> max_abs;
};

SegmentAccumulator accumulate(const ReasoningSample& sample, std::span<const TokenSignal> tokens,
                              std::uint32_t hidden_dim) {
  const std::size_t segments = sample.steps.size() + 1;
  SegmentAccumulator acc{std::vector<std::vector<double>>(segments, std::vector<double>(hidden_dim, 0.0)),
                         std::vector<std::size_t>(segments, 0), std::vector<double>(segments, 0.0)};
  std::set<std::uint32_t> seen;
  for (const auto& token : tokens) {
    if (token.values.size() != hidden_dim) {
      throw InputError(fmt::format("sample {}: token {} has dim {} (expected {})", sample.sample_id,
                                   token.token_index, token.values.size(), hidden_dim));
    }
    if (!seen.insert(token.token_index).second) {
      throw InputError(fmt::format("sample {}: duplicate token index {}", sample.sample_id, token.token_index));
    }
    const auto seg = segment_of(sample, token.token_index);
    if (!seg) {
      throw InputError(fmt::format("sample {}: token index {} is outside every span", sample.sample_id,
                                   token.token_index));
    }
    for (std::size_t i = 0; i < hidden_dim; ++i) {
      acc.sums[*seg][i] += token.values[i];
      acc.max_abs[*seg] = std::max(acc.max_abs[*seg], std::abs(static_cast<double>(token.values[i])));
    }
    ++acc.counts[*seg];
  }
  for (std::size_t s = 0; s < segments; ++s) {
    if (acc.counts[s] == 0) {
      throw InputError(fmt::format("sample {}: segment {} has no token-level signals", sample.sample_id, s));
    }
  }
  return acc;
}

}  // namespace

std::size_t ReasoningSample::total_supervised_tokens() const {
  std::size_t total = answer.size();
  for (const auto& s : steps) total += s.size();
  return total;
}

void ReasoningSample::validate() const {
  if (sample_id.empty()) throw InputError("empty sample_id");
  if (steps.empty()) throw InputError(fmt::format("sample {}: no reasoning steps", sample_id));
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].empty()) throw InputError(fmt::format("sample {}: empty step span {}", sample_id, k + 1));
    if (k > 0 && steps[k].begin < steps[k - 1].end) {
      throw InputError(fmt::format("sample {}: step spans {} and {} overlap or are out of order", sample_id, k,
                                   k + 1));
    }
  }
  if (answer.empty()) throw InputError(fmt::format("sample {}: empty answer span", sample_id));
  if (answer.begin < steps.back().end) {
    throw InputError(fmt::format("sample {}: answer span must follow every step span", sample_id));
  }
}

ReasoningSample parse_sample_line(std::string_view line) {
  ojson obj;
  try {
    obj = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(fmt::format("invalid JSON: {}", e.what()));
  }
  if (!obj.is_object()) throw InputError("sample line must be a JSON object");

  ReasoningSample sample;
  const auto id = obj.find("sample_id");
  if (id == obj.end() || !id->is_string()) throw InputError("missing string field sample_id");
  sample.sample_id = id->get<std::string>();

  const auto steps = obj.find("steps");
  if (steps == obj.end() || !steps->is_array()) throw InputError("missing array field steps");
  for (const auto& s : *steps) sample.steps.push_back(parse_span(s, "step span"));

  const auto answer = obj.find("answer");
  if (answer == obj.end() || answer->is_null()) throw InputError("missing answer span");
  sample.answer = parse_span(*answer, "answer span");

  if (const auto meta = obj.find("meta"); meta != obj.end()) {
    if (!meta->is_object()) throw InputError("meta must be an object");
    sample.meta = *meta;
  }
  sample.validate();
  return sample;
}

std::string format_sample_line(const ReasoningSample& sample) {
  ojson obj;
  obj["sample_id"] = sample.sample_id;
  ojson steps = ojson::array();
  for (const auto& s : sample.steps) steps.push_back(span_json(s));
  obj["steps"] = std::move(steps);
  obj["answer"] = span_json(sample.answer);
  if (!sample.meta.is_null()) obj["meta"] = sample.meta;
  return obj.dump();
}

std::vector<ReasoningSample> read_samples(std::istream& in) {
  std::vector<ReasoningSample> samples;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      samples.push_back(parse_sample_line(line));
    } catch (const InputError& e) {
      throw InputError(fmt::format("line {}: {}", line_no, e.what()));
    }
    if (!ids.insert(samples.back().sample_id).second) {
      throw InputError(fmt::format("line {}: duplicate sample_id {}", line_no, samples.back().sample_id));
    }
  }
  return samples;
}

std::vector<ReasoningSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open samples file {}", path.string()));
  try {
    return read_samples(in);
  } catch (const InputError& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_samples(std::span<const ReasoningSample> samples, std::ostream& out) {
  for (const auto& s : samples) {
    s.validate();
    out << format_sample_line(s) << '\n';
  }
}

void write_samples(std::span<const ReasoningSample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  write_samples(samples, out);
}

void SignalRecord::validate() const {
  if (hidden_dim == 0) throw InputError(fmt::format("sample {}: hidden_dim must be positive", sample_id));
  if (step_data.empty() || step_data.size() % hidden_dim != 0) {
    throw InputError(fmt::format("sample {}: step proxies are not K x {} values", sample_id, hidden_dim));
  }
  if (answer_proxy.size() != hidden_dim) {
    throw InputError(fmt::format("sample {}: answer proxy has dim {} (expected {})", sample_id,
                                 answer_proxy.size(), hidden_dim));
  }
  check_finite(step_data, "step proxies", sample_id);
  check_finite(answer_proxy, "answer proxy", sample_id);
  if (token_level) {
    for (const auto& t : *token_level) {
      if (t.values.size() != hidden_dim) {
        throw InputError(fmt::format("sample {}: token {} has dim {} (expected {})", sample_id, t.token_index,
                                     t.values.size(), hidden_dim));
      }
      check_finite(t.values, "token-level signal", sample_id);
    }
  }
}

SignalRecord aggregate_token_level(const ReasoningSample& sample, std::vector<TokenSignal> tokens,
                                   std::uint32_t hidden_dim, std::string checkpoint_id) {
  const auto acc = accumulate(sample, tokens, hidden_dim);
  SignalRecord record;
  record.sample_id = sample.sample_id;
  record.checkpoint_id = std::move(checkpoint_id);
  record.hidden_dim = hidden_dim;
  const std::size_t k_steps = sample.steps.size();
  record.step_data.reserve(k_steps * hidden_dim);
  for (std::size_t s = 0; s <= k_steps; ++s) {
    auto& dst = s < k_steps ? record.step_data : record.answer_proxy;
    for (std::size_t i = 0; i < hidden_dim; ++i) {
      dst.push_back(static_cast<float>(acc.sums[s][i] / static_cast<double>(acc.counts[s])));
    }
  }
  record.token_level = std::move(tokens);
  record.validate();
  return record;
}

double check_token_consistency(const SignalRecord& record, const ReasoningSample& sample, double rel_tol) {
  if (!record.token_level) {
    throw InputError(fmt::format("sample {}: record has no token-level signals", record.sample_id));
  }
  if (record.num_steps() != sample.num_steps()) {
    throw InputError(fmt::format("sample {}: record has {} steps, sample has {}", record.sample_id,
                                 record.num_steps(), sample.num_steps()));
  }
  const auto acc = accumulate(sample, *record.token_level, record.hidden_dim);
  double worst = 0.0;
  for (std::size_t s = 0; s <= sample.num_steps(); ++s) {
    const auto stored = s < sample.num_steps() ? record.step(s) : std::span<const float>(record.answer_proxy);
    const double scale = std::max(acc.max_abs[s], std::numeric_limits<double>::min());
    for (std::size_t i = 0; i < record.hidden_dim; ++i) {
      const double mean = acc.sums[s][i] / static_cast<double>(acc.counts[s]);
      worst = std::max(worst, std::abs(mean - static_cast<double>(stored[i])) / scale);
    }
  }
  if (worst > rel_tol) {
    throw InputError(fmt::format("sample {}: stored proxies deviate from token-level means by {:.3e} (tol {:.1e})",
                                 record.sample_id, worst, rel_tol));
  }
  return worst;
}

std::size_t gsig_record_size(const SignalRecord& record) {
  std::size_t bytes = 4 + record.sample_id.size() + 4 + (record.step_data.size() + record.answer_proxy.size()) * 4;
  if (record.token_level) {
    bytes += 4 + record.token_level->size() * (4 + 4 * static_cast<std::size_t>(record.hidden_dim));
  }
  return bytes;
}

std::vector<SignalRecord> read_signals(std::istream& in, const std::string& checkpoint_id) {
  ByteReader reader(in);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || magic[0] != 'G' || magic[1] != 'S' || magic[2] != 'I' || magic[3] != 'G') {
    throw InputError("not a GSIG file");
  }
  const std::uint16_t version = reader.u16("header");
  if (version != kGsigVersion) throw InputError(fmt::format("unsupported GSIG version {}", version));
  const std::uint32_t dim = reader.u32("header");
  if (dim == 0) throw InputError("GSIG header declares hidden dim 0");
  const std::uint8_t flags = reader.u8("header");
  if ((flags & ~kGsigTokenLevelFlag) != 0) throw InputError(fmt::format("unknown GSIG flags 0x{:02x}", flags));
  const bool token_level = (flags & kGsigTokenLevelFlag) != 0;

  std::vector<SignalRecord> records;
  while (!reader.at_eof()) {
    SignalRecord r;
    r.checkpoint_id = checkpoint_id;
    r.hidden_dim = dim;
    const std::uint32_t id_len = reader.u32("id length");
    r.sample_id.resize(id_len);
    reader.read(r.sample_id.data(), id_len, "sample id");
    const std::uint32_t k_steps = reader.u32("step count");
    if (k_steps == 0) throw InputError(fmt::format("sample {}: record declares zero steps", r.sample_id));
    reader.f32s(r.step_data, static_cast<std::size_t>(k_steps) * dim, "step proxies");
    reader.f32s(r.answer_proxy, dim, "answer proxy");
    if (token_level) {
      const std::uint32_t count = reader.u32("token count");
      std::vector<TokenSignal> tokens(count);
      for (auto& t : tokens) {
        t.token_index = reader.u32("token index");
        reader.f32s(t.values, dim, "token-level signal");
      }
      r.token_level = std::move(tokens);
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SignalRecord> read_signals(const std::filesystem::path& path, const std::string& checkpoint_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open signals file {}", path.string()));
  try {
    return read_signals(in, checkpoint_id);
  } catch (const InputError& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_signals(std::span<const SignalRecord> records, std::uint32_t hidden_dim, std::ostream& out) {
  if (hidden_dim == 0) throw InputError("hidden dim must be positive");
  const bool token_level = !records.empty() && records.front().token_level.has_value();
  for (const auto& r : records) {
    r.validate();
    if (r.hidden_dim != hidden_dim) {
      throw InputError(fmt::format("sample {}: dim {} does not match file dim {}", r.sample_id, r.hidden_dim,
                                   hidden_dim));
    }
    if (r.token_level.has_value() != token_level) {
      throw InputError("token-level signals must be present on every record or on none");
    }
  }
  out.write("GSIG", 4);
  put_u16(out, kGsigVersion);
  put_u32(out, hidden_dim);
  put_u8(out, token_level ? kGsigTokenLevelFlag : 0);
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.sample_id.size()));
    out.write(r.sample_id.data(), static_cast<std::streamsize>(r.sample_id.size()));
    put_u32(out, static_cast<std::uint32_t>(r.num_steps()));
    put_f32s(out, r.step_data);
    put_f32s(out, r.answer_proxy);
    if (token_level) {
      put_u32(out, static_cast<std::uint32_t>(r.token_level->size()));
      for (const auto& t : *r.token_level) {
        put_u32(out, t.token_index);
        put_f32s(out, t.values);
      }
    }
  }
}

void write_signals(std::span<const SignalRecord> records, const std::filesystem::path& path) {
  if (records.empty()) throw InputError("write_signals: no records (hidden dim unknown)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
  write_signals(records, records.front().hidden_dim, out);
}

}  // namespace grace
