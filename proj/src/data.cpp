#include "hrm/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace hrm {

int rate_id_of(int sample_rate) {
  switch (sample_rate) {
    case 16000: return 0;
    case 24000: return 1;
    case 48000: return 2;
    default:
      throw Error(ErrorCode::Validation,
                  "unsupported sample rate " + std::to_string(sample_rate));
  }
}

void PredictionSet::add(const std::string& id, double score,
                        const std::string& system) {
  require(!entries.count(id), ErrorCode::Validation,
          "duplicate utterance_id '" + id + "'");
  entries[id] = score;
  system_of[id] = system;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& s, const std::string& what, int row) {
  try {
    size_t pos = 0;
    double x = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Validation,
                "row " + std::to_string(row) + ": bad " + what + " '" + s + "'");
  }
}

long parse_int(const std::string& s, const std::string& what, int row) {
  try {
    size_t pos = 0;
    long x = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Validation,
                "row " + std::to_string(row) + ": bad " + what + " '" + s + "'");
  }
}

}  // namespace

std::vector<UtteranceRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open manifest '" + path + "'");

  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorCode::Schema,
          "manifest is empty: '" + path + "'");
  std::vector<std::string> cols = split_csv_line(header);

  const std::vector<std::string> expected = {"utterance_id", "audio_path",
                                             "system_id", "mos", "sample_rate"};
  for (size_t i = 0; i < expected.size(); ++i) {
    require(i < cols.size() && cols[i] == expected[i], ErrorCode::Schema,
            "manifest missing or misplaced column '" + expected[i] + "'");
  }
  bool has_fold = cols.size() == 6 && cols[5] == "fold";
  require(cols.size() == 5 || has_fold, ErrorCode::Schema,
          "unexpected manifest columns after 'sample_rate'");

  std::vector<UtteranceRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f = split_csv_line(line);
    require(f.size() == cols.size(), ErrorCode::Schema,
            "row " + std::to_string(row) + ": expected " +
                std::to_string(cols.size()) + " fields, got " +
                std::to_string(f.size()));
    UtteranceRecord r;
    r.utterance_id = f[0];
    r.audio_path = f[1];
    r.system_id = f[2];
    r.mos = parse_real(f[3], "mos", row);
    r.sample_rate = static_cast<int>(parse_int(f[4], "sample_rate", row));
    if (has_fold && !f[5].empty()) {
      r.fold = static_cast<int>(parse_int(f[5], "fold", row));
      require(r.fold >= 0, ErrorCode::Validation,
              "row " + std::to_string(row) + ": negative fold");
    }
    require(r.mos >= 1.0 && r.mos <= 5.0, ErrorCode::Validation,
            "row " + std::to_string(row) + ": mos " + f[3] +
                " outside [1,5]");
    require(is_supported_rate(r.sample_rate), ErrorCode::Validation,
            "row " + std::to_string(row) + ": unsupported sample_rate " + f[4]);
    require(seen_ids.insert(r.utterance_id).second, ErrorCode::Validation,
            "row " + std::to_string(row) + ": duplicate utterance_id '" +
                r.utterance_id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const std::vector<UtteranceRecord>& records,
                    const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write manifest '" + path + "'");
  out << "utterance_id,audio_path,system_id,mos,sample_rate,fold\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.mos);
    out << r.utterance_id << ',' << r.audio_path << ',' << r.system_id << ','
        << buf << ',' << r.sample_rate << ',';
    if (r.fold >= 0) out << r.fold;
    out << '\n';
  }
}

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t x) {
  char b[4] = {static_cast<char>(x & 0xff), static_cast<char>((x >> 8) & 0xff),
               static_cast<char>((x >> 16) & 0xff),
               static_cast<char>((x >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t x) {
  char b[2] = {static_cast<char>(x & 0xff), static_cast<char>((x >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform load_waveform(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open audio file '" + path + "'");

  char riff[4], wave[4];
  in.read(riff, 4);
  read_u32(in);  // chunk size
  in.read(wave, 4);
  require(in.good() && std::memcmp(riff, "RIFF", 4) == 0 &&
              std::memcmp(wave, "WAVE", 4) == 0,
          ErrorCode::UnsupportedFormat, "'" + path + "' is not a RIFF/WAVE file");

  int sample_rate = 0;
  int channels = 0;
  int bits = 0;
  int format = 0;
  std::vector<int16_t> pcm;
  bool got_fmt = false, got_data = false;

  while (in.good() && !(got_fmt && got_data)) {
    char id[4];
    in.read(id, 4);
    if (!in.good()) break;
    uint32_t size = read_u32(in);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.ignore(size - 16);
      got_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      require(got_fmt, ErrorCode::UnsupportedFormat,
              "'" + path + "': data chunk before fmt chunk");
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()),
              static_cast<std::streamsize>(pcm.size() * 2));
      got_data = true;
    } else {
      in.ignore(size + (size & 1));
    }
  }

  require(got_fmt && got_data, ErrorCode::UnsupportedFormat,
          "'" + path + "': missing fmt or data chunk");
  require(format == 1 && bits == 16, ErrorCode::UnsupportedFormat,
          "'" + path + "': only linear PCM16 is supported");
  require(channels == 1, ErrorCode::UnsupportedFormat,
          "'" + path + "': only mono is supported, got " +
              std::to_string(channels) + " channels");
  require(is_supported_rate(sample_rate), ErrorCode::Validation,
          "'" + path + "': declared rate " + std::to_string(sample_rate) +
              " not in {16000,24000,48000}");
  require(!pcm.empty(), ErrorCode::Validation, "'" + path + "': empty waveform");

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32768.0;
  return w;
}

void write_waveform(const Waveform& wave, const std::string& path) {
  require(!wave.samples.empty(), ErrorCode::Validation, "empty waveform");
  require(is_supported_rate(wave.sample_rate), ErrorCode::Validation,
          "unsupported sample rate");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write '" + path + "'");

  uint32_t n = static_cast<uint32_t>(wave.samples.size());
  out.write("RIFF", 4);
  write_u32(out, 36 + n * 2);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);   // PCM
  write_u16(out, 1);   // mono
  write_u32(out, static_cast<uint32_t>(wave.sample_rate));
  write_u32(out, static_cast<uint32_t>(wave.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, n * 2);
  for (double s : wave.samples) {
    // Inverse of the reader's /32768 so exact multiples round-trip.
    double x = s * 32768.0;
    x = std::min(32767.0, std::max(-32768.0, x));
    int16_t q = static_cast<int16_t>(x >= 0 ? x + 0.5 : x - 0.5);
    char b[2] = {static_cast<char>(q & 0xff), static_cast<char>((q >> 8) & 0xff)};
    out.write(b, 2);
  }
}

bool kfold_split(std::vector<UtteranceRecord>& records, int k, uint64_t seed) {
  require(k >= 2, ErrorCode::Config, "k must be >= 2");
  require(static_cast<int>(records.size()) >= k, ErrorCode::Config,
          "need at least k records");

  // Deterministic regardless of input order: work on sorted keys.
  std::set<std::string> systems;
  for (const auto& r : records) systems.insert(r.system_id);

  bool grouped = static_cast<int>(systems.size()) >= k;
  Lcg64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

  if (grouped) {
    std::vector<std::string> sys(systems.begin(), systems.end());
    for (size_t i = sys.size(); i > 1; --i) {
      std::swap(sys[i - 1], sys[rng.below(i)]);
    }
    // Greedy balance: assign each system to the currently smallest fold.
    std::map<std::string, int> fold_of_system;
    std::map<std::string, int> sys_count;
    for (const auto& r : records) sys_count[r.system_id]++;
    std::vector<int> fold_size(k, 0);
    for (const auto& s : sys) {
      int best = 0;
      for (int f = 1; f < k; ++f)
        if (fold_size[f] < fold_size[best]) best = f;
      fold_of_system[s] = best;
      fold_size[best] += sys_count[s];
    }
    for (auto& r : records) r.fold = fold_of_system[r.system_id];
  } else {
    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.utterance_id);
    std::sort(ids.begin(), ids.end());
    for (size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[rng.below(i)]);
    }
    std::map<std::string, int> fold_of_id;
    for (size_t i = 0; i < ids.size(); ++i)
      fold_of_id[ids[i]] = static_cast<int>(i % k);
    for (auto& r : records) r.fold = fold_of_id[r.utterance_id];
  }
  return grouped;
}

void write_predictions(const PredictionSet& preds, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write predictions '" + path + "'");
  out << "utterance_id\tscore\tsystem_id\n";
  char buf[64];
  for (const auto& [id, score] : preds.entries) {
    std::snprintf(buf, sizeof(buf), "%.9f", score);
    auto it = preds.system_of.find(id);
    out << id << '\t' << buf << '\t'
        << (it == preds.system_of.end() ? "" : it->second) << '\n';
  }
}

PredictionSet read_predictions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open predictions '" + path + "'");
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorCode::Schema,
          "empty prediction file '" + path + "'");

  PredictionSet p;
  std::string line;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string id, score_s, system;
    std::getline(ss, id, '\t');
    std::getline(ss, score_s, '\t');
    std::getline(ss, system, '\t');
    if (!system.empty() && system.back() == '\r') system.pop_back();
    require(!id.empty() && !score_s.empty(), ErrorCode::Schema,
            "row " + std::to_string(row) + ": malformed prediction line");
    require(!p.entries.count(id), ErrorCode::Validation,
            "row " + std::to_string(row) + ": duplicate utterance_id '" + id + "'");
    p.entries[id] = parse_real(score_s, "score", row);
    p.system_of[id] = system;
  }
  return p;
}

}  // namespace hrm
