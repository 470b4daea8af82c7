#include "rtpen/data_model.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rtpen/errors.hpp"

namespace rtpen {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(std::string("truncated header field: ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

Mat read_f32_matrix(std::istream& in, uint32_t rows, uint32_t cols,
                    const std::string& path) {
  const size_t count = static_cast<size_t>(rows) * cols;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw FormatError("truncated payload in " + path);
  Mat m(rows, cols);
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = static_cast<uint32_t>(raw[4 * i]) |
                    (static_cast<uint32_t>(raw[4 * i + 1]) << 8) |
                    (static_cast<uint32_t>(raw[4 * i + 2]) << 16) |
                    (static_cast<uint32_t>(raw[4 * i + 3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f))
      throw FormatError("non-finite value in " + path);
    m(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) =
        static_cast<double>(f);
  }
  return m;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw FormatError("bad magic in " + path + " (expected " + magic + ")");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

SamplingRule parse_sampling_rule(const std::string& text) {
  if (text == "all_pairs") return {SamplingRule::Kind::kAllPairs, 1};
  if (text == "didemo") return {SamplingRule::Kind::kDidemo, 1};
  if (text == "mod_rule(2)-odd") return {SamplingRule::Kind::kOddPairs, 2};
  if (text.rfind("mod_rule(", 0) == 0 && text.back() == ')') {
    const std::string inner = text.substr(9, text.size() - 10);
    try {
      const int k = std::stoi(inner);
      if (k < 1) throw ConfigError("mod_rule modulus must be >= 1: " + text);
      return {SamplingRule::Kind::kModZero, k};
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad sampling rule: " + text);
    }
  }
  throw ConfigError("unknown sampling rule: " + text);
}

std::string to_string(const SamplingRule& rule) {
  switch (rule.kind) {
    case SamplingRule::Kind::kAllPairs:
      return "all_pairs";
    case SamplingRule::Kind::kDidemo:
      return "didemo";
    case SamplingRule::Kind::kOddPairs:
      return "mod_rule(2)-odd";
    case SamplingRule::Kind::kModZero:
      return "mod_rule(" + std::to_string(rule.k) + ")";
  }
  return "all_pairs";
}

DatasetProfile builtin_profile(const std::string& name) {
  DatasetProfile p;
  p.name = name;
  if (name == "activitycaption") {
    p.pooling_stride = 8;
    p.max_seq = 25;
    p.sampling_rule = {SamplingRule::Kind::kModZero, 8};
    p.conv_kernel = 5;
    p.proposal_count_T = 16;
  } else if (name == "charades") {
    p.pooling_stride = 4;
    p.max_seq = 20;
    p.sampling_rule = {SamplingRule::Kind::kOddPairs, 2};
    p.conv_kernel = 3;
    p.proposal_count_T = 32;
  } else if (name == "didemo") {
    p.pooling_stride = 1;
    p.max_seq = 20;
    p.sampling_rule = {SamplingRule::Kind::kDidemo, 1};
    p.conv_kernel = 1;
    p.proposal_count_T = 6;
  } else if (name == "synthetic") {
    p.pooling_stride = 1;
    p.max_seq = 25;
    p.sampling_rule = {SamplingRule::Kind::kAllPairs, 1};
    p.conv_kernel = 3;
    p.proposal_count_T = 16;
  } else {
    throw ConfigError("unknown dataset profile: " + name);
  }
  p.nms_threshold = 0.55;
  return p;
}

VideoFeatures load_video_features(const std::filesystem::path& path,
                                  int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file " + path.string());
  expect_magic(in, "RTPF", path.string());
  const uint32_t n_v = read_u32(in, "n_v");
  const uint32_t d_v = read_u32(in, "d_v");
  if (n_v < 1 || d_v < 1)
    throw FormatError("empty feature matrix in " + path.string());
  if (expected_dim > 0 && static_cast<int>(d_v) != expected_dim)
    throw DimensionError("feature dim " + std::to_string(d_v) + " != expected " +
                         std::to_string(expected_dim) + " in " + path.string());
  VideoFeatures vf;
  vf.features = read_f32_matrix(in, n_v, d_v, path.string());
  vf.video_id = path.stem().string();
  return vf;
}

void write_video_features(const std::filesystem::path& path,
                          const VideoFeatures& video) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write feature file " + path.string());
  out.write("RTPF", 4);
  write_u32(out, static_cast<uint32_t>(video.features.rows()));
  write_u32(out, static_cast<uint32_t>(video.features.cols()));
  for (Eigen::Index r = 0; r < video.features.rows(); ++r)
    for (Eigen::Index c = 0; c < video.features.cols(); ++c)
      write_f32(out, static_cast<float>(video.features(r, c)));
}

Mat load_embedding_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open embedding table " + path.string());
  expect_magic(in, "RTPE", path.string());
  const uint32_t vocab_size = read_u32(in, "vocab_size");
  const uint32_t d_q = read_u32(in, "d_q");
  if (vocab_size < 1 || d_q < 1)
    throw FormatError("empty embedding table in " + path.string());
  return read_f32_matrix(in, vocab_size, d_q, path.string());
}

void write_embedding_table(const std::filesystem::path& path, const Mat& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write embedding table " + path.string());
  out.write("RTPE", 4);
  write_u32(out, static_cast<uint32_t>(table.rows()));
  write_u32(out, static_cast<uint32_t>(table.cols()));
  for (Eigen::Index r = 0; r < table.rows(); ++r)
    for (Eigen::Index c = 0; c < table.cols(); ++c)
      write_f32(out, static_cast<float>(table(r, c)));
}

std::vector<std::string> load_vocab_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return tokens;
}

void write_vocab_tokens(const std::filesystem::path& path,
                        const std::vector<std::string>& tokens) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write vocab file " + path.string());
  for (const auto& t : tokens) out << t << "\n";
}

Vocab load_vocab(const std::filesystem::path& table_path,
                 const std::filesystem::path& tokens_path) {
  Vocab v;
  v.embeddings = load_embedding_table(table_path);
  v.tokens = load_vocab_tokens(tokens_path);
  if (static_cast<Eigen::Index>(v.tokens.size()) != v.embeddings.rows())
    throw FormatError("vocab token count does not match embedding rows");
  for (size_t i = 0; i < v.tokens.size(); ++i)
    v.index.emplace(v.tokens[i], static_cast<int>(i));
  return v;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line))
    throw FormatError("empty manifest " + path.string());
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_tabs(line);
  if (header.empty() || header[0] != "#rtpen-manifest")
    throw FormatError("missing #rtpen-manifest header in " + path.string());
  std::string profile_name;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (size_t i = 1; i < header.size(); ++i) {
    const auto eq = header[i].find('=');
    if (eq == std::string::npos)
      throw FormatError("bad header field '" + header[i] + "' in " +
                        path.string());
    const std::string key = header[i].substr(0, eq);
    const std::string value = header[i].substr(eq + 1);
    if (key == "profile")
      profile_name = value;
    else if (key == "split")
      m.split = value;
    else if (key == "seconds_per_index")
      m.seconds_per_index = std::stod(value);
    else
      overrides.emplace_back(key, value);
  }
  if (profile_name.empty())
    throw ConfigError("manifest header lacks profile= in " + path.string());
  m.profile = builtin_profile(profile_name);
  for (const auto& [key, value] : overrides) {
    if (key == "stride")
      m.profile.pooling_stride = std::stoi(value);
    else if (key == "max_seq")
      m.profile.max_seq = std::stoi(value);
    else if (key == "rule")
      m.profile.sampling_rule = parse_sampling_rule(value);
    else if (key == "kernel")
      m.profile.conv_kernel = std::stoi(value);
    else if (key == "T")
      m.profile.proposal_count_T = std::stoi(value);
    else if (key == "nms")
      m.profile.nms_threshold = std::stod(value);
    else
      throw FormatError("unknown manifest header key '" + key + "' in " +
                        path.string());
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() < 3)
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        "video_id, feature path and query text in " +
                        path.string());
    ManifestEntry e;
    e.video_id = fields[0];
    e.feature_path = fields[1];
    e.query_text = fields[2];
    if (e.video_id.empty() || e.feature_path.empty() || e.query_text.empty())
      throw FormatError("line " + std::to_string(line_no) +
                        ": empty mandatory field in " + path.string());
    for (size_t i = 3; i < fields.size(); ++i) {
      if (fields[i].rfind("gt=", 0) == 0) {
        const std::string body = fields[i].substr(3);
        const auto comma = body.find(',');
        if (comma == std::string::npos)
          throw FormatError("line " + std::to_string(line_no) +
                            ": bad gt span in " + path.string());
        Span s;
        s.start_seconds = std::stod(body.substr(0, comma));
        s.end_seconds = std::stod(body.substr(comma + 1));
        if (!(s.start_seconds >= 0.0 && s.start_seconds < s.end_seconds))
          throw FormatError("line " + std::to_string(line_no) +
                            ": gt span must satisfy 0 <= start < end");
        e.gt = s;
      } else if (!fields[i].empty()) {
        throw FormatError("line " + std::to_string(line_no) +
                          ": unexpected field '" + fields[i] + "'");
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest " + path.string());
  out << "#rtpen-manifest\tprofile=" << manifest.profile.name
      << "\tsplit=" << manifest.split
      << "\tseconds_per_index=" << manifest.seconds_per_index;
  if (manifest.profile.name == "synthetic") {
    out << "\tstride=" << manifest.profile.pooling_stride
        << "\tmax_seq=" << manifest.profile.max_seq
        << "\trule=" << to_string(manifest.profile.sampling_rule)
        << "\tkernel=" << manifest.profile.conv_kernel
        << "\tT=" << manifest.profile.proposal_count_T
        << "\tnms=" << manifest.profile.nms_threshold;
  }
  out << "\n";
  for (const auto& e : manifest.entries) {
    out << e.video_id << "\t" << e.feature_path << "\t" << e.query_text;
    if (e.gt) {
      char buf[80];
      std::snprintf(buf, sizeof(buf), "\tgt=%.9g,%.9g", e.gt->start_seconds,
                    e.gt->end_seconds);
      out << buf;
    }
    out << "\n";
  }
}

Mat temporal_pool(const Mat& features, int stride) {
  if (stride < 1) throw ArgumentError("pooling stride must be >= 1");
  const Eigen::Index n = features.rows();
  const Eigen::Index out_rows = (n + stride - 1) / stride;
  Mat out(out_rows, features.cols());
  for (Eigen::Index k = 0; k < out_rows; ++k) {
    const Eigen::Index lo = k * stride;
    const Eigen::Index hi = std::min<Eigen::Index>(lo + stride, n);
    out.row(k) = features.middleRows(lo, hi - lo).colwise().mean();
  }
  return out;
}

TokenizedQuery prepare_query(const std::string& raw_text, const Vocab& vocab,
                             int max_seq) {
  if (vocab.index.empty()) throw ArgumentError("empty vocabulary");
  if (max_seq < 1) throw ArgumentError("max_seq must be >= 1");

  // Words and punctuation become separate tokens; whitespace separates.
  std::vector<std::string> pieces;
  std::string current;
  for (const char ch : raw_text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!current.empty()) pieces.push_back(std::move(current));
      current.clear();
    } else if (std::ispunct(uc)) {
      if (!current.empty()) pieces.push_back(std::move(current));
      current.clear();
      pieces.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!current.empty()) pieces.push_back(std::move(current));

  TokenizedQuery q;
  for (const auto& piece : pieces) {
    if (static_cast<int>(q.token_ids.size()) >= max_seq) break;
    const auto it = vocab.index.find(piece);
    if (it == vocab.index.end()) continue;  // out-of-vocabulary: dropped
    q.token_ids.push_back(it->second);
    q.tokens.push_back(piece);
  }
  if (q.token_ids.empty())
    throw EmptyQueryError("no in-vocabulary tokens in query: " + raw_text);
  q.embeddings = Mat(static_cast<Eigen::Index>(q.token_ids.size()),
                     vocab.embeddings.cols());
  for (size_t i = 0; i < q.token_ids.size(); ++i)
    q.embeddings.row(static_cast<Eigen::Index>(i)) =
        vocab.embeddings.row(q.token_ids[i]);
  return q;
}

}  // namespace rtpen
