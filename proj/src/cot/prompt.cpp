#include "gcot/cot/prompt.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gcot/error.hpp"

namespace gcot::cot {

const char* kind_name(StdPromptKind kind) {
  switch (kind) {
    case StdPromptKind::gpf_plus: return "gpf_plus";
    case StdPromptKind::gpf: return "gpf";
    case StdPromptKind::graphprompt: return "graphprompt";
  }
  return "unknown";
}

StdPromptKind parse_kind(const std::string& name) {
  for (auto k : {StdPromptKind::gpf_plus, StdPromptKind::gpf, StdPromptKind::graphprompt}) {
    if (name == kind_name(k)) return k;
  }
  throw ConfigError("unknown standard prompt kind \"" + name + "\" (gpf_plus, gpf, graphprompt)");
}

void CotConfig::validate() const {
  if (steps < 1) throw ConfigError("steps (K) must be >= 1");
  if (cond_hidden < 1) throw ConfigError("cond_hidden (s) must be >= 1");
  if (kind == StdPromptKind::gpf_plus && num_prompts < 1) throw ConfigError("gpf_plus needs num_prompts >= 1");
}

PromptState init_state(const CotConfig& config, const encoder::EncoderConfig& enc, num::Rng& rng) {
  config.validate();
  enc.validate();
  const std::size_t h = enc.hidden_dim, d = enc.input_dim, s = config.cond_hidden;
  PromptState st;
  st.config = config;
  st.fusion = Tensor(1, enc.num_layers, 1.0 / static_cast<double>(enc.num_layers));
  switch (config.kind) {
    case StdPromptKind::gpf_plus:
      st.prompts = num::normal(config.num_prompts, h, 1.0, 0.01, rng);
      st.projections = num::normal(config.num_prompts, h, 0.0, 0.01, rng);
      break;
    case StdPromptKind::gpf: st.prompts = Tensor(1, d, 0.0); break;
    case StdPromptKind::graphprompt: st.prompts = Tensor(1, h, 1.0); break;
  }
  st.w1 = num::glorot_uniform(h, s, rng);
  st.b1 = Tensor(1, s, 0.0);
  st.w2 = Tensor(s, d, 0.0);
  st.b2 = Tensor(1, d, 1.0);
  return st;
}

namespace {

constexpr const char* kMagic = "GCOT-PROMPT";

void write_rows(std::ostream& out, const Tensor& t) {
  char buf[32];
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Tensor read_rows(std::istream& in, std::size_t rows, std::size_t cols, const std::string& where) {
  Tensor t(rows, cols);
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw CorruptionError(where + ": truncated payload");
    const char* p = line.data();
    const char* end = p + line.size();
    for (std::size_t c = 0; c < cols; ++c) {
      while (p < end && *p == ' ') ++p;
      auto [next, ec] = std::from_chars(p, end, t(r, c));
      if (ec != std::errc()) throw CorruptionError(where + ": malformed or short row");
      p = next;
    }
    while (p < end && (*p == ' ' || *p == '\r')) ++p;
    if (p != end) throw CorruptionError(where + ": row longer than header says");
  }
  return t;
}

}  // namespace

void save_prompt_state(const PromptState& st, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write prompt checkpoint " + path.string());
  out << kMagic << " v1\n"
      << st.config.steps << ' ' << st.num_layers() << ' ' << st.hidden_dim() << ' ' << st.config.cond_hidden << ' '
      << st.input_dim() << ' ' << kind_name(st.config.kind) << ' ' << st.prompts.rows() << '\n';
  for (const Tensor* t : {&st.fusion, &st.w1, &st.b1, &st.w2, &st.b2, &st.prompts, &st.projections}) {
    write_rows(out, *t);
  }
  if (!out) throw DataError("failed writing prompt checkpoint " + path.string());
}

PromptState load_prompt_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing prompt checkpoint " + path.string());
  const std::string where = path.string();
  std::string line, tag, version;
  std::getline(in, line);
  std::istringstream(line) >> tag >> version;
  if (tag != kMagic) throw FormatError(where + ": not a prompt checkpoint");
  if (version != "v1") throw FormatError(where + ": unsupported prompt checkpoint version " + version);
  std::size_t k = 0, layers = 0, h = 0, s = 0, d = 0, n = 0;
  std::string kind;
  if (!std::getline(in, line) || !(std::istringstream(line) >> k >> layers >> h >> s >> d >> kind >> n) || k == 0 ||
      layers == 0 || h == 0 || s == 0 || d == 0 || n == 0) {
    throw CorruptionError(where + ": bad dimension header");
  }
  PromptState st;
  try {
    st.config.kind = parse_kind(kind);
  } catch (const ConfigError&) {
    throw CorruptionError(where + ": unknown prompt kind " + kind);
  }
  st.config.steps = k;
  st.config.cond_hidden = s;
  st.config.num_prompts = st.config.kind == StdPromptKind::gpf_plus ? n : 5;
  if (st.config.kind != StdPromptKind::gpf_plus && n != 1) throw CorruptionError(where + ": expected one prompt row");
  st.fusion = read_rows(in, 1, layers, where);
  st.w1 = read_rows(in, h, s, where);
  st.b1 = read_rows(in, 1, s, where);
  st.w2 = read_rows(in, s, d, where);
  st.b2 = read_rows(in, 1, d, where);
  switch (st.config.kind) {
    case StdPromptKind::gpf_plus:
      st.prompts = read_rows(in, n, h, where);
      st.projections = read_rows(in, n, h, where);
      break;
    case StdPromptKind::gpf: st.prompts = read_rows(in, 1, d, where); break;
    case StdPromptKind::graphprompt: st.prompts = read_rows(in, 1, h, where); break;
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw CorruptionError(where + ": trailing data after payload");
  }
  return st;
}

}  // namespace gcot::cot
