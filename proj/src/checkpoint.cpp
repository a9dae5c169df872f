#include "rulemine/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "rulemine/errors.hpp"

namespace rulemine {

namespace {

void put_u32(std::ostream& out, uint32_t x) {
  char b[4];
  b[0] = static_cast<char>(x & 0xff);
  b[1] = static_cast<char>((x >> 8) & 0xff);
  b[2] = static_cast<char>((x >> 16) & 0xff);
  b[3] = static_cast<char>((x >> 24) & 0xff);
  out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

constexpr char kMagic[4] = {'r', 'f', '1', '\n'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(params.count()));
  for (size_t i = 0; i < params.count(); ++i) {
    const ad::Param& p = params.at(i);
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<uint32_t>(p.value.rows));
    put_u32(out, static_cast<uint32_t>(p.value.cols));
    for (double v : p.value.a) put_f32(out, static_cast<float>(v));
  }
  if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, ad::ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4)) {
    fail(ErrorCategory::checkpoint, "bad checkpoint magic in " + path.string());
  }
  const uint32_t count = get_u32(in);
  if (count != params.count()) {
    fail(ErrorCategory::checkpoint, "checkpoint has " + std::to_string(count) + " tensors, model expects " +
                                        std::to_string(params.count()));
  }
  size_t seen = 0;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rows = get_u32(in);
    const uint32_t cols = get_u32(in);
    ad::Param* p = params.find(name);
    if (p == nullptr) fail(ErrorCategory::checkpoint, "unknown tensor '" + name + "' in checkpoint");
    if (p->value.rows != static_cast<int>(rows) || p->value.cols != static_cast<int>(cols)) {
      fail(ErrorCategory::checkpoint, "shape mismatch for tensor '" + name + "'");
    }
    for (double& v : p->value.a) v = static_cast<double>(get_f32(in));
    ++seen;
    if (!in) fail(ErrorCategory::checkpoint, "truncated checkpoint " + path.string());
  }
  if (seen != params.count()) fail(ErrorCategory::checkpoint, "checkpoint tensor set incomplete");
}

void quantize_params(ad::ParamStore& params) {
  for (size_t i = 0; i < params.count(); ++i) {
    for (double& v : params.at(i).value.a) v = static_cast<double>(static_cast<float>(v));
  }
}

void write_meta(const std::filesystem::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> read_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t\r");
      const size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace rulemine
