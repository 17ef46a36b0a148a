#include "vaot/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vaot/error.hpp"

namespace vaot {

namespace {

constexpr char kMagic[5] = {'V', 'A', 'O', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void write_raw_tensor(const std::filesystem::path& path, const Tensor& t, bool f64) {
  std::string out;
  out.append(kMagic, 5);
  out.push_back(f64 ? 2 : 1);
  const auto& shape = t.shape();
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  if (f64) {
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      std::uint64_t bits;
      double v = t.flat()[i];
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  } else {
    for (Eigen::Index i = 0; i < t.numel(); ++i) {
      float v = static_cast<float>(t.flat()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  write_file(path, out);
}

Tensor read_raw_tensor(const std::filesystem::path& path) {
  std::string s = read_file(path);
  if (s.size() < 10 || std::memcmp(s.data(), kMagic, 5) != 0)
    throw IoError("not a raw tensor file (bad magic): " + path.string());
  int dtype = static_cast<unsigned char>(s[5]);
  if (dtype != 1 && dtype != 2)
    throw IoError("unsupported dtype tag " + std::to_string(dtype) + ": " + path.string());
  std::uint32_t ndim = get_u32(s, 6);
  if (ndim > 8) throw IoError("implausible ndim: " + path.string());
  std::size_t off = 10;
  if (s.size() < off + 4ull * ndim) throw IoError("truncated header: " + path.string());
  std::vector<int> shape;
  Eigen::Index numel = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    std::uint32_t d = get_u32(s, off);
    off += 4;
    if (d == 0 || d > (1u << 24)) throw IoError("bad dimension: " + path.string());
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  std::size_t want = (dtype == 2 ? 8u : 4u) * static_cast<std::size_t>(numel);
  if (s.size() != off + want) throw IoError("truncated payload: " + path.string());
  Eigen::ArrayXd data(numel);
  for (Eigen::Index i = 0; i < numel; ++i) {
    if (dtype == 2) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + 8 * i + b]))
                << (8 * b);
      double v;
      std::memcpy(&v, &bits, 8);
      data[i] = v;
    } else {
      std::uint32_t bits = get_u32(s, off + 4 * static_cast<std::size_t>(i));
      float v;
      std::memcpy(&v, &bits, 4);
      data[i] = static_cast<double>(v);
    }
  }
  return Tensor::from_flat(std::move(shape), std::move(data));
}

void write_pgm(const std::filesystem::path& path, const Grid& g) {
  std::string out = "P5\n" + std::to_string(g.cols()) + " " + std::to_string(g.rows()) +
                    "\n255\n";
  for (Eigen::Index y = 0; y < g.rows(); ++y)
    for (Eigen::Index x = 0; x < g.cols(); ++x) {
      double v = std::round(g(y, x) * 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
    }
  write_file(path, out);
}

Grid read_pgm(const std::filesystem::path& path) {
  std::string s = read_file(path);
  std::istringstream ss(s);
  std::string magic;
  long w = 0, h = 0, maxval = 0;
  ss >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("not an 8-bit P5 PGM: " + path.string());
  ss.get();  // single whitespace after maxval
  std::size_t off = static_cast<std::size_t>(ss.tellg());
  if (s.size() != off + static_cast<std::size_t>(w) * h)
    throw IoError("truncated PGM payload: " + path.string());
  Grid g(h, w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      g(y, x) = static_cast<unsigned char>(s[off + static_cast<std::size_t>(y) * w + x]) / 255.0;
  return g;
}

Grid tensor_to_grid(const Tensor& t) {
  check(t.rank() == 2 || (t.rank() == 3 && t.channels() == 1),
        "tensor_to_grid: need {H,W} or {1,H,W}");
  Grid g(t.height(), t.width());
  g = t.grid(0);
  return g;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::string out;
  for (const auto& r : rows)
    out += r.role + "\t" + std::to_string(r.seed) + "\t" + r.value + "\n";
  write_file(path, out);
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::string s = read_file(path);
  std::vector<ManifestRow> rows;
  std::istringstream ss(s);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw IoError("malformed manifest line: " + line);
    ManifestRow r;
    r.role = line.substr(0, t1);
    r.seed = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
    r.value = line.substr(t2 + 1);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for key '" + key + "': " + v);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    try {
      if (key == "lambda1") cfg.lambda1 = std::stod(val);
      else if (key == "lambda2") cfg.lambda2 = std::stod(val);
      else if (key == "lambda_s") cfg.lambda_s = std::stod(val);
      else if (key == "lambda_e") cfg.lambda_e = std::stod(val);
      else if (key == "k") cfg.k = std::stoi(val);
      else if (key == "epsilon") cfg.epsilon = std::stod(val);
      else if (key == "window_l") cfg.window_l = std::stoi(val);
      else if (key == "t1_steps") cfg.t1_steps = std::stoi(val);
      else if (key == "t2_steps") cfg.t2_steps = std::stoi(val);
      else if (key == "lr0") cfg.lr0 = std::stod(val);
      else if (key == "n_critic") cfg.n_critic = std::stoi(val);
      else if (key == "lambda_gp") cfg.lambda_gp = std::stod(val);
      else if (key == "batch") cfg.batch = std::stoi(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "m_max") cfg.m_max = std::stoi(val);
      else if (key == "image_size") cfg.image_size = std::stoi(val);
      else if (key == "keep_identity_phase2") cfg.keep_identity_phase2 = parse_bool(val, key);
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: bad value for key '" + key + "': " + val);
    } catch (const std::out_of_range&) {
      throw ConfigError("config: value out of range for key '" + key + "': " + val);
    }
  }
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0 || cfg.lambda_s < 0 || cfg.lambda_e < 0)
    throw ConfigError("config: loss weights must be >= 0");
  if (cfg.lr0 <= 0) throw ConfigError("config: lr0 must be > 0");
  if (cfg.n_critic < 1) throw ConfigError("config: n_critic must be >= 1");
  if (cfg.batch < 1) throw ConfigError("config: batch must be >= 1");
  if (cfg.k < 0) throw ConfigError("config: k must be >= 0");
  if (cfg.epsilon <= 0) throw ConfigError("config: epsilon must be > 0");
  return cfg;
}

TrainConfig parse_config_file(const std::filesystem::path& path) {
  return parse_config_text(read_file(path));
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "lambda1 = " << format_double(c.lambda1) << "\n";
  os << "lambda2 = " << format_double(c.lambda2) << "\n";
  os << "lambda_s = " << format_double(c.lambda_s) << "\n";
  os << "lambda_e = " << format_double(c.lambda_e) << "\n";
  os << "k = " << c.k << "\n";
  os << "epsilon = " << format_double(c.epsilon) << "\n";
  os << "window_l = " << c.window_l << "\n";
  os << "t1_steps = " << c.t1_steps << "\n";
  os << "t2_steps = " << c.t2_steps << "\n";
  os << "lr0 = " << format_double(c.lr0) << "\n";
  os << "n_critic = " << c.n_critic << "\n";
  os << "lambda_gp = " << format_double(c.lambda_gp) << "\n";
  os << "batch = " << c.batch << "\n";
  os << "seed = " << c.seed << "\n";
  os << "m_max = " << c.m_max << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "keep_identity_phase2 = " << (c.keep_identity_phase2 ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace vaot
