#include "taskcast/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "taskcast/errors.hpp"

namespace fs = std::filesystem;

namespace taskcast {
namespace {

constexpr char kMagic[4] = {'T', 'C', 'K', 'P'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) buf_.push_back(static_cast<char>((v >> s) & 0xff));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 0; s < 64; s += 8) buf_.push_back(static_cast<char>((bits >> s) & 0xff));
  }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Matrix& m) {
    bytes(name);
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) f64(v);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Matrix tensor() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    need(8ULL * rows * cols);
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) v = f64();
    return Matrix(rows, cols, std::move(values));
  }
  void expect_magic() {
    need(4);
    if (std::memcmp(data_.data(), kMagic, 4) != 0) throw IoError(path_ + ": not a checkpoint");
    pos_ += 4;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (pos_ + n > data_.size()) throw IoError(path_ + ": truncated checkpoint");
  }
  std::vector<unsigned char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  Writer w;
  w.buffer().insert(w.buffer().end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  nlohmann::json header{{"model", checkpoint.params.config.to_json()},
                        {"run", checkpoint.run_config}};
  w.bytes(header.dump());

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  checkpoint.params.visit("", ConstTensorVisitor([&](const std::string& name, const Matrix& m) {
                            tensors.emplace_back(name, &m);
                          }));
  Matrix mean, scale;
  if (checkpoint.standardizer) {
    const Standardizer& s = *checkpoint.standardizer;
    mean = Matrix(1, s.mean.size(), s.mean);
    scale = Matrix(1, s.scale.size(), s.scale);
    tensors.emplace_back("standardizer.mean", &mean);
    tensors.emplace_back("standardizer.scale", &scale);
  }
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) w.tensor(name, *m);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes());
    ck.params = CombinedModelParams::zeros(ModelConfig::from_json(header.at("model")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  ck.run_config = header.value("run", nlohmann::json::object());

  std::map<std::string, Matrix> stored;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes();
    stored.emplace(std::move(name), r.tensor());
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes");

  ck.params.visit("", TensorVisitor([&](const std::string& name, Matrix& m) {
                    auto it = stored.find(name);
                    if (it == stored.end()) throw IoError(path.string() + ": missing tensor " + name);
                    require_shape(it->second, m.rows(), m.cols(), path.string() + ":" + name);
                    m = std::move(it->second);
                    stored.erase(it);
                  }));
  auto mean = stored.find("standardizer.mean");
  auto scale = stored.find("standardizer.scale");
  if (mean != stored.end() && scale != stored.end()) {
    ck.standardizer = Standardizer{
        Vector(mean->second.values().begin(), mean->second.values().end()),
        Vector(scale->second.values().begin(), scale->second.values().end())};
    stored.erase(mean);
    stored.erase(scale);
  }
  if (!stored.empty()) throw IoError(path.string() + ": unexpected tensor " + stored.begin()->first);
  return ck;
}

}  // namespace taskcast
