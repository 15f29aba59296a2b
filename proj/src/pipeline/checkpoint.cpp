#include "vfd/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vfd/errors.hpp"

namespace vfd::pipeline {
namespace {

constexpr char kMagic[4] = {'V', 'F', 'D', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }

  void tensor(const std::string& name, const num::Tensor& t) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
  }
  void vector(const std::string& name, const std::vector<double>& values) {
    tensor(name, num::Tensor::vector(values));
  }

  const std::string& str() const { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  bool done() const { return pos_ == data_.size(); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, num::Tensor> tensor() {
    std::string name = bytes(u32());
    const std::uint32_t rank = u32();
    num::Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(u64());
      if (shape.back() == 0) fail("zero dimension in tensor " + name);
      count *= shape.back();
      if (count > data_.size()) fail("tensor " + name + " larger than the file");
    }
    need(count * 8);
    std::vector<double> values(count);
    for (double& v : values) v = f64();
    return {std::move(name), num::Tensor(std::move(shape), std::move(values))};
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": " + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) fail("truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::vector<double> split_u64(std::uint64_t v) {
  return {static_cast<double>(v >> 32), static_cast<double>(v & 0xFFFFFFFFULL)};
}

std::uint64_t join_u64(double hi, double lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
}

}  // namespace

std::uint64_t config_hash(const encoder::EncoderConfig& voice, const encoder::EncoderConfig& face) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* c : {&voice, &face}) {
    for (double v : c->to_vector()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(config_hash(ck.model.voice.config, ck.model.face.config));
  w.vector("meta.voice_config", ck.model.voice.config.to_vector());
  w.vector("meta.face_config", ck.model.face.config.to_vector());
  for (const num::NamedParameter& p : ck.model.parameters()) w.tensor(p.name, p.tensor);
  const OptimizerState& opt = ck.optimizer;
  w.vector("adam.hyper", {opt.beta1, opt.beta2, opt.epsilon});
  w.vector("adam.step", split_u64(opt.step));
  for (const auto& [name, m] : opt.first_moment) w.tensor("adam.m." + name, m);
  for (const auto& [name, v] : opt.second_moment) w.tensor("adam.v." + name, v);
  std::vector<double> rng = split_u64(ck.rng.seed());
  for (double v : split_u64(ck.rng.counter())) rng.push_back(v);
  w.vector("rng.state", rng);

  // Write-then-rename keeps an interrupted save from clobbering a good file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out) throw InputError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path.string());
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t hash = r.u64();
  std::map<std::string, num::Tensor> table;
  while (!r.done()) {
    auto [name, t] = r.tensor();
    if (!table.emplace(name, std::move(t)).second) r.fail("duplicate entry " + name);
  }
  auto take = [&](const std::string& name) -> num::Tensor& {
    auto it = table.find(name);
    if (it == table.end()) r.fail("missing entry " + name);
    return it->second;
  };
  auto as_vector = [&](const std::string& name) {
    const num::Tensor& t = take(name);
    return std::vector<double>(t.values().begin(), t.values().end());
  };

  encoder::EncoderConfig voice_config;
  encoder::EncoderConfig face_config;
  try {
    voice_config = encoder::EncoderConfig::from_vector(as_vector("meta.voice_config"));
    face_config = encoder::EncoderConfig::from_vector(as_vector("meta.face_config"));
    voice_config.validate();
    face_config.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("bad config record: ") + e.what());
  }
  if (config_hash(voice_config, face_config) != hash) r.fail("config hash mismatch");

  Checkpoint ck;
  ck.model = encoder::VfdModel::create(voice_config, face_config, 0);
  for (num::NamedParameter& p : ck.model.parameters()) {
    const num::Tensor& stored = take(p.name);
    if (stored.shape() != p.tensor.shape()) {
      r.fail("tensor " + p.name + " has shape " + num::to_string(stored.shape()) + ", model expects " +
             num::to_string(p.tensor.shape()));
    }
    std::copy(stored.values().begin(), stored.values().end(), p.tensor.values().begin());
  }
  const std::vector<double> hyper = as_vector("adam.hyper");
  const std::vector<double> step = as_vector("adam.step");
  const std::vector<double> rng = as_vector("rng.state");
  if (hyper.size() != 3 || step.size() != 2 || rng.size() != 4) r.fail("malformed optimizer or rng record");
  ck.optimizer.beta1 = hyper[0];
  ck.optimizer.beta2 = hyper[1];
  ck.optimizer.epsilon = hyper[2];
  ck.optimizer.step = join_u64(step[0], step[1]);
  for (const auto& [name, t] : table) {
    if (name.starts_with("adam.m.")) ck.optimizer.first_moment.emplace(name.substr(7), t);
    if (name.starts_with("adam.v.")) ck.optimizer.second_moment.emplace(name.substr(7), t);
  }
  ck.rng = num::Rng(join_u64(rng[0], rng[1]), join_u64(rng[2], rng[3]));
  return ck;
}

}  // namespace vfd::pipeline
