#include "mbmfn/checkpoint.hpp"

#include "mbmfn/run_config.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mbmfn {

namespace {

constexpr unsigned char kMagic[4] = {'M', 'B', 'M', 'F'};
constexpr std::uint8_t kReal32 = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    text(name);
    u8(kReal32);
    for (Index d : {t.n(), t.c(), t.h(), t.w()}) u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.size(); ++i) u32(std::bit_cast<std::uint32_t>(t.data()[i]));
  }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, std::size_t end, std::string source)
      : in_(bytes), end_(end), source_(std::move(source)) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (n > end_ - pos_)
      throw CheckpointError(source_ + ": truncated at offset " + std::to_string(pos_) + " while reading " + what +
                            " (" + std::to_string(n) + " bytes needed, " + std::to_string(end_ - pos_) + " left)");
    const unsigned char* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint32_t u32(const char* what) {
    const auto* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = text("tensor name");
    const std::size_t at = pos_;
    if (u8("dtype tag") != kReal32) fail(at, "unsupported dtype tag for '" + name + "'");
    Shape s;
    s.n = u32("tensor dims");
    s.c = u32("tensor dims");
    s.h = u32("tensor dims");
    s.w = u32("tensor dims");
    // Guard the element count before multiplying so corrupt dims cannot overflow.
    std::size_t elements = 1;
    for (Index d : {s.n, s.c, s.h, s.w}) {
      if (d != 0 && elements > (end_ - pos_) / 4 / static_cast<std::size_t>(d))
        take(end_ - pos_ + 1, "tensor payload");
      elements *= static_cast<std::size_t>(d);
    }
    const auto* p = take(elements * 4, "tensor payload");
    Tensor<float> t(s);
    for (Index i = 0; i < t.size(); ++i) {
      std::uint32_t v = 0;
      for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[4 * i + k]) << (8 * k);
      t.data()[i] = std::bit_cast<float>(v);
    }
    return {std::move(name), std::move(t)};
  }
  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw CheckpointError(source_ + ": offset " + std::to_string(at) + ": " + msg);
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::uint32_t checksum(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(n)));
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ModelConfig& model, const ParamStore<float>& params,
                                             const TrainState* state) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.text(serialize(model));
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params.entries()) w.tensor(name, t);
  w.u8(state ? 1 : 0);
  if (state) {
    w.u32(static_cast<std::uint32_t>(state->epoch));
    w.u64(static_cast<std::uint64_t>(state->iteration));
    w.f64(state->lr);
    w.f64(state->best_loss);
    w.u64(static_cast<std::uint64_t>(state->adam.step));
    std::ostringstream rng;
    rng << state->rng;
    w.text(rng.str());
    w.u32(static_cast<std::uint32_t>(state->adam.first.size() + state->adam.second.size()));
    for (const auto& [name, t] : state->adam.first) w.tensor("m:" + name, t);
    for (const auto& [name, t] : state->adam.second) w.tensor("v:" + name, t);
  }
  w.u32(checksum(w.data().data(), w.data().size()));
  return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& source) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(source + ": not a checkpoint (bad magic)");
  // The checksum covers everything but its own four bytes; parse the body
  // first so that truncation reports a meaningful offset.
  Reader r(bytes, bytes.size(), source);
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const std::size_t config_at = r.pos();
  try {
    ck.model = parse_model_config(r.text("model config"));
    ck.model.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(config_at, std::string("bad model config: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    ck.params.add(std::move(name), std::move(t));
  }
  if (r.u8("state flag")) {
    TrainState s;
    s.epoch = static_cast<int>(r.u32("epoch"));
    s.iteration = static_cast<std::int64_t>(r.u64("iteration"));
    s.lr = r.f64("lr");
    s.best_loss = r.f64("best loss");
    s.adam.step = static_cast<std::int64_t>(r.u64("adam step"));
    std::istringstream rng(r.text("rng state"));
    rng >> s.rng;
    const std::uint32_t moments = r.u32("moment count");
    for (std::uint32_t i = 0; i < moments; ++i) {
      auto [name, t] = r.tensor();
      const auto prefix = name.substr(0, 2);
      if (prefix == "m:")
        s.adam.first.emplace(name.substr(2), std::move(t));
      else if (prefix == "v:")
        s.adam.second.emplace(name.substr(2), std::move(t));
      else
        r.fail(r.pos(), "unexpected optimizer tensor '" + name + "'");
    }
    ck.state = std::move(s);
  }
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32("checksum");
  if (r.pos() != bytes.size())
    throw CheckpointError(source + ": " + std::to_string(bytes.size() - r.pos()) + " trailing bytes after checksum");
  if (stored != checksum(bytes.data(), body)) throw CheckpointError(source + ": checksum mismatch, file is corrupt");

  const auto layout = param_layout(ck.model);
  if (layout.size() != ck.params.size())
    throw CheckpointError(source + ": holds " + std::to_string(ck.params.size()) + " tensors, config expects " +
                          std::to_string(layout.size()));
  for (const auto& spec : layout) {
    if (!ck.params.contains(spec.name)) throw CheckpointError(source + ": missing parameter '" + spec.name + "'");
    if (ck.params.at(spec.name).shape() != spec.shape)
      throw CheckpointError(source + ": parameter '" + spec.name + "' has shape " +
                            ck.params.at(spec.name).shape().str() + ", config expects " + spec.shape.str());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& model, const ParamStore<float>& params,
                     const TrainState* state) {
  const auto bytes = encode_checkpoint(model, params, state);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace mbmfn
