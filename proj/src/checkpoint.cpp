#include "gripstab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace gripstab {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'C', 'K', 'P', 'T', '0', '1'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename V>
  void pod(V v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) {
    pod<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(float));
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

  template <typename V>
  V pod() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    const char* p = take(n);
    return std::string(p, n);
  }
  std::vector<float> floats() {
    const auto n = pod<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(float)) fail("section length exceeds file size");
    std::vector<float> v(n);
    std::memcpy(v.data(), take(n * sizeof(float)), n * sizeof(float));
    return v;
  }
  bool at_end() const { return pos_ == end_; }
  [[noreturn]] void fail(const std::string& why) const {
    throw IoError("checkpoint '" + path_ + "' is corrupt: " + why);
  }

 private:
  const char* take(std::size_t n) {
    if (n > end_ - pos_) fail("unexpected end of data");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
  std::size_t end_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.text(serialize_model(ckpt.spec));
  w.floats(ckpt.parameters);
  w.floats(ckpt.buffers);
  w.pod<std::uint64_t>(ckpt.step);
  w.text(ckpt.rng_state);
  auto& buf = w.buffer();
  const std::uint64_t sum = fnv1a(buf.data(), buf.size());
  w.pod(sum);

  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path.string() + "' is not a checkpoint file");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  Reader r(buf, body, path.string());
  if (fnv1a(buf.data(), body) != stored) r.fail("checksum mismatch");
  r.pod<std::uint64_t>();  // magic
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.spec = deserialize_model(r.text());
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  ckpt.parameters = r.floats();
  ckpt.buffers = r.floats();
  ckpt.step = r.pod<std::uint64_t>();
  ckpt.rng_state = r.text();
  if (!r.at_end()) r.fail("trailing data");
  return ckpt;
}

Checkpoint snapshot(const Network<float>& net, std::uint64_t step, std::string rng_state) {
  Checkpoint c;
  c.spec = net.spec();
  c.parameters.assign(net.parameters().begin(), net.parameters().end());
  c.buffers.assign(net.buffers().begin(), net.buffers().end());
  c.step = step;
  c.rng_state = std::move(rng_state);
  return c;
}

void load_into(Network<float>& net, const Checkpoint& ckpt) {
  if (net.parameters().size() != ckpt.parameters.size() || net.buffers().size() != ckpt.buffers.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(ckpt.parameters.size()) + " parameters, model '" +
                     net.spec().name + "' needs " + std::to_string(net.parameters().size()));
  }
  std::copy(ckpt.parameters.begin(), ckpt.parameters.end(), net.parameters().begin());
  std::copy(ckpt.buffers.begin(), ckpt.buffers.end(), net.buffers().begin());
}

Network<float> restore(const Checkpoint& ckpt) {
  Network<float> net(ckpt.spec);
  load_into(net, ckpt);
  return net;
}

}  // namespace gripstab
