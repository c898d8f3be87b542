#include "beaconopt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace beaconopt {

namespace {

constexpr char kMagic[8] = {'B', 'O', 'P', 'T', 'C', 'K', 'P', 'T'};

enum Kind : std::uint8_t { kTensor = 1, kInts = 2, kText = 3 };

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}

  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  std::string str(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <class T>
const T& Checkpoint::get(const std::string& name) const {
  auto it = records_.find(name);
  if (it == records_.end()) throw CheckpointError("checkpoint has no record '" + name + "'");
  const T* v = std::get_if<T>(&it->second);
  if (!v) throw CheckpointError("checkpoint record '" + name + "' has the wrong kind");
  return *v;
}

const Matrix& Checkpoint::tensor(const std::string& name) const { return get<Matrix>(name); }
const std::vector<std::int64_t>& Checkpoint::ints(const std::string& name) const {
  return get<std::vector<std::int64_t>>(name);
}
const std::string& Checkpoint::text(const std::string& name) const {
  return get<std::string>(name);
}

std::int64_t Checkpoint::get_int(const std::string& name) const {
  const auto& v = ints(name);
  if (v.size() != 1) throw CheckpointError("checkpoint record '" + name + "' is not a scalar");
  return v[0];
}

double Checkpoint::get_double(const std::string& name) const {
  const auto& m = tensor(name);
  if (m.size() != 1) throw CheckpointError("checkpoint record '" + name + "' is not a scalar");
  return m(0, 0);
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> n;
  for (const auto& [k, v] : records_) n.push_back(k);
  return n;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records_.size()));
  for (const auto& [name, rec] : records_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    if (const auto* m = std::get_if<Matrix>(&rec)) {
      out.push_back(static_cast<char>(kTensor));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->rows()));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m->cols()));
      for (Eigen::Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
    } else if (const auto* v = std::get_if<std::vector<std::int64_t>>(&rec)) {
      out.push_back(static_cast<char>(kInts));
      put_le<std::uint64_t>(out, v->size());
      for (auto x : *v) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(x));
    } else {
      const auto& s = std::get<std::string>(rec);
      out.push_back(static_cast<char>(kText));
      put_le<std::uint64_t>(out, s.size());
      out += s;
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.le<std::uint32_t>());
    const auto kind = r.le<std::uint8_t>();
    if (kind == kTensor) {
      const auto rows = r.le<std::uint32_t>();
      const auto cols = r.le<std::uint32_t>();
      if (static_cast<std::uint64_t>(rows) * cols > bytes.size())
        throw CheckpointError("checkpoint tensor '" + name + "' has an implausible shape");
      Matrix m(rows, cols);
      for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = r.f64();
      ck.records_[name] = std::move(m);
    } else if (kind == kInts) {
      const auto n = r.le<std::uint64_t>();
      if (n > bytes.size()) throw CheckpointError("checkpoint array '" + name + "' is truncated");
      std::vector<std::int64_t> v(n);
      for (auto& x : v) x = static_cast<std::int64_t>(r.le<std::uint64_t>());
      ck.records_[name] = std::move(v);
    } else if (kind == kText) {
      ck.records_[name] = r.str(r.le<std::uint64_t>());
    } else {
      throw CheckpointError("checkpoint record '" + name + "' has unknown kind " +
                            std::to_string(kind));
    }
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint records");
  return ck;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void Checkpoint::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace beaconopt
