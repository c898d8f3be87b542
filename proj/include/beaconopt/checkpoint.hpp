#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "beaconopt/tape.hpp"

namespace beaconopt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing binary container of named records: f64 tensors, i64
/// arrays and text. Numbers are stored little-endian regardless of host;
/// a write/read cycle reproduces every value bit for bit.
///
/// Layout: "BOPTCKPT" | u32 version | u32 record count | records, where a
/// record is u32 name length | name | u8 kind | payload:
///   kind 1 tensor: u32 rows | u32 cols | rows*cols f64 (row-major)
///   kind 2 ints:   u64 count | count i64
///   kind 3 text:   u64 length | bytes
class Checkpoint {
 public:
  using Record = std::variant<Matrix, std::vector<std::int64_t>, std::string>;

  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, Matrix m) { records_[name] = std::move(m); }
  void put(const std::string& name, std::vector<std::int64_t> v) { records_[name] = std::move(v); }
  void put(const std::string& name, std::string s) { records_[name] = std::move(s); }
  void put_int(const std::string& name, std::int64_t v) { put(name, std::vector<std::int64_t>{v}); }
  void put_double(const std::string& name, double v) { put(name, Matrix::Constant(1, 1, v)); }

  bool has(const std::string& name) const { return records_.count(name) != 0; }
  const Matrix& tensor(const std::string& name) const;
  const std::vector<std::int64_t>& ints(const std::string& name) const;
  const std::string& text(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;
  double get_double(const std::string& name) const;

  std::vector<std::string> names() const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  /// Atomic write via a temporary file and rename.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.serialize() == b.serialize();
  }

 private:
  template <class T>
  const T& get(const std::string& name) const;

  std::map<std::string, Record> records_;
};

/// Writes `contents` to `path` via `path.tmp` + rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace beaconopt
