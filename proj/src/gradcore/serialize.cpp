#include "mcpst/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcpst {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'P', 'S'};

template <class U>
void put_uint(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("model file truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* ModelFile::find(const std::string& name) const {
  for (const auto& [n, t] : records) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string encode_model(const ModelFile& file) {
  std::string out(kMagic, 4);
  put_uint<std::uint32_t>(out, ModelFile::kVersion);
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(file.config_text.size()));
  out += file.config_text;
  for (const auto& [name, t] : file.records) {
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_uint<std::uint64_t>(out, d);
    for (double v : t.values()) put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ModelFile decode_model(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("not a model file (bad magic)");
  }
  Reader r(bytes);
  r.text(4);
  const auto version = r.uint<std::uint32_t>();
  if (version != ModelFile::kVersion) {
    throw std::runtime_error("unsupported model file version " + std::to_string(version));
  }
  ModelFile file;
  file.config_text = r.text(r.uint<std::uint32_t>());
  while (!r.done()) {
    std::string name = r.text(r.uint<std::uint32_t>());
    const auto rank = r.uint<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(r.uint<std::uint64_t>());
    file.records.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return file;
}

void write_model_file(const std::filesystem::path& path, const ModelFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_model(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

ModelFile read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_model(ss.str());
}

}  // namespace mcpst
