#pragma once

// Binary file formats.
//
// Tensor file (.rist), little-endian:
//   "RIST" | u16 version = 1 | u8 rank | u32 dims[rank] | f32 payload
//
// Weights file (.risw), little-endian:
//   "RISW" | u16 version = 1 | u32 in_channels | u32 layer_count |
//   per layer: u8 kind (0 = conv, 1 = dropout)
//     conv:    u32 kh | u32 kw | u32 in | u32 out | f64 weight[out*in*kh*kw] | f64 bias[out]
//     dropout: f64 rate

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "risopt/error.hpp"
#include "risopt/nn.hpp"
#include "risopt/tensor.hpp"

namespace risopt {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr std::uint16_t kWeightsFormatVersion = 1;

namespace io_detail {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }
  void put_magic(const char (&m)[5]) { bytes_.insert(bytes_.end(), m, m + 4); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void expect_magic(const char (&m)[5]) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) fail("bad magic");
    pos_ += 4;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& why) const { throw FormatError(what_ + ": " + why); }
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated file");
  }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void dump(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace io_detail

inline std::vector<char> encode_tensor(const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw DomainError("tensor rank too large");
  io_detail::Writer w;
  w.put_magic("RIST");
  w.put<std::uint16_t>(kTensorFormatVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw DomainError("tensor dimension too large");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (double v : t.values()) w.put<float>(static_cast<float>(v));
  return w.bytes();
}

inline Tensor decode_tensor(std::vector<char> bytes, const std::string& what = "tensor") {
  io_detail::Reader r(std::move(bytes), what);
  r.expect_magic("RIST");
  if (r.get<std::uint16_t>() != kTensorFormatVersion) r.fail("unsupported version");
  const auto rank = r.get<std::uint8_t>();
  std::vector<std::size_t> shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = r.get<std::uint32_t>();
    count *= d;
    if (count > (std::uint64_t{1} << 40)) r.fail("implausible element count");
  }
  if (r.remaining() != count * sizeof(float)) r.fail("payload length does not match declared shape");
  std::vector<double> data(count);
  for (auto& v : data) v = r.get<float>();
  return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) { io_detail::dump(path, encode_tensor(t)); }

inline Tensor load_tensor(const std::filesystem::path& path) {
  return decode_tensor(io_detail::slurp(path), path.string());
}

inline std::vector<char> encode_weights(const nn::Model& model) {
  io_detail::Writer w;
  w.put_magic("RISW");
  w.put<std::uint16_t>(kWeightsFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.in_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    if (const auto* c = std::get_if<nn::ConvLayer>(&layer)) {
      w.put<std::uint8_t>(0);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(c->spec.kernel_h));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(c->spec.kernel_w));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(c->spec.in_channels));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(c->spec.out_channels));
      for (double v : c->weight.values()) w.put<double>(v);
      for (double v : c->bias.values()) w.put<double>(v);
    } else {
      w.put<std::uint8_t>(1);
      w.put<double>(std::get<nn::DropoutLayer>(layer).rate);
    }
  }
  return w.bytes();
}

inline nn::Model decode_weights(std::vector<char> bytes, const std::string& what = "weights") {
  io_detail::Reader r(std::move(bytes), what);
  r.expect_magic("RISW");
  if (r.get<std::uint16_t>() != kWeightsFormatVersion) r.fail("unsupported version");
  nn::Model model;
  model.in_channels = r.get<std::uint32_t>();
  const auto layers = r.get<std::uint32_t>();
  std::size_t channels = model.in_channels;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto kind = r.get<std::uint8_t>();
    if (kind == 1) {
      model.layers.emplace_back(nn::DropoutLayer{r.get<double>()});
      continue;
    }
    if (kind != 0) r.fail("unknown layer kind");
    nn::ConvLayer c;
    c.spec.kernel_h = r.get<std::uint32_t>();
    c.spec.kernel_w = r.get<std::uint32_t>();
    c.spec.in_channels = r.get<std::uint32_t>();
    c.spec.out_channels = r.get<std::uint32_t>();
    if (c.spec.in_channels != channels) r.fail("layer channel chain is inconsistent");
    const std::uint64_t n = std::uint64_t{c.spec.out_channels} * c.spec.in_channels * c.spec.kernel_h * c.spec.kernel_w;
    r.need((n + c.spec.out_channels) * sizeof(double));
    std::vector<double> wv(n);
    for (auto& v : wv) v = r.get<double>();
    std::vector<double> bv(c.spec.out_channels);
    for (auto& v : bv) v = r.get<double>();
    c.weight = Tensor({c.spec.out_channels, c.spec.in_channels, c.spec.kernel_h, c.spec.kernel_w}, std::move(wv));
    c.bias = Tensor({c.spec.out_channels}, std::move(bv));
    channels = c.spec.out_channels;
    model.layers.emplace_back(std::move(c));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after last layer");
  return model;
}

inline void save_weights(const std::filesystem::path& path, const nn::Model& model) {
  io_detail::dump(path, encode_weights(model));
}

inline nn::Model load_weights(const std::filesystem::path& path) {
  return decode_weights(io_detail::slurp(path), path.string());
}

}  // namespace risopt
