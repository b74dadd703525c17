#include "parl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace parl {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'R', 'L', 'C', 'K', 'P', '1'};

static_assert(sizeof(double) == 8, "checkpoint format assumes 64-bit doubles");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated parameter array");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));

  const std::string meta = ckpt.meta.dump();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  write_pod<std::uint8_t>(out, ckpt.net.has_value() ? 1 : 0);
  if (ckpt.net) {
    const MlpDims& d = ckpt.net->dims();
    write_pod<std::int32_t>(out, d.in);
    write_pod<std::int32_t>(out, d.h1);
    write_pod<std::int32_t>(out, d.h2);
    write_pod<std::int32_t>(out, d.out);
    write_doubles(out, ckpt.net->flat());
  }

  write_pod<std::uint8_t>(out, ckpt.optimizer.has_value() ? 1 : 0);
  if (ckpt.optimizer) {
    const AdamState& s = *ckpt.optimizer;
    write_pod<double>(out, s.learning_rate);
    write_pod<double>(out, s.beta1);
    write_pod<double>(out, s.beta2);
    write_pod<double>(out, s.epsilon);
    write_pod<std::int64_t>(out, s.step);
    write_doubles(out, s.m);
    write_doubles(out, s.v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }

  Checkpoint ckpt;
  const auto meta_len = read_pod<std::uint32_t>(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), meta_len);
  if (!in) throw std::runtime_error("checkpoint: truncated metadata");
  ckpt.meta = nlohmann::json::parse(meta);

  if (read_pod<std::uint8_t>(in) != 0) {
    MlpDims d;
    d.in = read_pod<std::int32_t>(in);
    d.h1 = read_pod<std::int32_t>(in);
    d.h2 = read_pod<std::int32_t>(in);
    d.out = read_pod<std::int32_t>(in);
    Mlp net(d);
    net.flat() = read_doubles(in);
    if (net.flat().size() != static_cast<std::size_t>(d.param_count())) {
      throw std::runtime_error("checkpoint: parameter count does not match shapes");
    }
    ckpt.net = std::move(net);
  }

  if (read_pod<std::uint8_t>(in) != 0) {
    AdamState s(0);
    s.learning_rate = read_pod<double>(in);
    s.beta1 = read_pod<double>(in);
    s.beta2 = read_pod<double>(in);
    s.epsilon = read_pod<double>(in);
    s.step = read_pod<std::int64_t>(in);
    s.m = read_doubles(in);
    s.v = read_doubles(in);
    ckpt.optimizer = std::move(s);
  }
  return ckpt;
}

}  // namespace parl
