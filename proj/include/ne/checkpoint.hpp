#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ne/agent.hpp"
#include "ne/rng.hpp"

namespace ne {

namespace detail {

inline constexpr char kCkptMagic[8] = {'N', 'E', 'C', 'H', 'K', 'P', 'T', '1'};

struct BinWriter {
  std::ofstream out;
  explicit BinWriter(const std::filesystem::path& p) : out(p, std::ios::binary) {
    if (!out) throw std::runtime_error("checkpoint: cannot open " + p.string());
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    i64(static_cast<std::int64_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void matrix(const Matrix& m) {
    i64(m.rows());
    i64(m.cols());
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void vector(const Vector& v) {
    i64(v.size());
    bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
};

struct BinReader {
  std::ifstream in;
  explicit BinReader(const std::filesystem::path& p) : in(p, std::ios::binary) {
    if (!in) throw std::runtime_error("checkpoint: cannot open " + p.string());
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    const auto n = i64();
    std::string s(static_cast<std::size_t>(n), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  Matrix matrix() {
    const auto r = i64(), c = i64();
    Matrix m(r, c);
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }
  Vector vector() {
    const auto n = i64();
    Vector v(n);
    bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
    return v;
  }
};

inline void write_network(BinWriter& w, const MaskedNetwork& net) {
  w.i64(static_cast<std::int64_t>(net.layer_count()));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const MaskedLayer& l = net.layers[i];
    w.i64(l.fan_in());
    w.i64(l.fan_out());
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u8(l.force_dense ? 1 : 0);
    w.f64(l.clip_bound);
    w.matrix(l.weights);
    w.vector(l.bias);
    w.matrix(l.mask);
  }
}

inline void read_network(BinReader& r, MaskedNetwork& net) {
  const auto n = r.i64();
  if (n != static_cast<std::int64_t>(net.layer_count()))
    throw std::runtime_error("checkpoint: layer count mismatch");
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    MaskedLayer& l = net.layers[i];
    const auto fi = r.i64(), fo = r.i64();
    if (fi != l.fan_in() || fo != l.fan_out())
      throw std::runtime_error("checkpoint: layer shape mismatch");
    l.activation = static_cast<Activation>(r.u8());
    l.force_dense = r.u8() != 0;
    l.clip_bound = r.f64();
    l.weights = r.matrix();
    l.bias = r.vector();
    l.mask = r.matrix();
  }
}

inline void write_adam(BinWriter& w, const AdamState& st) {
  w.i64(st.step);
  w.f64(st.hyper.lr);
  w.f64(st.hyper.beta1);
  w.f64(st.hyper.beta2);
  w.f64(st.hyper.eps);
  w.i64(static_cast<std::int64_t>(st.m_w.size()));
  for (std::size_t i = 0; i < st.m_w.size(); ++i) {
    w.matrix(st.m_w[i]);
    w.matrix(st.v_w[i]);
    w.vector(st.m_b[i]);
    w.vector(st.v_b[i]);
  }
}

inline void read_adam(BinReader& r, AdamState& st) {
  st.step = r.i64();
  st.hyper.lr = r.f64();
  st.hyper.beta1 = r.f64();
  st.hyper.beta2 = r.f64();
  st.hyper.eps = r.f64();
  const auto n = r.i64();
  if (n != static_cast<std::int64_t>(st.m_w.size()))
    throw std::runtime_error("checkpoint: adam layer count mismatch");
  for (std::size_t i = 0; i < st.m_w.size(); ++i) {
    st.m_w[i] = r.matrix();
    st.v_w[i] = r.matrix();
    st.m_b[i] = r.vector();
    st.v_b[i] = r.vector();
  }
}

inline void write_bank(BinWriter& w, const HeadBank& bank) {
  w.i64(static_cast<std::int64_t>(bank.heads.size()));
  for (std::size_t t = 0; t < bank.heads.size(); ++t) {
    const MaskedLayer& l = bank.heads[t];
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u8(l.force_dense ? 1 : 0);
    w.f64(l.clip_bound);
    w.matrix(l.weights);
    w.vector(l.bias);
    w.matrix(l.mask);
    w.matrix(bank.m_w[t]);
    w.matrix(bank.v_w[t]);
    w.vector(bank.m_b[t]);
    w.vector(bank.v_b[t]);
  }
}

inline HeadBank read_bank(BinReader& r) {
  HeadBank bank;
  const auto n = r.i64();
  for (std::int64_t t = 0; t < n; ++t) {
    MaskedLayer l;
    l.activation = static_cast<Activation>(r.u8());
    l.force_dense = r.u8() != 0;
    l.clip_bound = r.f64();
    l.weights = r.matrix();
    l.bias = r.vector();
    l.mask = r.matrix();
    bank.heads.push_back(std::move(l));
    bank.m_w.push_back(r.matrix());
    bank.v_w.push_back(r.matrix());
    bank.m_b.push_back(r.vector());
    bank.v_b.push_back(r.vector());
  }
  return bank;
}

}  // namespace detail

/// Versioned binary dump of the agent (specs, weights, masks, Adam state,
/// per-task heads) plus the run RNG. Round-trips bit-exactly.
inline void save_checkpoint(const std::filesystem::path& path, TD3Agent& agent,
                            const Rng& rng) {
  detail::BinWriter w(path);
  w.bytes(detail::kCkptMagic, sizeof(detail::kCkptMagic));
  w.i64(1);  // version
  w.f64(agent.action_bound());
  w.u8(agent.multi_head() ? 1 : 0);
  w.i64(agent.current_task());
  for (int i = 0; i < 6; ++i) detail::write_network(w, agent.ckpt_net(i));
  for (int i = 0; i < 3; ++i) detail::write_adam(w, agent.ckpt_adam(i));
  if (agent.multi_head())
    for (int i = 0; i < 6; ++i) detail::write_bank(w, *agent.ckpt_bank(i));
  w.str(rng.serialize());
  if (!w.out) throw std::runtime_error("checkpoint: write failed " + path.string());
}

/// Restores into an agent built from the same configuration.
inline void load_checkpoint(const std::filesystem::path& path, TD3Agent& agent,
                            Rng& rng) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = r.i64();
  if (version != 1)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  agent.set_action_bound(r.f64());
  const bool mh = r.u8() != 0;
  const int task = static_cast<int>(r.i64());
  for (int i = 0; i < 6; ++i) detail::read_network(r, agent.ckpt_net(i));
  for (int i = 0; i < 3; ++i) detail::read_adam(r, agent.ckpt_adam(i));
  if (mh)
    for (int i = 0; i < 6; ++i) agent.ckpt_bank(i) = detail::read_bank(r);
  agent.ckpt_set_multi_head(mh, task);
  rng.deserialize(r.str());
}

}  // namespace ne
