// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/params.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ttr/errors.hpp"

namespace ttr {
namespace {

constexpr char kMagic[8] = {'T', 'T', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void wr_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t rd_u32(std::ifstream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t rd_u64(std::ifstream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated checkpoint: " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

ParamStore::Entry& ParamStore::add(const std::string& name, ad::Matrix init, bool frozen) {
  if (index_.count(name)) throw std::logic_error("ParamStore: duplicate name " + name);
  index_[name] = entries_.size();
  Entry e;
  e.name = name;
  e.grad = ad::Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  e.frozen = frozen;
  entries_.push_back(std::move(e));
  return entries_.back();
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("ParamStore: unknown name " + name);
  return entries_[it->second];
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("ParamStore: unknown name " + name);
  return entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

void ParamStore::scale_grads(double s) {
  for (auto& e : entries_) e.grad *= s;
}

void ParamStore::freeze_all(bool frozen) {
  for (auto& e : entries_) e.frozen = frozen;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void save_checkpoint(const std::string& path, const std::string& module_name,
                     const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  wr_u32(os, kVersion);
  wr_u32(os, static_cast<std::uint32_t>(module_name.size()));
  os.write(module_name.data(), static_cast<std::streamsize>(module_name.size()));
  wr_u32(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store.entries()) {
    wr_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    wr_u64(os, static_cast<std::uint64_t>(e.value.rows()));
    wr_u64(os, static_cast<std::uint64_t>(e.value.cols()));
  }
  for (const auto& e : store.entries()) {
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) {
        std::uint64_t bits;
        const double v = e.value(r, c);
        std::memcpy(&bits, &v, 8);
        wr_u64(os, bits);
      }
  }
  if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file: " + path);
  const std::uint32_t version = rd_u32(is, path);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

  Checkpoint ck;
  {
    const std::uint32_t n = rd_u32(is, path);
    ck.module_name.resize(n);
    if (!is.read(ck.module_name.data(), n)) throw IoError("truncated checkpoint: " + path);
  }
  const std::uint32_t count = rd_u32(is, path);
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> table;
  table.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t n = rd_u32(is, path);
    std::string name(n, '\0');
    if (!is.read(name.data(), n)) throw IoError("truncated checkpoint: " + path);
    const std::uint64_t rows = rd_u64(is, path);
    const std::uint64_t cols = rd_u64(is, path);
    table.emplace_back(std::move(name), std::make_pair(rows, cols));
  }
  for (const auto& [name, shape] : table) {
    ad::Matrix m(static_cast<Eigen::Index>(shape.first), static_cast<Eigen::Index>(shape.second));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const std::uint64_t bits = rd_u64(is, path);
        double v;
        std::memcpy(&v, &bits, 8);
        m(r, c) = v;
      }
    ck.store.add(name, std::move(m));
  }
  return ck;
}

void load_checkpoint_into(const std::string& path, const std::string& expected_module,
                          ParamStore& store) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.module_name != expected_module)
    throw IoError("checkpoint " + path + " holds module '" + ck.module_name + "', expected '" +
                  expected_module + "'");
  if (ck.store.size() != store.size())
    throw IoError("checkpoint " + path + ": tensor count mismatch against config");
  for (auto& e : store.entries()) {
    if (!ck.store.contains(e.name))
      throw IoError("checkpoint " + path + ": missing tensor " + e.name);
    const auto& src = ck.store.at(e.name);
    if (src.value.rows() != e.value.rows() || src.value.cols() != e.value.cols())
      throw IoError("checkpoint " + path + ": shape mismatch for " + e.name);
    e.value = src.value;
  }
}

}  // namespace ttr
