// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <doctest.h>

#include "ttr/errors.hpp"
#include "ttr/params.hpp"
#include "ttr/rng.hpp"

using namespace ttr;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ttrss_ckpt_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

ParamStore sample_store() {
  ParamStore store;
  Rng rng(55);
  ad::Matrix a(3, 4);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 4; ++c) a(r, c) = rng.uniform(-2.0, 2.0);
  store.add("alpha.w", a);
  ad::Matrix b(5, 1);
  b << 0.0, -0.0, std::numeric_limits<double>::denorm_min(), 1e308, -1.2345678901234567e-300;
  store.add("beta.b", b);
  store.add("gamma", ad::Matrix::Zero(1, 1));
  return store;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  const ParamStore store = sample_store();
  const std::string path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, "testmod", store);

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.module_name == "testmod");
  REQUIRE(ck.store.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& orig = store.entries()[i];
    const auto& back = ck.store.entries()[i];
    CHECK(back.name == orig.name);
    REQUIRE(back.value.rows() == orig.value.rows());
    REQUIRE(back.value.cols() == orig.value.cols());
    for (Eigen::Index r = 0; r < orig.value.rows(); ++r)
      for (Eigen::Index c = 0; c < orig.value.cols(); ++c) {
        // Bit-level comparison: NaN-safe and sign-of-zero-safe.
        std::uint64_t ob, bb;
        const double ov = orig.value(r, c), bv = back.value(r, c);
        std::memcpy(&ob, &ov, 8);
        std::memcpy(&bb, &bv, 8);
        CHECK(ob == bb);
      }
  }

  // Saving the loaded store reproduces the file byte for byte.
  const std::string path2 = temp_path("roundtrip2.ckpt");
  save_checkpoint(path2, ck.module_name, ck.store);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("load_checkpoint_into validates module name and shapes") {
  const ParamStore store = sample_store();
  const std::string path = temp_path("guard.ckpt");
  save_checkpoint(path, "testmod", store);

  ParamStore target = sample_store();
  CHECK_THROWS_AS(load_checkpoint_into(path, "othermod", target), IoError);

  ParamStore wrong_shape;
  wrong_shape.add("alpha.w", ad::Matrix::Zero(2, 2));
  wrong_shape.add("beta.b", ad::Matrix::Zero(5, 1));
  wrong_shape.add("gamma", ad::Matrix::Zero(1, 1));
  CHECK_THROWS_AS(load_checkpoint_into(path, "testmod", wrong_shape), IoError);

  ParamStore wrong_names;
  wrong_names.add("alpha.w", ad::Matrix::Zero(3, 4));
  wrong_names.add("delta", ad::Matrix::Zero(5, 1));
  wrong_names.add("gamma", ad::Matrix::Zero(1, 1));
  CHECK_THROWS_AS(load_checkpoint_into(path, "testmod", wrong_names), IoError);

  load_checkpoint_into(path, "testmod", target);  // happy path
  CHECK(target.at("beta.b").value == store.at("beta.b").value);
}

TEST_CASE("corrupted and missing checkpoints are rejected") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent.ckpt"), IoError);
  const std::string path = temp_path("corrupt.ckpt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("param store bookkeeping") {
  ParamStore store = sample_store();
  CHECK(store.scalar_count() == 12 + 5 + 1);
  CHECK_THROWS_AS(store.add("alpha.w", ad::Matrix::Zero(1, 1)), std::logic_error);
  CHECK_THROWS_AS(store.at("missing"), std::logic_error);

  store.at("alpha.w").grad.setOnes();
  store.scale_grads(0.5);
  CHECK(store.at("alpha.w").grad(0, 0) == 0.5);
  store.zero_grads();
  CHECK(store.at("alpha.w").grad.norm() == 0.0);

  store.freeze_all(true);
  for (const auto& e : store.entries()) CHECK(e.frozen);
}
