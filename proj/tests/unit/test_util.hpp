#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mfus/error.hpp"
#include "mfus/log.hpp"
#include "mfus/tensor.hpp"

namespace testutil {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(MFUS_FIXTURE_DIR) / name;
}

// Fresh directory under the build tree, emptied on construction.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::path(MFUS_SCRATCH_DIR) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = mfus::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { mfus::set_warning_sink(previous_); }
  std::vector<std::string> messages;

 private:
  mfus::WarningSink previous_;
};

template <typename F>
mfus::ErrorKind error_kind_of(F&& fn) {
  try {
    fn();
  } catch (const mfus::Error& e) {
    return e.kind();
  }
  throw std::runtime_error("expected an mfus::Error");
}

inline mfus::nn::Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  mfus::nn::Mat m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

}  // namespace testutil
