#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fairrec {

using TrackId = std::int32_t;
using PlaylistId = std::int32_t;
using ArtistId = std::int32_t;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr int kSonicDims = 9;
inline constexpr int kGenreDims = 20;
inline constexpr int kNameDims = 512;
inline constexpr int kImageDims = 1024;
inline constexpr int kPopularityBins = 10;

// Base of every error the library throws. The CLI maps ValidationError (and
// its subclasses) to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical failure during training or evaluation (non-finite values etc.).
class RuntimeError : public Error {
 public:
  using Error::Error;
};

// 64-bit mixer used to derive independent per-item RNG streams from a master
// seed, so that parallel loops give the same result as serial ones.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fairrec
