#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trinet {

class Rng;

/// Semantic tag for a tensor axis. Carried alongside the extents so that
/// shape checks can report which axis is wrong.
enum class Axis : std::uint8_t { batch, channel, time, height, width, generic };

std::string_view axis_name(Axis a);

using Dims = std::vector<std::size_t>;
using Roles = std::vector<Axis>;

/// Common role layouts.
namespace layout {
inline const Roles bcthw{Axis::batch, Axis::channel, Axis::time, Axis::height, Axis::width};
inline const Roles nchw{Axis::batch, Axis::channel, Axis::height, Axis::width};
inline const Roles chw{Axis::channel, Axis::height, Axis::width};
inline const Roles bc{Axis::batch, Axis::channel};
Roles generic(std::size_t rank);
}  // namespace layout

/// Raised when a "TNSR" file cannot be decoded.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major float32 tensor.
///
/// Extents are always >= 1 and the rank is at least one. Element storage is
/// owned; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Dims dims, Roles roles, std::vector<float> data);

  static Tensor zeros(Dims dims, Roles roles);
  static Tensor full(Dims dims, Roles roles, float value);

  const Dims& dims() const noexcept { return dims_; }
  const Roles& roles() const noexcept { return roles_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }
  const float* data() const noexcept { return data_.data(); }
  float* data() noexcept { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Row-major flat offset of a multi-index. Bounds checked.
  std::size_t offset(std::initializer_list<std::size_t> index) const;
  float at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
  float& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

  /// Same element order, new extents. Total size must match.
  Tensor reshaped(Dims dims, Roles roles) const;
  Tensor with_roles(Roles roles) const;

  bool bitwise_equal(const Tensor& other) const;
  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

 private:
  Dims dims_;
  Roles roles_;
  std::vector<float> data_;
};

std::size_t element_count(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Uniform draws in [lo, hi). Pure function of (rng state, dims, lo, hi).
Tensor seeded_uniform(Dims dims, Roles roles, float lo, float hi, Rng& rng);

// Element-wise arithmetic. Operands must have identical dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);

float sigmoid(float x);

double dot(const Tensor& a, const Tensor& b);
double sum_of_squares(const Tensor& a);
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Concatenate along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Slice [begin, begin + count) along `axis`.
Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t count);

// "TNSR" binary format: magic, u32 LE rank, rank x u32 LE dims, f32 LE payload.
void save(const Tensor& t, const std::filesystem::path& path);
Tensor load(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_tnsr(const Tensor& t);
Tensor decode_tnsr(std::span<const std::uint8_t> bytes);

}  // namespace trinet
