#include "trinet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "trinet/rng.hpp"

namespace trinet {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};

void check_same_dims(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw std::invalid_argument(std::string(op) + ": dims mismatch " + dims_to_string(a.dims()) +
                                " vs " + dims_to_string(b.dims()));
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::string_view axis_name(Axis a) {
  switch (a) {
    case Axis::batch: return "batch";
    case Axis::channel: return "channel";
    case Axis::time: return "time";
    case Axis::height: return "height";
    case Axis::width: return "width";
    case Axis::generic: return "generic";
  }
  return "?";
}

Roles layout::generic(std::size_t rank) { return Roles(rank, Axis::generic); }

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Dims dims, Roles roles, std::vector<float> data)
    : dims_(std::move(dims)), roles_(std::move(roles)), data_(std::move(data)) {
  if (dims_.empty()) throw std::invalid_argument("Tensor: dims must be non-empty");
  if (std::find(dims_.begin(), dims_.end(), 0u) != dims_.end())
    throw std::invalid_argument("Tensor: zero extent in " + dims_to_string(dims_));
  if (roles_.size() != dims_.size())
    throw std::invalid_argument("Tensor: roles/dims rank mismatch");
  if (element_count(dims_) != data_.size())
    throw std::invalid_argument("Tensor: payload size does not match " + dims_to_string(dims_));
}

Tensor Tensor::zeros(Dims dims, Roles roles) { return full(std::move(dims), std::move(roles), 0.0f); }

Tensor Tensor::full(Dims dims, Roles roles, float value) {
  if (dims.empty()) throw std::invalid_argument("Tensor: dims must be non-empty");
  const auto n = element_count(dims);
  return Tensor(std::move(dims), std::move(roles), std::vector<float>(n, value));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != dims_.size()) throw std::out_of_range("Tensor::offset: rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= dims_[axis]) throw std::out_of_range("Tensor::offset: index out of range");
    off = off * dims_[axis] + i;
    ++axis;
  }
  return off;
}

Tensor Tensor::reshaped(Dims dims, Roles roles) const {
  if (element_count(dims) != data_.size())
    throw std::invalid_argument("reshaped: element count changes " + dims_to_string(dims_) + " -> " +
                                dims_to_string(dims));
  return Tensor(std::move(dims), std::move(roles), data_);
}

Tensor Tensor::with_roles(Roles roles) const { return Tensor(dims_, std::move(roles), data_); }

bool Tensor::bitwise_equal(const Tensor& other) const {
  return dims_ == other.dims_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor seeded_uniform(Dims dims, Roles roles, float lo, float hi, Rng& rng) {
  if (!(lo < hi)) throw std::invalid_argument("seeded_uniform: require lo < hi");
  Tensor t = Tensor::zeros(std::move(dims), std::move(roles));
  const double width = static_cast<double>(hi) - static_cast<double>(lo);
  for (auto& v : t.values()) {
    auto x = static_cast<float>(lo + width * rng.next_float());
    if (x >= hi) x = std::nextafter(hi, lo);
    v = x;
  }
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "add");
  Tensor out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
  return out;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "multiply");
  Tensor out = a;
  auto o = out.values();
  auto y = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
  return out;
}

Tensor scale(const Tensor& a, float s) {
  Tensor out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

float sigmoid(float x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = sigmoid(v);
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double sum_of_squares(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.values()) acc += static_cast<double>(v) * v;
  return acc;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_dims(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const auto& first = parts.front();
  if (axis >= first.rank()) throw std::invalid_argument("concat: axis out of range");
  Dims out_dims = first.dims();
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t d = 0; d < p.rank(); ++d) {
      if (d != axis && p.dim(d) != first.dim(d))
        throw std::invalid_argument("concat: extent mismatch " + dims_to_string(p.dims()) + " vs " +
                                    dims_to_string(first.dims()));
    }
    out_dims[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first.dim(d);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.rank(); ++d) inner *= first.dim(d);

  std::vector<float> data;
  data.reserve(element_count(out_dims));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& p : parts) {
      const std::size_t chunk = p.dim(axis) * inner;
      const float* src = p.data() + o * chunk;
      data.insert(data.end(), src, src + chunk);
    }
  }
  return Tensor(std::move(out_dims), first.roles(), std::move(data));
}

Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t count) {
  if (axis >= t.rank() || count == 0 || begin + count > t.dim(axis))
    throw std::invalid_argument("slice: range out of bounds");
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= t.dim(d);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < t.rank(); ++d) inner *= t.dim(d);
  Dims dims = t.dims();
  dims[axis] = count;
  std::vector<float> data;
  data.reserve(element_count(dims));
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = t.data() + (o * t.dim(axis) + begin) * inner;
    data.insert(data.end(), src, src + count * inner);
  }
  return Tensor(std::move(dims), t.roles(), std::move(data));
}

std::vector<std::uint8_t> encode_tnsr(const Tensor& t) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
  out.reserve(out.size() + 4 * t.size());
  for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tnsr(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("TNSR: bad magic");
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank == 0) throw FormatError("TNSR: rank 0");
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw FormatError("TNSR: truncated header");
  Dims dims(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    dims[i] = get_u32(bytes, 8 + 4 * i);
    if (dims[i] == 0) throw FormatError("TNSR: zero extent");
  }
  const std::size_t n = element_count(dims);
  if (bytes.size() - header != 4 * n)
    throw FormatError("TNSR: payload size mismatch for dims " + dims_to_string(dims) + " (have " +
                      std::to_string(bytes.size() - header) + " bytes, need " +
                      std::to_string(4 * n) + ")");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  Roles roles = rank == 5 ? layout::bcthw : layout::generic(rank);
  return Tensor(std::move(dims), std::move(roles), std::move(data));
}

void save(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tnsr(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save: cannot open " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("save: write failed for " + path.string());
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_tnsr(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace trinet
