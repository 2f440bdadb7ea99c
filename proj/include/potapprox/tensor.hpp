#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace potapprox {

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Incompatible shapes/modes. A subtype of argument misuse, kept separate so
// callers can distinguish "wrong sizes" from "wrong values".
struct DimensionError : ArgumentError {
  using ArgumentError::ArgumentError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

struct InitializationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimensions (n1,...,nk) of a dense k-way array. Order 0 (empty dims, one
// element) is the scalar shape produced by full contractions; shapes built
// from user input have k >= 1 with every dim >= 1.
class Shape {
 public:
  Shape() = default;

  explicit Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
    for (std::int64_t d : dims_) {
      if (d < 1) throw ArgumentError("Shape: every dim must be >= 1");
    }
    std::int64_t n = 1;
    for (std::int64_t d : dims_) {
      if (d != 0 && n > std::numeric_limits<std::int64_t>::max() / d)
        throw ArgumentError("Shape: element count overflows index type");
      n *= d;
    }
    size_ = n;
  }

  int order() const { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t size() const { return size_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  // Row-major strides, last index fastest.
  std::vector<std::int64_t> strides() const {
    std::vector<std::int64_t> st(dims_.size(), 1);
    for (int i = order() - 2; i >= 0; --i) st[i] = st[i + 1] * dims_[i + 1];
    return st;
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    return dims_.empty() ? "scalar" : s;
  }

 private:
  std::vector<std::int64_t> dims_;
  std::int64_t size_ = 1;
};

// Dense real k-way array, row-major flat storage. Constructors reject
// non-finite entries; every downstream invariant assumes finiteness.
class DenseTensor {
 public:
  DenseTensor() : data_(1, 0.0) {}  // order-0 zero scalar

  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.size()), 0.0) {}

  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_.size())
      throw DimensionError("DenseTensor: data length does not match shape");
    for (double v : data_) {
      if (!std::isfinite(v)) throw ArgumentError("DenseTensor: non-finite entry");
    }
  }

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }

  const Shape& shape() const { return shape_; }
  int order() const { return shape_.order(); }
  std::int64_t size() const { return shape_.size(); }

  double operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }
  double& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }

  std::int64_t flat_index(const std::vector<std::int64_t>& idx) const {
    if (static_cast<int>(idx.size()) != order())
      throw DimensionError("DenseTensor: index order mismatch");
    std::int64_t flat = 0;
    for (int i = 0; i < order(); ++i) {
      if (idx[static_cast<std::size_t>(i)] < 0 || idx[static_cast<std::size_t>(i)] >= shape_.dim(i))
        throw ArgumentError("DenseTensor: index out of range");
      flat = flat * shape_.dim(i) + idx[static_cast<std::size_t>(i)];
    }
    return flat;
  }

  double at(const std::vector<std::int64_t>& idx) const { return data_[static_cast<std::size_t>(flat_index(idx))]; }
  double& at(const std::vector<std::int64_t>& idx) { return data_[static_cast<std::size_t>(flat_index(idx))]; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // The single entry of an order-0 (or one-element) tensor.
  double scalar() const {
    if (size() != 1) throw DimensionError("DenseTensor: scalar() on tensor with more than one element");
    return data_[0];
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// k vectors u1,...,uk with unit Euclidean norm (within 1e-12); the arguments
// of the rank-one map tau. Relaxed (non-unit) callers pass plain vectors to
// the ops overloads instead.
class UnitVectorTuple {
 public:
  explicit UnitVectorTuple(std::vector<Eigen::VectorXd> vectors) : vectors_(std::move(vectors)) {
    if (vectors_.empty()) throw ArgumentError("UnitVectorTuple: needs at least one vector");
    for (const auto& v : vectors_) {
      if (v.size() == 0) throw ArgumentError("UnitVectorTuple: empty vector");
      if (std::abs(v.norm() - 1.0) > 1e-12)
        throw ArgumentError("UnitVectorTuple: vector norm deviates from 1 by more than 1e-12");
    }
  }

  const std::vector<Eigen::VectorXd>& vectors() const { return vectors_; }
  int order() const { return static_cast<int>(vectors_.size()); }

 private:
  std::vector<Eigen::VectorXd> vectors_;
};

// --- ".tns" text format ---
// line 1: "order k"; line 2: "dims n1 n2 ... nk"; then one value per line in
// row-major order. Blank lines are ignored; any count mismatch is rejected.

inline DenseTensor read_tns(std::istream& in) {
  auto next_line = [&in](std::string& line) -> bool {
    while (std::getline(in, line)) {
      std::size_t a = line.find_first_not_of(" \t\r\n");
      if (a == std::string::npos) continue;  // skip blank lines
      std::size_t b = line.find_last_not_of(" \t\r\n");
      line = line.substr(a, b - a + 1);
      return true;
    }
    return false;
  };

  std::string line;
  if (!next_line(line)) throw IoError("tns: empty input");
  std::istringstream h1(line);
  std::string word;
  std::int64_t k = 0;
  if (!(h1 >> word >> k) || word != "order" || k < 1 || (h1 >> word))
    throw IoError("tns: first line must be 'order k' with k >= 1");

  if (!next_line(line)) throw IoError("tns: missing dims line");
  std::istringstream h2(line);
  if (!(h2 >> word) || word != "dims") throw IoError("tns: second line must be 'dims n1 ... nk'");
  std::vector<std::int64_t> dims;
  std::int64_t d = 0;
  while (h2 >> d) {
    if (d < 1) throw IoError("tns: dims must be >= 1");
    dims.push_back(d);
  }
  if (!h2.eof()) throw IoError("tns: malformed dims line");
  if (static_cast<std::int64_t>(dims.size()) != k) throw IoError("tns: dims count does not match order");

  Shape shape(dims);
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(shape.size()));
  while (next_line(line)) {
    std::istringstream vs(line);
    double v = 0;
    if (!(vs >> v) || (vs >> word)) throw IoError("tns: malformed value line: " + line);
    if (!std::isfinite(v)) throw IoError("tns: non-finite value");
    data.push_back(v);
    if (static_cast<std::int64_t>(data.size()) > shape.size())
      throw IoError("tns: more values than the shape admits");
  }
  if (static_cast<std::int64_t>(data.size()) != shape.size())
    throw IoError("tns: fewer values than the shape admits");
  return DenseTensor(std::move(shape), std::move(data));
}

inline DenseTensor read_tns(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("tns: cannot open " + path);
  return read_tns(f);
}

inline void write_tns(std::ostream& out, const DenseTensor& t) {
  if (t.order() < 1) throw ArgumentError("tns: order-0 tensors are not serializable");
  out << "order " << t.order() << "\n";
  out << "dims";
  for (std::int64_t d : t.shape().dims()) out << " " << d;
  out << "\n";
  char buf[64];
  for (std::int64_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", t[i]);
    out << buf << "\n";
  }
}

inline void write_tns(const std::string& path, const DenseTensor& t) {
  std::ofstream f(path);
  if (!f) throw IoError("tns: cannot open " + path + " for writing");
  write_tns(f, t);
  if (!f) throw IoError("tns: write failed for " + path);
}

}  // namespace potapprox
