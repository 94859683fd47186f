#include "otfs/io.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace otfs {

namespace {

constexpr std::array<char, 4> kEmbeddingMagic = {'E', 'M', 'B', '1'};
constexpr std::array<char, 4> kEncoderMagic = {'E', 'N', 'C', '1'};

void put_u32(std::ostream& out, std::uint32_t value) {
  std::array<unsigned char, 4> bytes = {
      static_cast<unsigned char>(value & 0xff),
      static_cast<unsigned char>((value >> 8) & 0xff),
      static_cast<unsigned char>((value >> 16) & 0xff),
      static_cast<unsigned char>((value >> 24) & 0xff),
  };
  out.write(reinterpret_cast<const char*>(bytes.data()), 4);
}

void put_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open " + path, 0);
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::size_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::size_t offset() const { return offset_; }
  std::size_t size() const { return size_; }

  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> bytes;
    read(bytes.data(), 4, what);
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
  }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float value;
    std::memcpy(&value, &bits, 4);
    return value;
  }

  void expect_magic(const std::array<char, 4>& magic) {
    std::array<char, 4> got;
    read(got.data(), 4, "magic");
    if (got != magic) throw FormatError(path_ + ": bad magic", 0);
  }

  void expect_exhausted() {
    if (offset_ != size_)
      throw FormatError(path_ + ": trailing bytes after payload", offset_);
  }

 private:
  void read(void* dest, std::size_t count, const char* what) {
    if (offset_ + count > size_)
      throw FormatError(path_ + ": truncated while reading " + what, offset_);
    in_.read(static_cast<char*>(dest), static_cast<std::streamsize>(count));
    if (!in_) throw FormatError(path_ + ": read failure at " + what, offset_);
    offset_ += count;
  }

  std::string path_;
  std::ifstream in_;
  std::size_t size_ = 0;
  std::size_t offset_ = 0;
};

bool is_csv(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

LabeledEmbeddingSet read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path, 0);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file", 0);

  // Header "label,e0,...,e{d-1}" fixes the dimension.
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string field; std::getline(hs, field, ',');) header.push_back(field);
  if (header.empty() || header[0] != "label")
    throw FormatError(path + ": header must start with 'label'", 0);
  const Index dim = static_cast<Index>(header.size()) - 1;
  if (dim < 1) throw FormatError(path + ": header declares no embedding columns", 0);

  std::vector<std::vector<float>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<std::string> fields;
    for (std::string field; std::getline(ls, field, ',');) fields.push_back(field);
    if (static_cast<Index>(fields.size()) != dim + 1)
      throw FormatError(path + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(dim + 1),
                        line_no);
    try {
      labels.push_back(std::stoi(fields[0]));
      std::vector<float> row(static_cast<std::size_t>(dim));
      for (Index j = 0; j < dim; ++j)
        row[static_cast<std::size_t>(j)] = std::stof(fields[static_cast<std::size_t>(j + 1)]);
      rows.push_back(std::move(row));
    } catch (const std::exception&) {
      throw FormatError(path + ": unparsable number on line " + std::to_string(line_no), line_no);
    }
  }
  if (rows.empty()) throw FormatError(path + ": no data rows", line_no);

  LabeledEmbeddingSet set;
  set.embeddings = Matrix(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Index j = 0; j < dim; ++j)
      set.embeddings(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  const bool labeled = std::any_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
  if (labeled) set.labels = std::move(labels);
  return set;
}

void write_csv(const LabeledEmbeddingSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing", 0);
  out << "label";
  for (Index j = 0; j < set.dim(); ++j) out << ",e" << j;
  out << "\n";
  out.precision(9);  // float32 round-trips at 9 significant digits
  for (Index i = 0; i < set.rows(); ++i) {
    out << (set.has_labels() ? set.labels[static_cast<std::size_t>(i)] : -1);
    for (Index j = 0; j < set.dim(); ++j) out << ',' << static_cast<float>(set.embeddings(i, j));
    out << "\n";
  }
}

}  // namespace

LabeledEmbeddingSet read_embeddings(const std::string& path) {
  if (is_csv(path)) return read_csv(path);

  Reader reader(path);
  reader.expect_magic(kEmbeddingMagic);
  const std::uint32_t n = reader.u32("row count");
  const std::uint32_t d = reader.u32("dimension");
  const std::uint32_t flag = reader.u32("label flag");
  if (n == 0 || d == 0) throw FormatError(path + ": empty shape in header", 4);
  if (flag > 1) throw FormatError(path + ": label flag must be 0 or 1", 12);

  const std::size_t expected =
      16 + std::size_t{4} * n * d + (flag ? std::size_t{4} * n : 0);
  if (reader.size() != expected)
    throw FormatError(path + ": payload size " + std::to_string(reader.size()) +
                          " does not match header-implied " + std::to_string(expected),
                      reader.offset());

  LabeledEmbeddingSet set;
  set.embeddings = Matrix(static_cast<Index>(n), static_cast<Index>(d));
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      set.embeddings(static_cast<Index>(i), static_cast<Index>(j)) = reader.f32("payload");
    }
  }
  if (flag) {
    set.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
      set.labels.push_back(static_cast<int>(reader.u32("labels")));
  }
  reader.expect_exhausted();
  return set;
}

void write_embeddings(const LabeledEmbeddingSet& set, const std::string& path) {
  if (set.rows() < 1 || set.dim() < 1) throw ShapeError("write_embeddings: empty set");
  if (set.has_labels() && static_cast<Index>(set.labels.size()) != set.rows())
    throw ShapeError("write_embeddings: label count mismatch");
  if (set.rows() > std::numeric_limits<std::uint32_t>::max() ||
      set.dim() > std::numeric_limits<std::uint32_t>::max())
    throw ShapeError("write_embeddings: set too large for the format");

  if (is_csv(path)) {
    write_csv(set, path);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing", 0);
  out.write(kEmbeddingMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(set.rows()));
  put_u32(out, static_cast<std::uint32_t>(set.dim()));
  put_u32(out, set.has_labels() ? 1 : 0);
  for (Index i = 0; i < set.rows(); ++i) {
    for (Index j = 0; j < set.dim(); ++j) put_f32(out, static_cast<float>(set.embeddings(i, j)));
  }
  if (set.has_labels()) {
    for (int label : set.labels) put_u32(out, static_cast<std::uint32_t>(label));
  }
  if (!out) throw FormatError(path + ": write failure", 0);
}

void write_encoder(const LinearEncoder& encoder, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing", 0);
  out.write(kEncoderMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(encoder.weight.rows()));
  put_u32(out, static_cast<std::uint32_t>(encoder.weight.cols()));
  for (Index i = 0; i < encoder.weight.rows(); ++i) {
    for (Index j = 0; j < encoder.weight.cols(); ++j)
      put_f32(out, static_cast<float>(encoder.weight(i, j)));
  }
  for (Index j = 0; j < encoder.bias.size(); ++j) put_f32(out, static_cast<float>(encoder.bias[j]));
  if (!out) throw FormatError(path + ": write failure", 0);
}

LinearEncoder read_encoder(const std::string& path) {
  Reader reader(path);
  reader.expect_magic(kEncoderMagic);
  const std::uint32_t d_in = reader.u32("input dimension");
  const std::uint32_t d_out = reader.u32("output dimension");
  if (d_in == 0 || d_out == 0) throw FormatError(path + ": empty shape in header", 4);

  const std::size_t expected = 12 + std::size_t{4} * (d_in * d_out + d_out);
  if (reader.size() != expected)
    throw FormatError(path + ": payload size does not match header", reader.offset());

  LinearEncoder encoder;
  encoder.weight = Matrix(static_cast<Index>(d_in), static_cast<Index>(d_out));
  for (std::uint32_t i = 0; i < d_in; ++i) {
    for (std::uint32_t j = 0; j < d_out; ++j)
      encoder.weight(static_cast<Index>(i), static_cast<Index>(j)) = reader.f32("weights");
  }
  encoder.bias = RowVector(static_cast<Index>(d_out));
  for (std::uint32_t j = 0; j < d_out; ++j)
    encoder.bias[static_cast<Index>(j)] = reader.f32("bias");
  reader.expect_exhausted();
  return encoder;
}

}  // namespace otfs
