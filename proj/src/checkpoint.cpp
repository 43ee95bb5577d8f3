#include "batchens/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "batchens/error.hpp"

namespace batchens {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'B', 'E', 'N', 'S', 'C', 'K', '0', '1'};

enum class LayerTag : std::uint8_t { kEnsemble = 0, kDense = 1, kDropout = 2 };

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void raw(const char* p, std::size_t n) { buf_.append(p, n); }

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string path)
      : buf_(std::move(bytes)), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << "checkpoint '" << path_ << "': " << what << " (at byte " << pos_ << " of "
        << buf_.size() << ")";
    throw FormatError(msg.str());
  }

 private:
  void need(std::size_t n) {
    if (buf_.size() - pos_ < n) fail("truncated");
  }

  std::string buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

void write_activation(ByteWriter& w, Activation act) {
  w.u8(static_cast<std::uint8_t>(act));
}

Activation read_activation(ByteReader& r) {
  std::uint8_t v = r.u8();
  if (v > static_cast<std::uint8_t>(Activation::kRelu)) r.fail("unknown activation code");
  return static_cast<Activation>(v);
}

void write_matrix(ByteWriter& w, const Matrix2D& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  for (double v : m.values()) w.f64(v);
}

void read_matrix_into(ByteReader& r, Matrix2D& m) {
  std::uint64_t rows = r.u64();
  std::uint64_t cols = r.u64();
  if (rows != m.rows() || cols != m.cols()) {
    std::ostringstream msg;
    msg << "parameter tensor is " << rows << "x" << cols << " but the declared structure needs "
        << m.rows() << "x" << m.cols();
    r.fail(msg.str());
  }
  for (double& v : m.values()) v = r.f64();
}

// Dimension caps keep a corrupt length field from turning into a huge
// allocation before the truncation check fires.
std::size_t read_dim(ByteReader& r, const char* what) {
  std::uint64_t v = r.u64();
  if (v == 0 || v > (1ull << 32)) {
    std::ostringstream msg;
    msg << "implausible " << what << " " << v;
    r.fail(msg.str());
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     std::uint64_t config_fingerprint,
                     const std::vector<double>& snapshot_accuracies) {
  validate_model(model);
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u64(config_fingerprint);

  w.u64(model.trunk.size());
  for (const Layer& layer : model.trunk) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerTag::kEnsemble));
      w.u64(be->in_dim());
      w.u64(be->out_dim());
      w.u64(be->members());
      write_activation(w, be->act);
    } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerTag::kDense));
      w.u64(dense->in_dim());
      w.u64(dense->out_dim());
      write_activation(w, dense->act);
    } else {
      const auto& drop = std::get<DropoutLayer>(layer);
      w.u8(static_cast<std::uint8_t>(LayerTag::kDropout));
      w.f64(drop.rate);
    }
  }

  w.u64(model.heads.size());
  for (const DenseLayer& head : model.heads) {
    w.u64(head.in_dim());
    w.u64(head.out_dim());
    write_activation(w, head.act);
  }

  // const_cast is confined to enumerating tensors; nothing below writes.
  std::vector<ParamRef> params = trainable_params(const_cast<Model&>(model));
  w.u64(params.size());
  for (const ParamRef& p : params) write_matrix(w, *p.tensor);

  w.u64(snapshot_accuracies.size());
  for (double a : snapshot_accuracies) w.f64(a);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw IoError("write to checkpoint '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream all;
  all << in.rdbuf();
  if (in.bad()) throw IoError("read from checkpoint '" + path + "' failed");
  ByteReader r(all.str(), path);

  char magic[sizeof(kMagic)];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    r.fail("bad magic; not a checkpoint written by this tool");

  Checkpoint ck;
  ck.config_fingerprint = r.u64();

  std::uint64_t trunk_count = r.u64();
  if (trunk_count > 4096) r.fail("implausible trunk layer count");
  ck.model.trunk.reserve(static_cast<std::size_t>(trunk_count));
  for (std::uint64_t i = 0; i < trunk_count; ++i) {
    std::uint8_t tag = r.u8();
    if (tag == static_cast<std::uint8_t>(LayerTag::kEnsemble)) {
      std::size_t m = read_dim(r, "input width");
      std::size_t n = read_dim(r, "output width");
      std::size_t members = read_dim(r, "ensemble size");
      Activation act = read_activation(r);
      ck.model.trunk.emplace_back(BatchEnsembleLayer(m, n, members, act));
    } else if (tag == static_cast<std::uint8_t>(LayerTag::kDense)) {
      std::size_t m = read_dim(r, "input width");
      std::size_t n = read_dim(r, "output width");
      Activation act = read_activation(r);
      ck.model.trunk.emplace_back(DenseLayer(m, n, act));
    } else if (tag == static_cast<std::uint8_t>(LayerTag::kDropout)) {
      double rate = r.f64();
      if (!(rate >= 0.0 && rate < 1.0)) r.fail("dropout rate outside [0, 1)");
      ck.model.trunk.emplace_back(DropoutLayer(rate));
    } else {
      r.fail("unknown layer tag");
    }
  }

  std::uint64_t head_count = r.u64();
  if (head_count == 0 || head_count > 4096) r.fail("implausible head count");
  ck.model.heads.reserve(static_cast<std::size_t>(head_count));
  for (std::uint64_t h = 0; h < head_count; ++h) {
    std::size_t m = read_dim(r, "head input width");
    std::size_t n = read_dim(r, "head output width");
    Activation act = read_activation(r);
    ck.model.heads.emplace_back(m, n, act);
  }

  try {
    validate_model(ck.model);
  } catch (const Error& e) {
    r.fail(std::string("declared structure is inconsistent: ") + e.what());
  }

  std::vector<ParamRef> params = trainable_params(ck.model);
  std::uint64_t tensor_count = r.u64();
  if (tensor_count != params.size()) {
    std::ostringstream msg;
    msg << "file carries " << tensor_count << " parameter tensors but the structure has "
        << params.size();
    r.fail(msg.str());
  }
  for (ParamRef& p : params) read_matrix_into(r, *p.tensor);

  std::uint64_t snap_count = r.u64();
  if (snap_count > 4096) r.fail("implausible snapshot count");
  ck.snapshot_accuracies.resize(static_cast<std::size_t>(snap_count));
  for (double& a : ck.snapshot_accuracies) a = r.f64();

  if (r.remaining() != 0) r.fail("trailing bytes after checkpoint payload");
  return ck;
}

}  // namespace batchens
