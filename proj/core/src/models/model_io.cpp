#include "adaudit/models/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace adaudit::models {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mnb: return "mnb";
    case ModelKind::logreg: return "logreg";
    case ModelKind::cnn: return "cnn";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view s) {
  if (s == "mnb" || s == "nb") return ModelKind::mnb;
  if (s == "logreg" || s == "lr") return ModelKind::logreg;
  if (s == "cnn") return ModelKind::cnn;
  throw DataError("unknown model kind '" + std::string(s) + "'");
}

ModelKind kind_of(const AnyModel& m) {
  switch (m.index()) {
    case 0: return ModelKind::mnb;
    case 1: return ModelKind::logreg;
    default: return ModelKind::cnn;
  }
}

namespace {

constexpr char kMagic[4] = {'A', 'D', 'M', 'C'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw TruncatedContainer();
  }
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::vector<double> doubles(std::uint64_t expected, const char* what) {
    const std::uint64_t n = u64();
    if (n != expected)
      throw ShapeMismatch(std::string("shape mismatch in ") + what + ": stored " + std::to_string(n) +
                          ", expected " + std::to_string(expected));
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1u << 20)) throw ContainerError("implausible string length in container");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::uint64_t bounded(std::uint64_t limit, const char* what) {
    const std::uint64_t v = u64();
    if (v > limit) throw ShapeMismatch(std::string("implausible ") + what + " in container");
    return v;
  }

 private:
  std::istream& in_;
};

constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

void write_payload(Writer& w, const MnbModel& m) {
  w.u64(m.dims);
  w.f64(m.alpha);
  w.f64(m.log_prior[0]);
  w.f64(m.log_prior[1]);
  w.doubles(m.log_likelihood[0]);
  w.doubles(m.log_likelihood[1]);
}

void write_payload(Writer& w, const LogRegModel& m) {
  w.u64(m.weights.size());
  w.f64(m.bias);
  w.f64(m.l2);
  w.f64(m.lr);
  w.doubles(m.weights);
}

void write_payload(Writer& w, const CnnModel& m) {
  const auto& c = m.config;
  w.u64(c.embed_dim);
  w.u64(c.filter_widths.size());
  for (const auto fw : c.filter_widths) w.u64(fw);
  w.u64(c.filters_per_width);
  w.u64(c.hidden);
  w.f64(c.dropout);
  for (const auto& bank : m.conv) {
    w.doubles(bank.weights);
    w.doubles(bank.bias);
  }
  w.doubles(m.dense_w);
  w.doubles(m.dense_b);
  w.doubles(m.out_w);
  w.doubles(m.out_b);
}

MnbModel read_mnb(Reader& r) {
  MnbModel m;
  m.dims = r.bounded(kMaxDim, "dims");
  m.alpha = r.f64();
  m.log_prior[0] = r.f64();
  m.log_prior[1] = r.f64();
  m.log_likelihood[0] = r.doubles(m.dims, "mnb log-likelihood");
  m.log_likelihood[1] = r.doubles(m.dims, "mnb log-likelihood");
  return m;
}

LogRegModel read_logreg(Reader& r) {
  LogRegModel m;
  const auto dim = r.bounded(kMaxDim, "dim");
  m.bias = r.f64();
  m.l2 = r.f64();
  m.lr = r.f64();
  m.weights = r.doubles(dim, "logreg weights");
  return m;
}

CnnModel read_cnn(Reader& r) {
  CnnConfig c;
  c.embed_dim = r.bounded(1u << 16, "embed dim");
  const auto widths = r.bounded(64, "width count");
  c.filter_widths.clear();
  for (std::uint64_t i = 0; i < widths; ++i) c.filter_widths.push_back(r.bounded(1024, "filter width"));
  c.filters_per_width = r.bounded(1u << 16, "filter count");
  c.hidden = r.bounded(1u << 16, "hidden size");
  c.dropout = r.f64();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ShapeMismatch(std::string("invalid cnn config in container: ") + e.what());
  }
  CnnModel m = CnnModel::zeros(c);
  for (auto& bank : m.conv) {
    bank.weights = r.doubles(bank.weights.size(), "cnn conv weights");
    bank.bias = r.doubles(bank.bias.size(), "cnn conv bias");
  }
  m.dense_w = r.doubles(m.dense_w.size(), "cnn dense weights");
  m.dense_b = r.doubles(m.dense_b.size(), "cnn dense bias");
  m.out_w = r.doubles(m.out_w.size(), "cnn output weights");
  m.out_b = r.doubles(1, "cnn output bias");
  return m;
}

}  // namespace

void save_model(const ModelBundle& bundle, std::ostream& out) {
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.pod(kContainerVersion);
  w.pod(static_cast<std::uint8_t>(bundle.kind()));
  std::visit([&](const auto& m) { write_payload(w, m); }, bundle.model);
  w.u64(bundle.embedding_fingerprint);
  w.str(bundle.model_id);
  if (!out) throw DataError("failed writing model container");
}

ModelBundle load_model(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ContainerError("not a model container (bad magic)");
  const auto version = r.pod<std::uint8_t>();
  if (version != kContainerVersion)
    throw ContainerError("unsupported container version " + std::to_string(version));
  const auto kind = r.pod<std::uint8_t>();
  ModelBundle b;
  switch (static_cast<ModelKind>(kind)) {
    case ModelKind::mnb: b.model = read_mnb(r); break;
    case ModelKind::logreg: b.model = read_logreg(r); break;
    case ModelKind::cnn: b.model = read_cnn(r); break;
    default: throw KindMismatch("unknown model kind tag " + std::to_string(kind));
  }
  b.embedding_fingerprint = r.u64();
  b.model_id = r.str();
  return b;
}

void save_model_file(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  save_model(bundle, out);
}

ModelBundle load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load_model(in);
}

namespace {

template <typename T>
T load_typed(std::istream& in, ModelKind want) {
  auto b = load_model(in);
  if (b.kind() != want)
    throw KindMismatch("container holds a " + std::string(to_string(b.kind())) + " model, expected " +
                       std::string(to_string(want)));
  return std::get<T>(std::move(b.model));
}

}  // namespace

MnbModel load_mnb(std::istream& in) { return load_typed<MnbModel>(in, ModelKind::mnb); }
LogRegModel load_logreg(std::istream& in) { return load_typed<LogRegModel>(in, ModelKind::logreg); }
CnnModel load_cnn(std::istream& in) { return load_typed<CnnModel>(in, ModelKind::cnn); }

}  // namespace adaudit::models
