#include "doc/model_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doc/errors.hpp"

namespace doc {
namespace {

constexpr std::string_view kMagic = "DOCM";
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 40;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    for (double x : t.data()) f64(x);
  }
  void section(std::string_view tag, const Writer& body) {
    raw(tag);
    u64(body.buf_.size());
    raw(body.buf_);
  }
  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint64_t count() {
    const std::uint64_t n = u64();
    if (n > kMaxCount || n > remaining()) fail("implausible element count " + std::to_string(n));
    return n;
  }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n));
  }
  Tensor tensor() {
    const std::uint64_t rank = count();
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      shape.push_back(static_cast<std::size_t>(count()));
      total *= shape.back();
      if (total > remaining() / 8 + 1) fail("tensor larger than the remaining data");
    }
    if (total * 8 > remaining()) fail("tensor data truncated");
    std::vector<double> data(static_cast<std::size_t>(total));
    for (double& x : data) {
      x = f64();
      if (!std::isfinite(x)) fail("non-finite parameter value");
    }
    return Tensor(std::move(shape), std::move(data));
  }
  std::string_view take(std::size_t n) {
    if (n > remaining()) fail("unexpected end of data");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  // Next four bytes without consuming them; empty when fewer remain.
  std::string_view peek_tag() const { return remaining() >= 4 ? bytes_.substr(pos_, 4) : std::string_view{}; }
  void expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " unexpected trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError("model file " + what_ + ": " + msg); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

Reader open_section(Reader& file, std::string_view tag) {
  const auto got = file.take(4);
  if (got != tag) file.fail("expected section " + std::string(tag) + ", found '" + std::string(got) + "'");
  const std::uint64_t len = file.u64();
  if (len > file.remaining()) file.fail("section " + std::string(tag) + " truncated");
  return Reader(file.take(static_cast<std::size_t>(len)), "section " + std::string(tag));
}

}  // namespace

std::string serialize_model(const ModelFile& model) {
  Writer out;
  out.raw(kMagic);
  out.u32(kModelFormatVersion);

  Writer conf;
  const EncoderConfig& c = model.encoder;
  for (std::size_t v : {c.vocab_size, c.embed_dim, c.filters_per_width, c.hidden_dim, c.num_classes, c.doc_len}) {
    conf.u64(v);
  }
  conf.u64(c.filter_widths.size());
  for (std::size_t w : c.filter_widths) conf.u64(w);
  conf.u8(c.conv_relu ? 1 : 0);
  conf.u8(model.head == HeadKind::kOneVsRest ? 0 : 1);
  out.section("CONF", conf);

  Writer clas;
  clas.u64(model.classes.size());
  for (const auto& name : model.classes) clas.str(name);
  out.section("CLAS", clas);

  Writer vocb;
  vocb.u64(model.vocab.max_size());
  vocb.u64(model.vocab.regular_tokens().size());
  for (const auto& tok : model.vocab.regular_tokens()) vocb.str(tok);
  out.section("VOCB", vocb);

  Writer splt;
  splt.f64(model.split.seen_fraction);
  splt.u64(model.split.seed);
  out.section("SPLT", splt);

  Writer parm;
  const auto tensors = model.params.tensors();
  parm.u64(tensors.size());
  for (const Tensor* t : tensors) parm.tensor(*t);
  out.section("PARM", parm);

  if (model.thresholds) {
    const ThresholdVector& tv = *model.thresholds;
    Writer thrs;
    thrs.u8(tv.alpha ? 1 : 0);
    thrs.f64(tv.alpha.value_or(0.0));
    thrs.u64(tv.thresholds.size());
    for (double t : tv.thresholds) thrs.f64(t);
    thrs.u64(tv.sigmas.size());
    for (double s : tv.sigmas) thrs.f64(s);
    out.section("THRS", thrs);
  }
  out.section("END ", Writer{});
  return out.bytes();
}

ModelFile deserialize_model(std::string_view bytes) {
  Reader file(bytes, "header");
  if (bytes.size() < 8 || file.take(4) != kMagic) throw FormatError("not a model file (bad magic)");
  const std::uint32_t version = file.u32();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model file version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  ModelFile model;

  {
    Reader r = open_section(file, "CONF");
    EncoderConfig& c = model.encoder;
    for (std::size_t* v :
         {&c.vocab_size, &c.embed_dim, &c.filters_per_width, &c.hidden_dim, &c.num_classes, &c.doc_len}) {
      *v = static_cast<std::size_t>(r.u64());
    }
    c.filter_widths.resize(static_cast<std::size_t>(r.count()));
    for (std::size_t& w : c.filter_widths) w = static_cast<std::size_t>(r.u64());
    const std::uint8_t relu = r.u8();
    const std::uint8_t head = r.u8();
    if (relu > 1 || head > 1) r.fail("invalid flag byte");
    c.conv_relu = relu == 1;
    model.head = head == 0 ? HeadKind::kOneVsRest : HeadKind::kSoftmax;
    r.expect_end();
    try {
      c.validate();
    } catch (const InputError& e) {
      r.fail(e.what());
    }
  }
  {
    Reader r = open_section(file, "CLAS");
    model.classes.resize(static_cast<std::size_t>(r.count()));
    for (auto& name : model.classes) name = r.str();
    r.expect_end();
    if (model.classes.size() != model.encoder.num_classes) r.fail("class list does not match the class count");
  }
  {
    Reader r = open_section(file, "VOCB");
    const auto max_size = static_cast<std::size_t>(r.u64());
    std::vector<std::string> tokens(static_cast<std::size_t>(r.count()));
    for (auto& tok : tokens) tok = r.str();
    r.expect_end();
    try {
      model.vocab = Vocabulary::from_tokens(std::move(tokens), max_size);
    } catch (const InputError& e) {
      r.fail(e.what());
    }
    if (model.vocab.size() != model.encoder.vocab_size) r.fail("vocabulary size does not match the embedding");
  }
  {
    Reader r = open_section(file, "SPLT");
    model.split.seen_fraction = r.f64();
    model.split.seed = r.u64();
    r.expect_end();
    if (!(model.split.seen_fraction > 0.0 && model.split.seen_fraction <= 1.0)) r.fail("invalid seen fraction");
  }
  {
    Reader r = open_section(file, "PARM");
    const std::size_t widths = model.encoder.filter_widths.size();
    if (r.count() != 5 + 2 * widths) r.fail("wrong number of parameter tensors");
    ModelParams& p = model.params;
    p.embedding = r.tensor();
    for (std::size_t i = 0; i < widths; ++i) {
      p.conv_filters.push_back(r.tensor());
      p.conv_biases.push_back(r.tensor());
    }
    p.hidden_weight = r.tensor();
    p.hidden_bias = r.tensor();
    p.output_weight = r.tensor();
    p.output_bias = r.tensor();
    r.expect_end();
    p.validate(model.encoder);
  }
  if (file.peek_tag() == "THRS") {
    Reader r = open_section(file, "THRS");
    ThresholdVector tv;
    const std::uint8_t has_alpha = r.u8();
    const double alpha = r.f64();
    if (has_alpha > 1) r.fail("invalid flag byte");
    if (has_alpha) tv.alpha = alpha;
    tv.thresholds.resize(static_cast<std::size_t>(r.count()));
    for (double& t : tv.thresholds) t = r.f64();
    tv.sigmas.resize(static_cast<std::size_t>(r.count()));
    for (double& s : tv.sigmas) s = r.f64();
    r.expect_end();
    if (tv.thresholds.size() != model.encoder.num_classes) r.fail("threshold count does not match the class count");
    if (!tv.sigmas.empty() && tv.sigmas.size() != tv.thresholds.size()) r.fail("sigma count mismatch");
    for (double t : tv.thresholds) {
      if (!(t >= 0.0 && t <= 1.0)) r.fail("threshold outside [0, 1]");
    }
    model.thresholds = std::move(tv);
  }
  open_section(file, "END ").expect_end();
  file.expect_end();
  return model;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write model file " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing model file " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace doc
