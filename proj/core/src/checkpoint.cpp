#include "causalpose/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/kvconfig.hpp"

namespace causalpose {

namespace {
constexpr uint32_t kMagic = 0x4b435043;  // "CPCK"
constexpr uint32_t kVersion = 1;
constexpr uint32_t kFlagTrainerState = 1u;

uint64_t fnv1a_bytes(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_text(std::string& buf, const std::string& s) {
  put(buf, static_cast<uint32_t>(s.size()));
  buf += s;
}

void put_tensor_payload(std::string& buf, const Tensor& t) {
  buf.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  template <typename T>
  T take() {
    if (pos + sizeof(T) > buf.size()) throw DataError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string take_text() {
    uint32_t n = take<uint32_t>();
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated text block");
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void take_doubles(Tensor& t) {
    size_t bytes = t.data.size() * sizeof(double);
    if (pos + bytes > buf.size()) throw DataError("checkpoint: truncated payload");
    std::memcpy(t.data.data(), buf.data() + pos, bytes);
    pos += bytes;
  }
};
}  // namespace

Checkpoint Checkpoint::from_model(const PoseModel& model, double lambda) {
  Checkpoint c;
  c.dims = model.dims;
  c.strategy = model.strategy;
  c.lambda = lambda;
  c.skeleton_text = model.skeleton.serialize();
  c.params = model.params;
  return c;
}

PoseModel Checkpoint::to_model() const {
  PoseModel m;
  m.dims = dims;
  {
    std::istringstream dummy;  // reuse the skeleton text loader via KvConfig
    KvConfig kc = KvConfig::parse_text(skeleton_text, "<checkpoint skeleton>");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : kc.get_all("edge")) {
      std::istringstream es(e);
      int a, b;
      es >> a >> b;
      edges.emplace_back(a, b);
    }
    std::vector<SkeletonSpec::Hyperedge> hyper;
    for (const auto& h : kc.get_all("hyperedge")) {
      std::istringstream hs(h);
      SkeletonSpec::Hyperedge he;
      hs >> he.name;
      std::string tok;
      while (hs >> tok) {
        if (tok != ":") he.members.push_back(std::stoi(tok));
      }
      hyper.push_back(std::move(he));
    }
    m.skeleton = SkeletonSpec::make(static_cast<int>(kc.get_int("k")), kc.get_tokens("names"),
                                    std::move(edges), std::move(hyper));
  }
  m.strategy = strategy;
  m.params = params;
  return m;
}

void Checkpoint::save(const std::string& path) const {
  std::string buf;
  put(buf, kMagic);
  put(buf, kVersion);
  put(buf, has_trainer_state ? kFlagTrainerState : 0u);

  std::ostringstream meta;
  meta.precision(17);
  meta << "d_in = " << dims.d_in << "\n";
  meta << "k = " << dims.k << "\n";
  meta << "d_emb = " << dims.d_emb << "\n";
  meta << "d_hidden = " << dims.d_hidden << "\n";
  meta << "bins = " << dims.bins << "\n";
  meta << "strategy = " << (strategy.kind == StrategyKind::TopN ? "topn" : "threshold") << "\n";
  meta << "intervention_n = " << strategy.n << "\n";
  meta << "threshold_tau = " << strategy.tau << "\n";
  meta << "lambda = " << lambda << "\n";
  put_text(buf, meta.str());
  put_text(buf, skeleton_text);

  put(buf, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put(buf, static_cast<uint16_t>(name.size()));
    buf += name;
    put(buf, static_cast<uint8_t>(t.rank()));
    for (int d : t.shape) put(buf, static_cast<uint32_t>(d));
  }
  for (const auto& [name, t] : params) put_tensor_payload(buf, t);

  if (has_trainer_state) {
    put(buf, opt_iter);
    put(buf, epochs_done);
    for (const Tensor& t : moment1) put_tensor_payload(buf, t);
    for (const Tensor& t : moment2) put_tensor_payload(buf, t);
  }
  uint64_t checksum = fnv1a_bytes(buf);
  put(buf, checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < sizeof(uint64_t)) throw DataError("checkpoint: file too small");

  std::string body = buf.substr(0, buf.size() - sizeof(uint64_t));
  uint64_t stored;
  std::memcpy(&stored, buf.data() + body.size(), sizeof(uint64_t));
  if (stored != fnv1a_bytes(body)) throw DataError("checkpoint: checksum mismatch: " + path);

  Reader r(body);
  if (r.take<uint32_t>() != kMagic) throw DataError("checkpoint: bad magic: " + path);
  if (r.take<uint32_t>() != kVersion) throw DataError("checkpoint: unknown version");
  uint32_t flags = r.take<uint32_t>();

  Checkpoint c;
  KvConfig meta = KvConfig::parse_text(r.take_text(), path + "#meta");
  c.dims.d_in = static_cast<int>(meta.get_int("d_in"));
  c.dims.k = static_cast<int>(meta.get_int("k"));
  c.dims.d_emb = static_cast<int>(meta.get_int("d_emb"));
  c.dims.d_hidden = static_cast<int>(meta.get_int("d_hidden"));
  c.dims.bins = static_cast<int>(meta.get_int("bins"));
  c.strategy.kind = meta.get_str("strategy") == "topn" ? StrategyKind::TopN : StrategyKind::Threshold;
  c.strategy.n = static_cast<int>(meta.get_int("intervention_n"));
  c.strategy.tau = meta.get_double("threshold_tau");
  c.lambda = meta.get_double("lambda");
  c.skeleton_text = r.take_text();

  uint32_t n_params = r.take<uint32_t>();
  for (uint32_t i = 0; i < n_params; ++i) {
    uint16_t len = r.take<uint16_t>();
    if (r.pos + len > r.buf.size()) throw DataError("checkpoint: truncated name");
    std::string name = r.buf.substr(r.pos, len);
    r.pos += len;
    uint8_t rank = r.take<uint8_t>();
    Shape shape;
    for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.take<uint32_t>()));
    c.params.emplace_back(name, Tensor(shape));
  }
  for (auto& [name, t] : c.params) r.take_doubles(t);

  if (flags & kFlagTrainerState) {
    c.has_trainer_state = true;
    c.opt_iter = r.take<int64_t>();
    c.epochs_done = r.take<int32_t>();
    for (const auto& [name, t] : c.params) {
      c.moment1.emplace_back(Tensor(t.shape));
      r.take_doubles(c.moment1.back());
    }
    for (const auto& [name, t] : c.params) {
      c.moment2.emplace_back(Tensor(t.shape));
      r.take_doubles(c.moment2.back());
    }
  }
  return c;
}

}  // namespace causalpose
