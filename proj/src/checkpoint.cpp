#include "isac/checkpoint.hpp"

#include "isac/csv.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace isac::marl {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

const char* kMagic = "isacsim-checkpoint";

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw CheckpointError("checkpoint v1: unknown activation '" + s + "'");
}

std::string exact(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_net(std::ostringstream& out, const char* role, const Mlp<>& net) {
  out << "net " << role << ' ' << activation_name(net.output_activation()) << ' ' << net.layers().size() << '\n';
  for (const auto& l : net.layers()) {
    out << "layer " << l.weights.rows() << ' ' << l.weights.cols() << '\n';
    for (Index i = 0; i < l.weights.size(); ++i) out << (i ? " " : "") << exact(l.weights.reshaped()(i));
    out << '\n';
    for (Index i = 0; i < l.bias.size(); ++i) out << (i ? " " : "") << exact(l.bias(i));
    out << '\n';
  }
}

class Reader {
 public:
  explicit Reader(const std::string& text) : in_(text) {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw CheckpointError(std::string("checkpoint v1: truncated while reading ") + what);
    return w;
  }
  void expect(const char* token) {
    const std::string w = word(token);
    if (w != token) throw CheckpointError("checkpoint v1: expected '" + std::string(token) + "', found '" + w + "'");
  }
  long long integer(const char* what) {
    const std::string w = word(what);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(w, &pos);
      if (pos != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw CheckpointError(std::string("checkpoint v1: bad integer for ") + what);
    }
  }
  Real real(const char* what) {
    const std::string w = word(what);
    char* end = nullptr;
    const Real v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw CheckpointError(std::string("checkpoint v1: bad number for ") + what);
    return v;
  }
  std::string line() {
    std::string l;
    in_ >> std::ws;
    if (!std::getline(in_, l)) throw CheckpointError("checkpoint v1: truncated");
    return l;
  }

 private:
  std::istringstream in_;
};

Mlp<> read_net(Reader& r, const char* role) {
  r.expect("net");
  const std::string got = r.word("network role");
  if (got != role) throw CheckpointError("checkpoint v1: expected network '" + std::string(role) + "', found '" + got + "'");
  const Activation act = parse_activation(r.word("activation"));
  const long long n = r.integer("layer count");
  if (n < 1 || n > 64) throw CheckpointError("checkpoint v1: implausible layer count");
  std::vector<DenseLayer<Real>> layers;
  std::vector<Index> sizes;
  for (long long i = 0; i < n; ++i) {
    r.expect("layer");
    const long long rows = r.integer("rows");
    const long long cols = r.integer("cols");
    if (rows < 1 || cols < 1 || rows * cols > (1LL << 26)) throw CheckpointError("checkpoint v1: implausible layer shape");
    if (!sizes.empty() && sizes.back() != cols) throw CheckpointError("checkpoint v1: inconsistent layer shapes");
    if (sizes.empty()) sizes.push_back(cols);
    sizes.push_back(rows);
    DenseLayer<Real> l{Matrix(rows, cols), Vector(rows)};
    for (Index k = 0; k < l.weights.size(); ++k) l.weights.reshaped()(k) = r.real("weight");
    for (Index k = 0; k < l.bias.size(); ++k) l.bias(k) = r.real("bias");
    layers.push_back(std::move(l));
  }
  Mlp<> net = Mlp<>::zeros(sizes, act);
  net.mutable_layers() = std::move(layers);
  return net;
}

}  // namespace

Checkpoint capture(const std::vector<AgentBundle>& bundles, int episode, const Rng& rng,
                   std::vector<SelectionEntry> selections) {
  Checkpoint ck;
  ck.episode = episode;
  for (const auto& b : bundles) {
    for (Timescale t : {Timescale::Long, Timescale::Short}) {
      const DdpgAgent* a = b.agent(t);
      if (!a) continue;
      ck.networks.push_back({b.name, t, a->actor(), a->critic(), a->target_actor(), a->target_critic()});
    }
  }
  std::ostringstream s;
  s << rng;
  ck.rng_state = s.str();
  ck.selections = std::move(selections);
  return ck;
}

void restore(std::vector<AgentBundle>& bundles, const Checkpoint& ck) {
  std::size_t used = 0;
  for (auto& b : bundles) {
    for (Timescale t : {Timescale::Long, Timescale::Short}) {
      DdpgAgent* a = b.agent(t);
      if (!a) continue;
      const NetworkSet* found = nullptr;
      for (const auto& n : ck.networks)
        if (n.agent == b.name && n.timescale == t) found = &n;
      if (!found) throw CheckpointError("checkpoint has no networks for agent " + b.name + "/" + voi::to_string(t));
      if (!found->actor.same_shape(a->actor()) || !found->critic.same_shape(a->critic()) ||
          !found->target_actor.same_shape(a->target_actor()) || !found->target_critic.same_shape(a->target_critic()))
        throw CheckpointError("checkpoint shapes differ from the configured networks of agent " + b.name);
      a->actor() = found->actor;
      a->critic() = found->critic;
      a->target_actor() = found->target_actor;
      a->target_critic() = found->target_critic;
      ++used;
    }
  }
  if (used != ck.networks.size()) throw CheckpointError("checkpoint holds networks for agents that are not configured");
}

std::string serialize(const Checkpoint& ck) {
  std::ostringstream out;
  out << kMagic << ' ' << ck.version << '\n';
  out << "episode " << ck.episode << '\n';
  out << "networks " << ck.networks.size() << '\n';
  for (const auto& n : ck.networks) {
    out << "agent " << n.agent << ' ' << voi::to_string(n.timescale) << '\n';
    write_net(out, "actor", n.actor);
    write_net(out, "critic", n.critic);
    write_net(out, "target_actor", n.target_actor);
    write_net(out, "target_critic", n.target_critic);
  }
  out << "rng " << ck.rng_state << '\n';
  out << "selections " << ck.selections.size() << '\n';
  for (const auto& s : ck.selections) {
    out << "select " << s.vehicle << ' ' << voi::to_string(s.timescale) << ' ' << s.sources.size();
    for (int id : s.sources) out << ' ' << id;
    out << '\n';
  }
  std::string body = out.str();
  char tail[64];
  std::snprintf(tail, sizeof tail, "checksum %016" PRIx64 "\n", fnv1a(body));
  return body + tail;
}

Checkpoint deserialize(const std::string& text) {
  if (text.rfind(kMagic, 0) != 0) throw CheckpointError("not an isacsim checkpoint");
  const auto pos = text.rfind("checksum ");
  if (pos == std::string::npos) throw CheckpointError("checkpoint v1: truncated (no checksum)");
  const std::string body = text.substr(0, pos);
  std::uint64_t stored = 0;
  if (std::sscanf(text.c_str() + pos, "checksum %" SCNx64, &stored) != 1 || stored != fnv1a(body))
    throw CheckpointError("checkpoint v1: checksum mismatch (file is truncated or corrupt)");

  Reader r(body);
  Checkpoint ck;
  r.expect(kMagic);
  ck.version = static_cast<int>(r.integer("version"));
  if (ck.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
  r.expect("episode");
  ck.episode = static_cast<int>(r.integer("episode"));
  r.expect("networks");
  const long long n = r.integer("network count");
  for (long long i = 0; i < n; ++i) {
    r.expect("agent");
    NetworkSet s;
    s.agent = r.word("agent name");
    const std::string ts = r.word("timescale");
    if (ts != "L" && ts != "S") throw CheckpointError("checkpoint v1: bad timescale '" + ts + "'");
    s.timescale = ts == "L" ? Timescale::Long : Timescale::Short;
    s.actor = read_net(r, "actor");
    s.critic = read_net(r, "critic");
    s.target_actor = read_net(r, "target_actor");
    s.target_critic = read_net(r, "target_critic");
    ck.networks.push_back(std::move(s));
  }
  r.expect("rng");
  ck.rng_state = r.line();
  r.expect("selections");
  const long long m = r.integer("selection count");
  for (long long i = 0; i < m; ++i) {
    r.expect("select");
    SelectionEntry e;
    e.vehicle = static_cast<int>(r.integer("vehicle"));
    e.timescale = r.word("timescale") == "L" ? Timescale::Long : Timescale::Short;
    const long long k = r.integer("source count");
    for (long long j = 0; j < k; ++j) e.sources.push_back(static_cast<int>(r.integer("source")));
    ck.selections.push_back(std::move(e));
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out << serialize(ck);
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

std::string summarize(const Checkpoint& ck) {
  std::ostringstream out;
  out << "checkpoint version " << ck.version << ", episode " << ck.episode << ", " << ck.networks.size()
      << " learners\n";
  auto describe = [&](const char* role, const Mlp<>& net) {
    out << "  " << role << ":";
    for (const auto& l : net.layers()) out << ' ' << l.weights.rows() << 'x' << l.weights.cols();
    Real wn = 0.0, bn = 0.0;
    for (const auto& l : net.layers()) {
      wn += l.weights.squaredNorm();
      bn += l.bias.squaredNorm();
    }
    out << "  |W|=" << fmt(std::sqrt(wn)) << "  |b|=" << fmt(std::sqrt(bn)) << '\n';
  };
  for (const auto& n : ck.networks) {
    out << "agent " << n.agent << " [" << voi::to_string(n.timescale) << "]\n";
    describe("actor", n.actor);
    describe("critic", n.critic);
    describe("target_actor", n.target_actor);
    describe("target_critic", n.target_critic);
  }
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a(ck.rng_state));
  out << "rng state hash " << hash << '\n';
  for (const auto& s : ck.selections) {
    out << "selection vehicle " << s.vehicle << " [" << voi::to_string(s.timescale) << "]:";
    for (int id : s.sources) out << ' ' << id;
    out << '\n';
  }
  return out.str();
}

}  // namespace isac::marl
