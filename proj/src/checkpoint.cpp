#include "autoprog/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "autoprog/errors.hpp"

namespace autoprog {

namespace {

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
  void bytes(const std::string& s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw CheckpointError("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

void put_tensor(Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  w.u8(t.requires_grad() ? 1 : 0);
  for (double v : t.data()) w.f64(v);
}

std::pair<std::string, Tensor> get_tensor(Reader& r) {
  std::string name = r.bytes(r.u32());
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw CheckpointError("corrupt tensor rank in checkpoint");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u64();
    if (d == 0 || d > (std::size_t{1} << 32)) throw CheckpointError("corrupt tensor shape in checkpoint");
    n *= d;
  }
  const bool rg = r.u8() != 0;
  r.need(n * 8);
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64();
  Tensor t(shape, std::move(data));
  t.set_requires_grad(rg);
  return {std::move(name), std::move(t)};
}

std::string header_text(const std::map<std::string, std::string>& h) {
  std::string s;
  for (const auto& [k, v] : h) s += k + " = " + v + "\n";
  return s;
}

std::map<std::string, std::string> parse_header(const std::string& text) {
  std::map<std::string, std::string> h;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw CheckpointError("corrupt checkpoint header");
    h[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return h;
}

}  // namespace

std::map<std::string, std::string> model_header(const ViTConfig& c) {
  return {
      {"model.kind", c.kind == ModelKind::Classifier ? "classifier" : "denoiser"},
      {"model.depth", std::to_string(c.depth)},
      {"model.patch_grid", std::to_string(c.patch_grid)},
      {"model.embed_dim", std::to_string(c.embed_dim)},
      {"model.heads", std::to_string(c.heads)},
      {"model.num_classes", std::to_string(c.num_classes)},
      {"model.patch_size", std::to_string(c.patch_size)},
      {"model.mlp_ratio", std::to_string(c.mlp_ratio)},
      {"model.channels", std::to_string(c.channels)},
      {"model.timesteps", std::to_string(c.timesteps)},
      {"model.sid_stages", std::to_string(c.sid_stages)},
      {"model.learnable_residual", c.learnable_residual ? "true" : "false"},
  };
}

ViTConfig model_from_header(const std::map<std::string, std::string>& h) {
  auto get = [&](const std::string& k) {
    auto it = h.find(k);
    if (it == h.end()) throw CheckpointError("checkpoint header lacks " + k);
    return it->second;
  };
  auto num = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };
  ViTConfig c;
  c.kind = get("model.kind") == "classifier" ? ModelKind::Classifier : ModelKind::Denoiser;
  c.depth = num("model.depth");
  c.patch_grid = num("model.patch_grid");
  c.embed_dim = num("model.embed_dim");
  c.heads = num("model.heads");
  c.num_classes = num("model.num_classes");
  c.patch_size = num("model.patch_size");
  c.mlp_ratio = num("model.mlp_ratio");
  c.channels = num("model.channels");
  c.timesteps = num("model.timesteps");
  c.sid_stages = num("model.sid_stages");
  c.learnable_residual = get("model.learnable_residual") == "true";
  return c;
}

void save_checkpoint(const std::string& path, const VisionTransformer& model,
                     const std::map<std::string, std::string>& header, const std::map<std::string, Tensor>& extra) {
  auto h = header;
  for (auto& [k, v] : model_header(model.config())) h[k] = v;
  Writer w;
  w.bytes("APRG");
  w.u32(kCheckpointVersion);
  const std::string ht = header_text(h);
  w.u32(static_cast<std::uint32_t>(ht.size()));
  w.bytes(ht);
  w.u64(model.params().size() * 4 + extra.size());
  for (const auto& [name, p] : model.params()) {
    put_tensor(w, "param/" + name, p.value);
    put_tensor(w, "opt_m/" + name, p.m);
    put_tensor(w, "opt_v/" + name, p.v);
    put_tensor(w, "opt_steps/" + name, Tensor({1}, static_cast<double>(p.steps)));
  }
  for (const auto& [name, t] : extra) put_tensor(w, "extra/" + name, t);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (r.bytes(4) != "APRG") throw CheckpointError("not a checkpoint (bad magic): " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint ck;
  ck.header = parse_header(r.bytes(r.u32()));
  ck.model = VisionTransformer(model_from_header(ck.header));
  const std::uint64_t count = r.u64();
  std::map<std::string, Tensor> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, t] = get_tensor(r);
    entries.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
  for (auto& [name, t] : entries) {
    if (name.rfind("extra/", 0) == 0) {
      ck.extra.emplace(name.substr(6), std::move(t));
    } else if (name.rfind("param/", 0) == 0) {
      const std::string pn = name.substr(6);
      Parameter p;
      p.value = std::move(t);
      auto slot = [&](const std::string& prefix) {
        auto it = entries.find(prefix + pn);
        if (it == entries.end()) throw CheckpointError("checkpoint lacks " + prefix + pn);
        return it->second;
      };
      p.m = slot("opt_m/");
      p.v = slot("opt_v/");
      p.m.set_requires_grad(false);
      p.v.set_requires_grad(false);
      p.steps = static_cast<std::int64_t>(slot("opt_steps/")[0]);
      ck.model.params().emplace(pn, std::move(p));
    }
  }
  return ck;
}

}  // namespace autoprog
