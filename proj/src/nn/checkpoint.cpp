#include "benn/nn/checkpoint.hpp"

#include <map>

#include "benn/bitcore/packed_bit_tensor.hpp"
#include "benn/common/binary_io.hpp"
#include "benn/common/error.hpp"
#include "benn/common/hash.hpp"

namespace benn {
namespace {

constexpr std::string_view kCheckpointMagic = "BENNCKPT";
constexpr std::string_view kPackedMagic = "BENNPACK";
constexpr std::uint32_t kVersion = 1;

std::uint64_t payload_hash(std::span<const std::uint8_t> p) { return fnv1a64(std::as_bytes(p)); }

void write_tensor(ByteWriter& w, const std::string& name, const RealTensor& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.f32s(t.values());
}

std::pair<std::string, RealTensor> read_tensor(ByteReader& r) {
  std::string name = r.str();
  const std::uint32_t rank = r.u32();
  if (rank > 8) r.fail("tensor " + name + " has rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u32();
    n *= d;
  }
  if (n * 4 > r.remaining()) r.fail("tensor " + name + " is truncated");
  std::vector<float> v(n);
  r.f32s(v);
  return {std::move(name), RealTensor(std::move(shape), std::move(v))};
}

std::vector<float> to_vector(std::span<const float> s) { return {s.begin(), s.end()}; }

void assign(RealTensor& dst, const RealTensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw DataError("tensor " + name + ": stored shape " + shape_string(src.shape()) + ", network expects " +
                    shape_string(dst.shape()));
  }
  std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

WeightLayer* weight_layer(Network& net, std::size_t i) { return dynamic_cast<WeightLayer*>(&net.layer(i)); }

}  // namespace

std::vector<std::uint8_t> wrap_container(std::string_view magic, std::uint32_t version,
                                         std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.raw(magic);
  w.u32(version);
  w.u64(payload.size());
  w.u64(payload_hash(payload));
  w.bytes(payload);
  return w.take();
}

std::vector<std::uint8_t> unwrap_container(std::string_view magic, std::uint32_t version,
                                           std::span<const std::uint8_t> bytes, std::string_view what) {
  ByteReader r(bytes, std::string(what));
  if (r.raw(magic.size()) != magic) r.fail("bad magic");
  const std::uint32_t v = r.u32();
  if (v != version) r.fail("unsupported version " + std::to_string(v));
  const std::uint64_t len = r.u64();
  const std::uint64_t hash = r.u64();
  if (len != r.remaining()) r.fail("payload length " + std::to_string(len) + " but " +
                                   std::to_string(r.remaining()) + " bytes follow");
  const auto payload = r.bytes(static_cast<std::size_t>(len));
  if (payload_hash(payload) != hash) r.fail("payload hash mismatch (corrupt file)");
  return {payload.begin(), payload.end()};
}

std::vector<std::uint8_t> save_checkpoint(Network& net) {
  ByteWriter w;
  w.str(net.config().to_text());
  auto state = net.state();
  std::vector<std::pair<std::string, RealTensor>> scales;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    auto* wl = weight_layer(net, i);
    if (!wl || !wl->binary()) continue;
    if (wl->binary()->frozen()) throw UsageError("cannot checkpoint a network loaded from a packed export");
    wl->effective_weights();  // refresh
    scales.emplace_back(std::to_string(i) + ".scale",
                        RealTensor({wl->filters()}, to_vector(wl->binary()->scale())));
  }
  w.u32(static_cast<std::uint32_t>(state.size() + scales.size()));
  for (const auto& [name, t] : state) write_tensor(w, name, *t);
  for (const auto& [name, t] : scales) write_tensor(w, name, t);
  return wrap_container(kCheckpointMagic, kVersion, w.data());
}

Network load_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto payload = unwrap_container(kCheckpointMagic, kVersion, bytes, "checkpoint");
  ByteReader r(payload, "checkpoint");
  Network net(NetworkConfig::parse(r.str()), 0);
  std::map<std::string, RealTensor> stored;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) stored.insert(read_tensor(r));
  if (!r.at_end()) r.fail("trailing bytes");
  for (auto& [name, t] : net.state()) {
    auto it = stored.find(name);
    if (it == stored.end()) throw DataError("checkpoint: missing tensor " + name);
    assign(*t, it->second, name);
  }
  for (auto* p : net.parameters()) ++p->version;
  return net;
}

void save_checkpoint(Network& net, const std::filesystem::path& path) { write_file(path, save_checkpoint(net)); }

Network load_checkpoint_file(const std::filesystem::path& path) { return load_checkpoint(read_file(path)); }

std::vector<std::uint8_t> export_packed(Network& net) {
  if (net.num_layers() == 0) throw UsageError("export: network has no layers");
  ByteWriter w;
  w.str(net.config().to_text());
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    Layer& layer = net.layer(i);
    std::vector<std::pair<std::string, RealTensor*>> floats;
    if (auto* wl = weight_layer(net, i)) {
      if (auto* b = wl->binary()) {
        wl->effective_weights();  // refresh
        w.u8(1);
        write_packed(w, b->packed());
        w.f32s(b->scale());
      } else {
        w.u8(0);
        const auto eff = wl->effective_weights();
        w.f32s(eff);
      }
      if (wl->has_bias()) floats.emplace_back("bias", &wl->bias().value);
    } else {
      w.u8(2);
      for (auto* p : layer.parameters()) floats.emplace_back(p->name, &p->value);
      for (auto& b : layer.buffers()) floats.push_back(b);
    }
    for (const auto& [name, t] : floats) w.f32s(t->values());
  }
  return wrap_container(kPackedMagic, kVersion, w.data());
}

Network load_packed(std::span<const std::uint8_t> bytes) {
  const auto payload = unwrap_container(kPackedMagic, kVersion, bytes, "packed export");
  ByteReader r(payload, "packed export");
  Network net(NetworkConfig::parse(r.str()), 0);
  if (r.u32() != net.num_layers()) r.fail("layer count does not match config");
  auto read_into = [&](RealTensor& t) {
    if (t.size() * 4 > r.remaining()) r.fail("truncated tensor");
    r.f32s(t.values());
  };
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const std::uint8_t tag = r.u8();
    auto* wl = weight_layer(net, i);
    if ((tag == 2) == (wl != nullptr) || (wl && (tag == 1) != (wl->binary() != nullptr))) {
      r.fail("layer " + std::to_string(i) + " record does not match config");
    }
    if (wl) {
      if (tag == 1) {
        PackedBitTensor packed = read_packed(r);
        std::vector<float> scale(wl->filters());
        if (scale.size() * 4 > r.remaining()) r.fail("truncated scales");
        r.f32s(scale);
        wl->binary()->freeze(std::move(packed), std::move(scale));
      } else {
        std::vector<float> eff(wl->filters() * wl->fan_in());
        if (eff.size() * 4 > r.remaining()) r.fail("truncated weights");
        r.f32s(eff);
        wl->freeze_real(std::move(eff));
      }
      if (wl->has_bias()) read_into(wl->bias().value);
    } else {
      Layer& layer = net.layer(i);
      for (auto* p : layer.parameters()) read_into(p->value);
      for (auto& b : layer.buffers()) read_into(*b.second);
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return net;
}

Network load_model_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string_view head(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(8, bytes.size()));
  if (head == kPackedMagic) return load_packed(bytes);
  return load_checkpoint(bytes);
}

}  // namespace benn
