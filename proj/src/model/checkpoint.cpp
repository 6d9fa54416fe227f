#include "fairseg/checkpoint.hpp"

#include <map>

#include "fairseg/binary_io.hpp"
#include "fairseg/error.hpp"

namespace fairseg {

namespace {

constexpr std::string_view kMagic = "FCLK";
constexpr std::uint16_t kVersion = 1;

struct Block {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

using BlockMap = std::map<std::string, Block>;

void put_block(io::Writer& w, const std::string& name, const std::vector<std::uint32_t>& dims,
               const double* data, std::size_t n) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) w.put<std::uint32_t>(d);
  for (std::size_t i = 0; i < n; ++i) w.put<double>(data[i]);
}

std::vector<std::pair<std::string, Block>> model_blocks(const std::string& prefix,
                                                        const ModelParams& p) {
  std::vector<std::pair<std::string, Block>> out;
  for (const auto& b : p.to_blocks()) {
    Block blk;
    for (auto d : b.shape) blk.dims.push_back(static_cast<std::uint32_t>(d));
    blk.values = b.values;
    out.emplace_back(prefix + b.name, std::move(blk));
  }
  return out;
}

const Block& need(const BlockMap& blocks, const std::string& name) {
  const auto it = blocks.find(name);
  if (it == blocks.end()) fail(ErrorKind::Format, "checkpoint is missing block '" + name + "'");
  return it->second;
}

ModelParams model_from(const BlockMap& blocks, const std::string& prefix,
                       const ModelConfig& config) {
  // Head height comes from the stored head block.
  const Block& head = need(blocks, prefix + "head.weight");
  if (head.dims.size() != 2) fail(ErrorKind::Format, "head block must be rank 2");
  ModelParams p = init_model(config, std::max<std::uint32_t>(head.dims[0], 1), 0);
  if (head.dims[0] == 0) fail(ErrorKind::Format, "empty head in checkpoint");
  ParamSet set = p.to_blocks();
  for (auto& b : set) {
    const Block& src = need(blocks, prefix + b.name);
    std::vector<std::uint32_t> want;
    for (auto d : b.shape) want.push_back(static_cast<std::uint32_t>(d));
    if (src.dims != want) fail(ErrorKind::Format, "shape mismatch for block '" + prefix + b.name + "'");
    b.values = src.values;
  }
  p.assign_blocks(set);
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainerState& s) {
  std::vector<std::pair<std::string, Block>> blocks;
  const auto& cfg = s.params.config;
  Block mc{{static_cast<std::uint32_t>(2 + cfg.hidden.size())}, {}};
  mc.values.push_back(static_cast<double>(cfg.patch_size));
  mc.values.push_back(static_cast<double>(cfg.feature_dim));
  for (auto h : cfg.hidden) mc.values.push_back(static_cast<double>(h));
  blocks.emplace_back("model.config", std::move(mc));

  for (auto& b : model_blocks("model/", s.params)) blocks.push_back(std::move(b));
  for (auto& b : model_blocks("velocity/", s.velocity)) blocks.push_back(std::move(b));
  if (s.previous)
    for (auto& b : model_blocks("previous/", *s.previous)) blocks.push_back(std::move(b));

  const std::size_t dim = s.protos.dim();
  Block ids{{static_cast<std::uint32_t>(s.protos.entries().size()), 3}, {}};
  Block vecs{{static_cast<std::uint32_t>(s.protos.entries().size()),
              static_cast<std::uint32_t>(dim)},
             {}};
  for (const auto& [cls, p] : s.protos.entries()) {
    ids.values.insert(ids.values.end(),
                      {static_cast<double>(cls), p.frozen ? 1.0 : 0.0, p.initialized ? 1.0 : 0.0});
    vecs.values.insert(vecs.values.end(), p.vector.begin(), p.vector.end());
  }
  blocks.emplace_back("proto.ids", std::move(ids));
  blocks.emplace_back("proto.vectors", std::move(vecs));

  blocks.emplace_back("bank.shape",
                      Block{{2}, {static_cast<double>(s.bank.dim()),
                                  static_cast<double>(s.bank.capacity())}});
  for (auto cls : s.bank.classes()) {
    const auto* q = s.bank.queue(cls);
    Block b{{static_cast<std::uint32_t>(q->size()), static_cast<std::uint32_t>(s.bank.dim())}, {}};
    for (const auto& f : *q) b.values.insert(b.values.end(), f.begin(), f.end());
    blocks.emplace_back("bank/" + std::to_string(cls), std::move(b));
  }

  Block counts{{static_cast<std::uint32_t>(s.distribution.pixel_counts.size()), 2}, {}};
  for (const auto& [cls, n] : s.distribution.pixel_counts)
    counts.values.insert(counts.values.end(), {static_cast<double>(cls), static_cast<double>(n)});
  blocks.emplace_back("class_counts", std::move(counts));
  blocks.emplace_back("class_weighting", Block{{3},
                                               {s.distribution.smoothing, s.distribution.w_min,
                                                s.distribution.w_max}});

  io::Writer w;
  w.put_bytes(kMagic);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(Rng::kAlgorithmId);
  w.put<std::uint64_t>(s.rng.state());
  w.put<std::uint64_t>(s.rng.increment());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.step));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.epoch));
  w.put<std::uint64_t>(s.iteration);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.registry.size()));
  for (const auto& step : s.registry) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(step.size()));
    for (auto c : step) w.put<std::uint16_t>(c);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, b] : blocks) put_block(w, name, b.dims, b.values.data(), b.values.size());
  return w.take();
}

TrainerState decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  if (r.get_bytes(4, "magic") != kMagic)
    throw Error(ErrorKind::Format, "bad magic, expected \"FCLK\"", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version), 4);
  const auto algo = r.get<std::uint32_t>("rng algorithm");
  if (algo != Rng::kAlgorithmId)
    throw Error(ErrorKind::Format, "checkpoint written with a different PRNG", 6);

  TrainerState s;
  const auto rng_state = r.get<std::uint64_t>("rng state");
  const auto rng_inc = r.get<std::uint64_t>("rng increment");
  s.rng = Rng::from_raw(rng_state, rng_inc);
  s.step = r.get<std::uint32_t>("step");
  s.epoch = r.get<std::uint32_t>("epoch");
  s.iteration = r.get<std::uint64_t>("iteration");
  const auto nsteps = r.get<std::uint32_t>("registry");
  for (std::uint32_t t = 0; t < nsteps; ++t) {
    const auto n = r.get<std::uint32_t>("registry step");
    r.need(std::size_t{n} * 2, "registry ids");
    std::vector<std::uint16_t> ids(n);
    for (auto& c : ids) c = r.get<std::uint16_t>("registry id");
    s.registry.push_back(std::move(ids));
  }

  BlockMap blocks;
  const auto nblocks = r.get<std::uint32_t>("block count");
  for (std::uint32_t b = 0; b < nblocks; ++b) {
    const auto len = r.get<std::uint32_t>("block name length");
    std::string name = r.get_bytes(len, "block name");
    const auto rank = r.get<std::uint8_t>("block rank");
    Block blk;
    std::uint64_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      blk.dims.push_back(r.get<std::uint32_t>("block dim"));
      n *= blk.dims.back();
    }
    if (n * 8 > r.remaining())
      throw Error(ErrorKind::Format, "block '" + name + "' payload exceeds file", r.position());
    blk.values.resize(n);
    for (auto& v : blk.values) v = r.get<double>("block payload");
    if (!blocks.emplace(name, std::move(blk)).second)
      throw Error(ErrorKind::Format, "duplicate block '" + name + "'", r.position());
  }
  if (r.remaining() != 0) throw Error(ErrorKind::Format, "trailing bytes", r.position());

  const Block& mc = need(blocks, "model.config");
  if (mc.values.size() < 2) fail(ErrorKind::Format, "bad model.config block");
  ModelConfig config;
  config.patch_size = static_cast<std::size_t>(mc.values[0]);
  config.feature_dim = static_cast<std::size_t>(mc.values[1]);
  config.hidden.clear();
  for (std::size_t i = 2; i < mc.values.size(); ++i)
    config.hidden.push_back(static_cast<std::size_t>(mc.values[i]));
  try {
    config.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("invalid model config: ") + e.what());
  }

  s.params = model_from(blocks, "model/", config);
  s.velocity = model_from(blocks, "velocity/", config);
  if (s.velocity.num_outputs() != s.params.num_outputs())
    fail(ErrorKind::Format, "velocity and model head sizes differ");
  if (blocks.count("previous/head.weight")) s.previous = model_from(blocks, "previous/", config);

  const std::size_t dim = config.feature_dim;
  s.protos = PrototypeBank(dim);
  const Block& ids = need(blocks, "proto.ids");
  const Block& vecs = need(blocks, "proto.vectors");
  if (ids.dims.size() != 2 || ids.dims[1] != 3 || vecs.dims.size() != 2 ||
      vecs.dims[0] != ids.dims[0] || vecs.dims[1] != dim)
    fail(ErrorKind::Format, "prototype blocks have inconsistent shapes");
  for (std::uint32_t i = 0; i < ids.dims[0]; ++i) {
    Prototype p;
    p.frozen = ids.values[i * 3 + 1] != 0.0;
    p.initialized = ids.values[i * 3 + 2] != 0.0;
    p.vector.assign(vecs.values.begin() + i * dim, vecs.values.begin() + (i + 1) * dim);
    s.protos.restore(static_cast<std::uint16_t>(ids.values[i * 3]), std::move(p));
  }

  const Block& bshape = need(blocks, "bank.shape");
  if (bshape.values.size() != 2 || bshape.values[0] != static_cast<double>(dim) ||
      bshape.values[1] < 1)
    fail(ErrorKind::Format, "bad bank.shape block");
  s.bank = FeatureBank(dim, static_cast<std::size_t>(bshape.values[1]));
  for (const auto& [name, blk] : blocks) {
    if (name.rfind("bank/", 0) != 0) continue;
    if (blk.dims.size() != 2 || blk.dims[1] != dim)
      fail(ErrorKind::Format, "bad feature bank block '" + name + "'");
    const auto cls = static_cast<std::uint16_t>(std::stoul(name.substr(5)));
    for (std::uint32_t i = 0; i < blk.dims[0]; ++i)
      s.bank.deposit(cls, std::span<const double>(blk.values.data() + i * dim, dim));
  }

  const Block& counts = need(blocks, "class_counts");
  if (counts.dims.size() != 2 || counts.dims[1] != 2)
    fail(ErrorKind::Format, "bad class_counts block");
  for (std::uint32_t i = 0; i < counts.dims[0]; ++i)
    s.distribution.pixel_counts[static_cast<std::uint16_t>(counts.values[2 * i])] =
        static_cast<std::uint64_t>(counts.values[2 * i + 1]);
  const Block& cw = need(blocks, "class_weighting");
  if (cw.values.size() != 3) fail(ErrorKind::Format, "bad class_weighting block");
  s.distribution.smoothing = cw.values[0];
  s.distribution.w_min = cw.values[1];
  s.distribution.w_max = cw.values[2];
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state) {
  io::write_file(path.string(), encode_checkpoint(state));
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path.string()));
}

}  // namespace fairseg
