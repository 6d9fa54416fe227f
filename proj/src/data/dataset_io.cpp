#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fairseg/binary_io.hpp"
#include "fairseg/dataset.hpp"

namespace fairseg {

namespace io {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

}  // namespace io

namespace {
constexpr std::string_view kMagic = "FCLS";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  io::Writer w;
  w.put_bytes(kMagic);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint16_t>(data.num_classes);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.samples.size()));
  for (const auto& s : data.samples) {
    require(s.image.channels() == 3 && s.image.height() == s.labels.height &&
                s.image.width() == s.labels.width,
            ErrorKind::Dimension, "sample image and label shapes disagree");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.image.height()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.image.width()));
    for (double v : s.image.values()) w.put<float>(static_cast<float>(v));
    for (std::uint16_t l : s.labels.data) w.put<std::uint16_t>(l);
  }
  return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  const std::string magic = r.get_bytes(4, "magic");
  if (magic != kMagic)
    throw Error(ErrorKind::Format, "bad magic, expected \"FCLS\"", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw Error(ErrorKind::Format,
                "unsupported dataset version " + std::to_string(version) + ", expected 1", 4);
  Dataset data;
  data.num_classes = r.get<std::uint16_t>("num_classes");
  const auto count = r.get<std::uint32_t>("count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.position();
    const auto h = r.get<std::uint32_t>("height");
    const auto w = r.get<std::uint32_t>("width");
    const std::uint64_t px = std::uint64_t{h} * w;
    if (h == 0 || w == 0 || px * 14 > r.remaining())
      throw Error(ErrorKind::Format,
                  "sample " + std::to_string(i) + " header " + std::to_string(h) + "x" +
                      std::to_string(w) + "x3 inconsistent with payload length",
                  at);
    SegSample s{Grid(h, w, 3), LabelMap(h, w)};
    for (double& v : s.image.values()) v = r.get<float>("image");
    for (auto& l : s.labels.data) {
      l = r.get<std::uint16_t>("labels");
      if (l != kIgnoreLabel && l > data.num_classes)
        throw Error(ErrorKind::Format, "label " + std::to_string(l) + " exceeds num_classes",
                    r.position() - 2);
    }
    data.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::Format, "trailing bytes after last sample", r.position());
  return data;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  io::write_file(path.string(), encode_dataset(data));
}

Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path.string()));
}

void write_manifest(const std::filesystem::path& path, const BenchmarkSpec& spec) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "format=FCLS\nversion=1\n";
  out << "num_classes=" << spec.num_classes << "\n";
  out << "height=" << spec.height << "\nwidth=" << spec.width << "\n";
  out << "class_frequencies=";
  for (std::size_t c = 0; c < spec.class_frequencies.size(); ++c)
    out << (c ? "," : "") << spec.class_frequencies[c];
  out << "\n";
  const auto palette = spec.resolved_palette();
  for (std::size_t c = 0; c < palette.size(); ++c)
    out << "class." << c + 1 << "=" << to_string(palette[c].shape) << "," << palette[c].color[0]
        << "," << palette[c].color[1] << "," << palette[c].color[2] << "\n";
  out << "background_color=" << spec.background_color[0] << "," << spec.background_color[1]
      << "," << spec.background_color[2] << "\n";
  out << "color_jitter=" << spec.color_jitter << "\n";
  out << "noise_sigma=" << spec.noise_sigma << "\n";
  out << "train_count=" << spec.train_count << "\ntest_count=" << spec.test_count << "\n";
  out << "seed=" << spec.seed << "\n";
  std::ofstream file(path, std::ios::trunc);
  if (!file) fail(ErrorKind::Io, "cannot write " + path.string());
  file << out.str();
}

}  // namespace fairseg
