#include "dsam/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dsam/errors.hpp"

namespace dsam::model {
namespace {

constexpr char kMagic[8] = {'D', 'S', 'A', 'M', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& file) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError(file, 0, "truncated checkpoint");
  return v;
}

std::string get_string(std::istream& in, const std::string& file) {
  const std::uint32_t n = get_u32(in, file);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError(file, 0, "truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const nlohmann::json meta = {{"model", ckpt.model},
                               {"frontend", ckpt.frontend},
                               {"speakers", ckpt.speakers},
                               {"norm_stats", {{"mean", ckpt.stats.mean}, {"std", ckpt.stats.stddev}}},
                               {"step", ckpt.step},
                               {"run_config", ckpt.run_config}};
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_string(out, meta.dump());
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (ad::ParamId p = 0; p < ckpt.params.size(); ++p) {
    const ad::Tensor& t = ckpt.params.value(p);
    put_string(out, ckpt.params.name(p));
    put_string(out, ckpt.params.group(p));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    std::vector<float> buf(t.data().begin(), t.data().end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(file);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(file, 0, "not a checkpoint");
  const std::uint32_t version = get_u32(in, file);
  if (version != kCheckpointVersion) {
    throw FormatError(file, 0, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(get_string(in, file));
    ckpt.model = meta.at("model").get<ModelConfig>();
    ckpt.frontend = meta.at("frontend").get<frontend::FrontendConfig>();
    ckpt.speakers = meta.at("speakers").get<std::vector<std::string>>();
    ckpt.stats.mean = meta.at("norm_stats").at("mean").get<decltype(ckpt.stats.mean)>();
    ckpt.stats.stddev = meta.at("norm_stats").at("std").get<decltype(ckpt.stats.stddev)>();
    ckpt.step = meta.at("step").get<std::uint64_t>();
    ckpt.run_config = meta.at("run_config");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file, 0, std::string("bad metadata: ") + e.what());
  }
  const std::uint32_t count = get_u32(in, file);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = get_string(in, file);
    std::string group = get_string(in, file);
    const std::uint32_t rank = get_u32(in, file);
    ad::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get_u32(in, file));
    std::vector<float> buf(ad::element_count(shape));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError(file, 0, "truncated parameter " + name);
    ckpt.params.add(std::move(name), std::move(group), ad::Tensor(shape, std::vector<double>(buf.begin(), buf.end())));
  }
  return ckpt;
}

AcousticModel model_from_checkpoint(const Checkpoint& ckpt) {
  ad::ParameterStore params = ckpt.params;
  return AcousticModel(ckpt.model, std::move(params));
}

}  // namespace dsam::model
