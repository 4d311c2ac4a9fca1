#include "narstar/checkpoint.hpp"

#include "narstar/binary_io.hpp"

namespace narstar {

namespace {
constexpr std::string_view kCheckpointMagic = "NSTRCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore& parameters,
                     const nlohmann::json& metadata) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(metadata.dump());
  const auto params = parameters.all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.string(p->name);
    w.u64(p->value.rows);
    w.u64(p->value.cols);
    for (double x : p->value.data) w.f64(x);
  }
  w.seal();
  write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file(path), path.string());
  r.verify_seal();
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) r.fail("not a checkpoint file");
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(r.string());
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad metadata: ") + e.what());
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.string();
    const auto rows = r.u64();
    const auto cols = r.u64();
    auto& p = ckpt.parameters.add(name, rows, cols);
    for (auto& x : p.value.data) x = r.f64();
  }
  if (!r.at_end()) r.fail("trailing bytes after parameters");
  return ckpt;
}

}  // namespace narstar
