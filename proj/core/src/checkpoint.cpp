#include "span_rl/checkpoint.hpp"

#include <fstream>

#include "span_rl/binary_io.hpp"
#include "span_rl/errors.hpp"

namespace span_rl {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'A', 'N', 'R', 'L', 'C', 'K'};

}  // namespace

void Checkpoint::add_store(const std::string& prefix, const ParamStore& store) {
  for (const auto& e : store.entries()) arrays.push_back({prefix + "." + e.name, e.value});
}

void Checkpoint::load_store(const std::string& prefix, ParamStore& store) const {
  for (auto& e : store.entries()) {
    const std::string want = prefix + "." + e.name;
    const NamedArray* found = nullptr;
    for (const auto& a : arrays) {
      if (a.name == want) {
        found = &a;
        break;
      }
    }
    if (!found) throw IoError("checkpoint has no array '" + want + "'");
    if (!found->value.same_shape(e.value)) {
      throw IoError("checkpoint array '" + want + "' has shape " + shape_string(found->value.shape()) +
                    ", expected " + shape_string(e.value.shape()));
    }
    e.value = found->value;
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof kMagic);
  binary::write<std::uint32_t>(os, kVersion);
  binary::write_string(os, metadata.dump());
  binary::write<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    binary::write_string(os, a.name);
    binary::write<std::uint32_t>(os, static_cast<std::uint32_t>(a.value.rank()));
    for (std::size_t ext : a.value.shape()) binary::write<std::uint64_t>(os, ext);
    binary::write_doubles(os, a.value.data());
  }
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::char_traits<char>::compare(magic, kMagic, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a checkpoint file");
  }
  const auto version = binary::read<std::uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  try {
    ck.metadata = nlohmann::json::parse(binary::read_string(is));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = binary::read<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = binary::read_string(is);
    const auto rank = binary::read<std::uint32_t>(is);
    if (rank > 8) throw IoError("checkpoint array rank too large");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& ext : shape) {
      ext = static_cast<std::size_t>(binary::read<std::uint64_t>(is));
      n *= ext;
    }
    if (n > (std::size_t{1} << 32)) throw IoError("checkpoint array too large");
    std::vector<double> data(n);
    binary::read_doubles(is, data);
    a.value = DenseArray(std::move(shape), std::move(data));
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

}  // namespace span_rl
