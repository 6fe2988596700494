#include "avdet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "avdet/errors.hpp"

namespace avdet {

using ordered_json = nlohmann::ordered_json;

namespace {
constexpr char kMagic[4] = {'A', 'V', 'D', 'K'};
}

void save_checkpoint(
    const std::string& path, const ordered_json& meta,
    const std::vector<std::pair<std::string, const std::vector<double>*>>& arrays) {
  ordered_json header = meta;
  ordered_json arr_list = ordered_json::array();
  for (const auto& [name, vec] : arrays)
    arr_list.push_back(ordered_json{{"name", name}, {"size", vec->size()}});
  header["arrays"] = arr_list;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), errc::io, "save_checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  std::vector<float> buf;
  for (const auto& [name, vec] : arrays) {
    buf.resize(vec->size());
    for (std::size_t i = 0; i < vec->size(); ++i) buf[i] = static_cast<float>((*vec)[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  require(out.good(), errc::io, "save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::missing_file, "load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, errc::io,
          "load_checkpoint: bad magic in " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string header_str(len, '\0');
  in.read(header_str.data(), len);
  require(in.good(), errc::io, "load_checkpoint: truncated header in " + path);

  LoadedCheckpoint ck;
  try {
    ck.meta = ordered_json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_json, std::string("checkpoint header: ") + e.what());
  }
  std::vector<float> buf;
  for (const auto& entry : ck.meta.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::size_t size = entry.at("size").get<std::size_t>();
    buf.resize(size);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(size * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(size * sizeof(float)), errc::io,
            "load_checkpoint: truncated array " + name);
    std::vector<double> vec(size);
    for (std::size_t i = 0; i < size; ++i) vec[i] = buf[i];
    ck.arrays.emplace_back(name, std::move(vec));
  }
  return ck;
}

const std::vector<double>& LoadedCheckpoint::find(const std::string& name) const {
  for (const auto& [n, v] : arrays)
    if (n == name) return v;
  fail(errc::io, "checkpoint missing array " + name);
}

}  // namespace avdet
