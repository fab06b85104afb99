#include "moodval/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "moodval/error.hpp"

namespace moodval {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'A', 'L', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& source) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw IoError(source + ": truncated checkpoint");
  }
  return v;
}

std::string get_string(std::istream& in, std::size_t n, const std::string& source) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError(source + ": truncated checkpoint");
  }
  return s;
}

}  // namespace

std::vector<nn::NamedTensor> state_of(const nn::Module& module) {
  auto state = module.named_parameters();
  for (auto& b : module.named_buffers()) state.push_back(std::move(b));
  return state;
}

void save_checkpoint(const std::filesystem::path& path, const nn::Module& module,
                     const nlohmann::json& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta_text = meta.dump();
    put<std::uint64_t>(out, meta_text.size());
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    const auto state = state_of(module);
    put<std::uint64_t>(out, state.size());
    for (const auto& [name, t] : state) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) put<std::uint64_t>(out, d);
      const auto v = t.values();
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out.flush()) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string source = path.string();
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ValidationError(source + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, source);
  if (version != kCheckpointVersion) {
    throw ValidationError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const auto meta_len = get<std::uint64_t>(in, source);
  ck.meta = nlohmann::json::parse(get_string(in, meta_len, source));
  const auto count = get<std::uint64_t>(in, source);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in, source);
    std::string name = get_string(in, name_len, source);
    const auto rank = get<std::uint32_t>(in, source);
    if (rank > 8) throw ValidationError(source + ": corrupt tensor rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, source);
    std::vector<double> values(shape_numel(shape));
    if (!values.empty() &&
        !in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw IoError(source + ": truncated tensor " + name);
    }
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return ck;
}

void load_state(nn::Module& module, const Checkpoint& checkpoint) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : checkpoint.tensors) stored[name] = &t;
  auto state = state_of(module);
  if (state.size() != stored.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(stored.size()) +
                          " tensors, model expects " + std::to_string(state.size()));
  }
  for (auto& [name, t] : state) {
    auto it = stored.find(name);
    if (it == stored.end()) throw ValidationError("checkpoint lacks tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw ValidationError("tensor '" + name + "' has shape " +
                            shape_string(it->second->shape()) + " in checkpoint, model expects " +
                            shape_string(t.shape()));
    }
    const auto src = it->second->values();
    std::copy(src.begin(), src.end(), t.values().begin());
  }
}

}  // namespace moodval
