#include "dsvqa/checkpoint.h"

#include <fstream>
#include <iterator>
#include <map>

#include "dsvqa/tensor_file.h"

namespace dsvqa {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "dsvqa-checkpoint";
constexpr int kVersion = 1;

std::string file_name(const std::string& name) { return "tensors/" + name + ".dvlt"; }

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_index(const fs::path& dir) {
  const auto text = read_bytes(dir / "index.json");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint index is not valid JSON: " + std::string(e.what()));
  }
  if (index.value("format", "") != kFormat || index.value("version", 0) != kVersion) {
    throw FormatError("not a version 1 checkpoint: " + dir.string());
  }
  return index;
}

}  // namespace

std::unique_ptr<QualityModel<float>> build_model(const RunConfig& run, const DataDims& dims) {
  Rng rng(run.seed);
  auto model = std::make_unique<QualityModel<float>>(model_config(run, dims), rng);
  if (!run.trainable) {
    for (auto& [name, p] : model->state().params) p->set_trainable(false);
  }
  return model;
}

void save_checkpoint(const fs::path& dir, const RunConfig& run, const DataDims& dims,
                     QualityModel<float>& model) {
  fs::create_directories(dir / "tensors");
  nlohmann::json tensors = nlohmann::json::array();
  const auto state = model.state();
  auto put = [&](const std::string& name, const Tensor<float>& t, const char* kind) {
    write_tensor(t, dir / file_name(name));
    tensors.push_back({{"name", name}, {"kind", kind}, {"file", file_name(name)},
                       {"shape", t.shape()}});
  };
  for (const auto& [name, p] : state.params) put(name, p->value(), "param");
  for (const auto& [name, b] : state.buffers) put(name, *b, "buffer");
  nlohmann::json index = {
      {"format", kFormat},
      {"version", kVersion},
      {"config", config_to_json(run)},
      {"data", {{"dim", dims.dim}, {"fragment_channels", dims.fragment_channels}}},
      {"tensors", tensors},
  };
  std::ofstream out(dir / "index.json", std::ios::binary);
  out << index.dump(2) << "\n";
  if (!out) throw FormatError("failed writing " + (dir / "index.json").string());
}

LoadedModel load_checkpoint(const fs::path& dir) {
  const auto index = read_index(dir);
  LoadedModel loaded;
  loaded.run = config_from_json(index.at("config"));
  loaded.dims.dim = index.at("data").at("dim").get<std::size_t>();
  loaded.dims.fragment_channels = index.at("data").at("fragment_channels").get<std::size_t>();
  loaded.model = build_model(loaded.run, loaded.dims);

  std::map<std::string, std::string> files;
  for (const auto& t : index.at("tensors")) {
    files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  }
  auto fill = [&](const std::string& name, Tensor<float>& target) {
    auto it = files.find(name);
    if (it == files.end()) throw FormatError("checkpoint is missing tensor " + name);
    auto t = read_tensor_as<float>(dir / it->second);
    if (t.shape() != target.shape()) {
      throw FormatError("checkpoint tensor " + name + " has shape " + shape_str(t.shape()) +
                        ", model expects " + shape_str(target.shape()));
    }
    target = std::move(t);
    files.erase(it);
  };
  auto state = loaded.model->state();
  for (auto& [name, p] : state.params) fill(name, p->value());
  for (auto& [name, b] : state.buffers) fill(name, *b);
  if (!files.empty()) throw FormatError("checkpoint has unexpected tensor " + files.begin()->first);
  return loaded;
}

std::uint64_t checkpoint_digest(const fs::path& dir) {
  const auto index = read_index(dir);
  std::uint64_t h = fnv1a(read_bytes(dir / "index.json"));
  for (const auto& t : index.at("tensors")) {
    h = fnv1a(read_bytes(dir / t.at("file").get<std::string>()), h);
  }
  return h;
}

}  // namespace dsvqa
