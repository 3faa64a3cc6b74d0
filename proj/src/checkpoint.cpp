#include "qcdr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <sodium.h>

#include "qcdr/errors.hpp"

namespace fs = std::filesystem;

namespace qcdr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::initialized: return "initialized";
    case Stage::pretrained: return "pretrained";
    case Stage::finetuned: return "finetuned";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  if (text == "initialized") return Stage::initialized;
  if (text == "pretrained") return Stage::pretrained;
  if (text == "finetuned") return Stage::finetuned;
  throw DataError("unknown checkpoint stage '" + text + "'");
}

ModelState ModelState::create(const ModelConfig& config, uint64_t seed) {
  torch::manual_seed(seed);
  ModelState state;
  state.model = QueryCdr(config);
  return state;
}

std::string digest_hex(std::string_view bytes, std::size_t hex_chars) {
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  unsigned char hash[crypto_generichash_BYTES];
  crypto_generichash(hash, sizeof(hash), reinterpret_cast<const unsigned char*>(bytes.data()),
                     bytes.size(), nullptr, 0);
  char hex[crypto_generichash_BYTES * 2 + 1];
  sodium_bin2hex(hex, sizeof(hex), hash, sizeof(hash));
  return std::string(hex).substr(0, hex_chars);
}

namespace {

void append_tensor(std::string& out, const std::string& name, const torch::Tensor& tensor) {
  const torch::Tensor t = tensor.detach().to(torch::kCPU, torch::kFloat).contiguous();
  out += "tensor " + name + " f32 " + std::to_string(t.dim());
  for (int64_t d : t.sizes()) out += " " + std::to_string(d);
  out += "\n";
  out.append(reinterpret_cast<const char*>(t.data_ptr<float>()),
             static_cast<std::size_t>(t.numel()) * sizeof(float));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  std::string line() {
    const auto end = data_.find('\n', pos_);
    if (end == std::string::npos) throw DataError("truncated checkpoint");
    std::string out = data_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::string_view bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw DataError("truncated checkpoint payload");
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_checkpoint(const fs::path& path, const ModelState& state) {
  std::string out = "QCDR-CHECKPOINT 1\n";
  out += "stage " + to_string(state.stage) + "\n";
  const std::string config = state.model->config().to_config().to_text();
  out += "config " + std::to_string(config.size()) + "\n" + config;
  for (const auto& item : state.model->named_parameters()) append_tensor(out, item.key(), item.value());
  for (const auto& item : state.model->named_buffers()) append_tensor(out, item.key(), item.value());
  out += "end\n";

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("failed writing checkpoint " + path.string());
  return digest_hex(out);
}

ModelState load_checkpoint(const fs::path& path) {
  const std::string data = read_file(path);
  Reader reader(data);
  if (reader.line() != "QCDR-CHECKPOINT 1") throw DataError(path.string() + " is not a checkpoint");

  std::istringstream stage_line(reader.line());
  std::string key, value;
  stage_line >> key >> value;
  if (key != "stage") throw DataError("checkpoint missing stage marker");
  const Stage stage = parse_stage(value);

  std::istringstream config_line(reader.line());
  std::size_t config_bytes = 0;
  config_line >> key >> config_bytes;
  if (key != "config") throw DataError("checkpoint missing config section");
  const ModelConfig config =
      ModelConfig::from_config(KeyValueConfig::parse(std::string(reader.bytes(config_bytes))));

  std::map<std::string, torch::Tensor> tensors;
  for (;;) {
    const std::string header = reader.line();
    if (header == "end") break;
    std::istringstream in(header);
    std::string tag, name, dtype;
    int64_t ndim = 0;
    in >> tag >> name >> dtype >> ndim;
    if (tag != "tensor" || dtype != "f32" || ndim < 0) throw DataError("bad tensor header: " + header);
    std::vector<int64_t> dims(static_cast<std::size_t>(ndim));
    int64_t numel = 1;
    for (auto& d : dims) {
      in >> d;
      numel *= d;
    }
    const std::string_view payload = reader.bytes(static_cast<std::size_t>(numel) * sizeof(float));
    torch::Tensor t = torch::empty(dims, torch::kFloat);
    std::memcpy(t.data_ptr<float>(), payload.data(), payload.size());
    tensors.emplace(name, t);
  }

  ModelState state;
  state.model = QueryCdr(config);
  state.stage = stage;
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor " + name);
    if (it->second.sizes() != target.sizes()) throw DataError("shape mismatch for tensor " + name);
    target.copy_(it->second);
    tensors.erase(it);
  };
  for (auto& item : state.model->named_parameters()) assign(item.key(), item.value());
  for (auto& item : state.model->named_buffers()) assign(item.key(), item.value());
  if (!tensors.empty()) throw DataError("checkpoint has unknown tensor " + tensors.begin()->first);
  state.checkpoint_id = digest_hex(data);
  return state;
}

void export_queries(const ModelState& state, const fs::path& dir) {
  fs::create_directories(dir);
  const auto queries = state.model->queries()->all();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const torch::Tensor t = queries[i].detach().to(torch::kFloat).contiguous();
    std::ofstream out(dir / ("q" + std::to_string(i + 1) + ".f32"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write query export in " + dir.string());
    out.write("QRY1", 4);
    const auto ndim = static_cast<uint32_t>(t.dim());
    out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
    for (int64_t d : t.sizes()) out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
}

torch::Tensor read_query_file(const fs::path& path) {
  const std::string data = read_file(path);
  if (data.size() < 8 || data.compare(0, 4, "QRY1") != 0) throw DataError("not a query file: " + path.string());
  uint32_t ndim = 0;
  std::memcpy(&ndim, data.data() + 4, sizeof(ndim));
  std::size_t pos = 8;
  std::vector<int64_t> dims(ndim);
  int64_t numel = 1;
  for (auto& d : dims) {
    if (pos + sizeof(int64_t) > data.size()) throw DataError("truncated query file");
    std::memcpy(&d, data.data() + pos, sizeof(d));
    pos += sizeof(d);
    numel *= d;
  }
  if (data.size() - pos != static_cast<std::size_t>(numel) * sizeof(float)) {
    throw DataError("query payload size mismatch in " + path.string());
  }
  torch::Tensor t = torch::empty(dims, torch::kFloat);
  std::memcpy(t.data_ptr<float>(), data.data() + pos, data.size() - pos);
  return t;
}

}  // namespace qcdr
