#include "easycore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "easycore/error.hpp"

namespace easycore {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[4] = {'E', 'Z', 'C', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.values()) put<double>(out, v);
  }
  return out;
}

std::vector<NamedParameter> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not an EZC1 checkpoint (bad magic)");
  }
  std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedParameter> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name = r.get_string(name_len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.get<double>();
    params.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values), true)});
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes");
  return params;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelConfig infer_model_config(const std::vector<NamedParameter>& params) {
  if (params.size() < 4 || (params.size() % 2) != 0) {
    throw ShapeError("checkpoint does not describe a residual MLP (" + std::to_string(params.size()) +
                     " tensors)");
  }
  const Tensor& in_w = params.front().tensor;
  const Tensor& head_w = params[params.size() - 2].tensor;
  if (in_w.rank() != 2 || head_w.rank() != 2) throw ShapeError("checkpoint weight tensors must be matrices");
  ModelConfig cfg;
  cfg.input_dim = in_w.shape()[0];
  cfg.hidden_dim = in_w.shape()[1];
  cfg.num_blocks = (params.size() - 4) / 2;
  cfg.num_classes = head_w.shape()[1];
  return cfg;
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto params = decode_checkpoint(bytes);
  const ModelConfig cfg = infer_model_config(params);
  if (expected && !(*expected == cfg)) {
    throw ValidationError("checkpoint " + path.string() + " holds model (input " + std::to_string(cfg.input_dim) +
                          ", hidden " + std::to_string(cfg.hidden_dim) + ", blocks " +
                          std::to_string(cfg.num_blocks) + ", classes " + std::to_string(cfg.num_classes) +
                          ") which does not match the configured model");
  }
  return Model(cfg, std::move(params));
}

}  // namespace easycore
