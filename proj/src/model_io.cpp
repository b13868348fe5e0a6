#include <fstream>

#include "mlcvqa/binary_io.hpp"
#include "mlcvqa/model.hpp"

namespace mlcvqa {
namespace {

constexpr char kMagic[4] = {'M', 'L', 'Q', 'M'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

void save_model(const QualityModel<double>& model, const std::filesystem::path& path) {
  if (!model.all_finite()) throw InvalidArgument("refusing to save a model with non-finite parameters");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  binary::put<std::uint16_t>(out, kVersion);
  binary::put<std::uint16_t>(out, 0);
  const auto& c = model.config;
  for (auto v : {c.input_dim, c.proj_dim, c.kernel, c.n_conv_layers, c.mlp_hidden}) {
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(model.parameter_count()));
  model.for_each_tensor([&](const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) binary::put<float>(out, static_cast<float>(t.data()[i]));
  });
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

QualityModel<double> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string where = path.string() + ": ";
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw ParseError(where + "not a model checkpoint (magic mismatch)");
  }
  const auto version = binary::get<std::uint16_t>(in, where + "version");
  if (version != kVersion) throw ParseError(where + "unsupported version " + std::to_string(version));
  binary::get<std::uint16_t>(in, where + "flags");
  ModelConfig cfg;
  for (Eigen::Index* field : {&cfg.input_dim, &cfg.proj_dim, &cfg.kernel, &cfg.n_conv_layers, &cfg.mlp_hidden}) {
    *field = binary::get<std::uint32_t>(in, where + "config");
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(where + e.what());
  }
  auto model = QualityModel<double>::zeros(cfg);
  const auto count = binary::get<std::uint64_t>(in, where + "parameter count");
  if (count != static_cast<std::uint64_t>(model.parameter_count())) {
    throw ParseError(where + "parameter count " + std::to_string(count) + " does not match config");
  }
  model.for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = binary::get<float>(in, where + "parameters");
  });
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(where + "trailing bytes after parameters");
  if (!model.all_finite()) throw ParseError(where + "non-finite parameters");
  return model;
}

}  // namespace mlcvqa
