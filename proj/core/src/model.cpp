#include "petseg/model.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "petseg/unet.hpp"

using nlohmann::json;

namespace petseg {

void ModelConfig::validate() const {
  if (in_channels < 1) {
    throw std::invalid_argument("model config: in_channels must be >= 1");
  }
  if (out_channels != 2) {
    throw std::invalid_argument(
        "model config: out_channels must be 2 (background, lesion)");
  }
  if (n_stages < 2) {
    throw std::invalid_argument("model config: n_stages must be >= 2");
  }
  if (features_per_stage.size() != static_cast<std::size_t>(n_stages) ||
      blocks_per_stage.size() != static_cast<std::size_t>(n_stages)) {
    throw std::invalid_argument(
        "model config: per-stage lists must have n_stages entries");
  }
  for (int s = 0; s < n_stages; ++s) {
    if (features_per_stage[s] < 1 || features_per_stage[s] > kFeatureCap) {
      throw std::invalid_argument("model config: features out of range");
    }
    if (s > 0 && features_per_stage[s] < features_per_stage[s - 1]) {
      throw std::invalid_argument(
          "model config: features_per_stage must be non-decreasing");
    }
    if (blocks_per_stage[s] < 1) {
      throw std::invalid_argument("model config: blocks_per_stage must be >= 1");
    }
  }
  const int divisor = 1 << (n_stages - 1);
  for (int n : {patch_size.nx, patch_size.ny, patch_size.nz}) {
    if (n < divisor || n % divisor != 0) {
      throw std::invalid_argument(
          "model config: patch_size must be divisible by 2^(n_stages-1)");
    }
  }
}

std::int64_t ParamShape::numel() const {
  std::int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

void for_each_parameter(const ModelConfig& config,
                        const std::function<void(const ParamShape&)>& fn) {
  config.validate();
  const auto& f = config.features_per_stage;
  auto emit = [&](std::string name, std::vector<int> dims, ParamKind kind) {
    fn(ParamShape{std::move(name), std::move(dims), kind});
  };
  auto conv_unit = [&](const std::string& prefix, int cin, int cout, int k) {
    emit(prefix + ".w", {cout, cin, k, k, k}, ParamKind::kConvWeight);
    emit(prefix + ".b", {cout}, ParamKind::kBias);
  };
  auto norm_unit = [&](const std::string& prefix, int c) {
    emit(prefix + ".g", {c}, ParamKind::kNormGain);
    emit(prefix + ".b", {c}, ParamKind::kNormBias);
  };

  for (int s = 0; s < config.n_stages; ++s) {
    for (int j = 0; j < config.blocks_per_stage[s]; ++j) {
      const int cin = j > 0           ? f[s]
                      : s == 0        ? config.in_channels
                                      : f[s - 1];
      const int stride = (s > 0 && j == 0) ? 2 : 1;
      const std::string b =
          "enc" + std::to_string(s) + ".b" + std::to_string(j);
      conv_unit(b + ".conv1", cin, f[s], 3);
      norm_unit(b + ".norm1", f[s]);
      conv_unit(b + ".conv2", f[s], f[s], 3);
      norm_unit(b + ".norm2", f[s]);
      if (cin != f[s] || stride != 1) {
        conv_unit(b + ".proj", cin, f[s], 1);
        norm_unit(b + ".projnorm", f[s]);
      }
    }
  }
  for (int d = config.n_stages - 2; d >= 0; --d) {
    const std::string p = "dec" + std::to_string(d);
    emit(p + ".up.w", {f[d + 1], f[d], 2, 2, 2}, ParamKind::kTconvWeight);
    emit(p + ".up.b", {f[d]}, ParamKind::kBias);
    conv_unit(p + ".conv1", 2 * f[d], f[d], 3);
    norm_unit(p + ".norm1", f[d]);
    conv_unit(p + ".conv2", f[d], f[d], 3);
    norm_unit(p + ".norm2", f[d]);
  }
  conv_unit("head", f[0], config.out_channels, 1);
  if (config.deep_supervision) {
    for (int d = 1; d <= config.n_stages - 2; ++d) {
      conv_unit("ds" + std::to_string(d), f[d], config.out_channels, 1);
    }
  }
}

std::vector<ParamShape> parameter_shapes(const ModelConfig& config) {
  std::vector<ParamShape> shapes;
  for_each_parameter(config, [&](const ParamShape& ps) { shapes.push_back(ps); });
  return shapes;
}

std::int64_t parameter_count(const ModelConfig& config) {
  std::int64_t n = 0;
  for_each_parameter(config, [&](const ParamShape& ps) { n += ps.numel(); });
  return n;
}

void CheckpointMeta::validate() const {
  config.validate();
  normalization.validate();
  if (fold_count < 1 || fold_index < 0 || fold_index >= fold_count) {
    throw std::runtime_error("checkpoint: fold_index " +
                             std::to_string(fold_index) + " outside [0," +
                             std::to_string(fold_count) + ")");
  }
  if (strategy_id.empty()) {
    throw std::runtime_error("checkpoint: missing strategy id");
  }
}

namespace {

constexpr char kMagic[8] = {'P', 'E', 'T', 'S', 'G', 'C', 'K', '1'};

json config_to_json(const ModelConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"out_channels", c.out_channels},
              {"n_stages", c.n_stages},
              {"features_per_stage", c.features_per_stage},
              {"blocks_per_stage", c.blocks_per_stage},
              {"patch_size", {c.patch_size.nx, c.patch_size.ny, c.patch_size.nz}},
              {"deep_supervision", c.deep_supervision},
              {"rng_seed", c.rng_seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  c.n_stages = j.at("n_stages").get<int>();
  c.features_per_stage = j.at("features_per_stage").get<std::vector<int>>();
  c.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<int>>();
  const auto p = j.at("patch_size").get<std::vector<int>>();
  if (p.size() != 3) throw std::runtime_error("checkpoint: bad patch_size");
  c.patch_size = Dims3{p[0], p[1], p[2]};
  c.deep_supervision = j.at("deep_supervision").get<bool>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return c;
}

json stats_to_json(const CTNormStats& s) {
  return json{{"mean", s.mean},
              {"std", s.stddev},
              {"clip_low", s.clip_low},
              {"clip_high", s.clip_high},
              {"source_voxel_count", s.source_voxel_count}};
}

CTNormStats stats_from_json(const json& j) {
  CTNormStats s;
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.clip_low = j.at("clip_low").get<double>();
  s.clip_high = j.at("clip_high").get<double>();
  s.source_voxel_count = j.at("source_voxel_count").get<std::int64_t>();
  return s;
}

}  // namespace

void save_checkpoint(const UNet3d<float>& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  if (!(meta.config == net.config())) {
    throw std::runtime_error("checkpoint: meta config differs from network");
  }
  meta.validate();

  json params = json::array();
  for (const auto& p : net.params()) {
    params.push_back(json{{"name", p.name}, {"shape", p.shape}});
  }
  json header = {{"format_version", 1},
                 {"dtype", "float32"},
                 {"config", config_to_json(meta.config)},
                 {"strategy_id", meta.strategy_id},
                 {"fold_index", meta.fold_index},
                 {"fold_count", meta.fold_count},
                 {"params", std::move(params)}};
  json norm = {{"mode", to_string(meta.normalization.mode)},
               {"ct", stats_to_json(*meta.normalization.ct_stats)}};
  if (meta.normalization.pet_stats.has_value()) {
    norm["pet"] = stats_to_json(*meta.normalization.pet_stats);
  }
  header["normalization"] = std::move(norm);

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  }
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& p : net.params()) {
    out.write(reinterpret_cast<const char*>(p.v.data()),
              static_cast<std::streamsize>(p.v.size() * sizeof(float)));
  }
  if (!out) {
    throw std::runtime_error("short write to checkpoint '" + path.string() +
                             "'");
  }
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1ULL << 24)) {
    throw std::runtime_error("corrupt checkpoint header in '" + path.string() +
                             "'");
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    throw std::runtime_error("truncated checkpoint '" + path.string() + "'");
  }

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header in '" + path.string() +
                             "': " + e.what());
  }

  LoadedModel loaded;
  loaded.meta.config = config_from_json(header.at("config"));
  loaded.meta.strategy_id = header.at("strategy_id").get<std::string>();
  loaded.meta.fold_index = header.at("fold_index").get<int>();
  loaded.meta.fold_count = header.at("fold_count").get<int>();
  if (!header.contains("normalization")) {
    throw std::runtime_error("checkpoint '" + path.string() +
                             "' is missing its normalization record");
  }
  const json& norm = header.at("normalization");
  loaded.meta.normalization.mode =
      parse_normalization_mode(norm.at("mode").get<std::string>());
  loaded.meta.normalization.ct_stats = stats_from_json(norm.at("ct"));
  if (norm.contains("pet")) {
    loaded.meta.normalization.pet_stats = stats_from_json(norm.at("pet"));
  }
  loaded.meta.validate();

  loaded.net = std::make_shared<UNet3d<float>>(loaded.meta.config);
  auto& params = loaded.net->params();
  const json& param_table = header.at("params");
  if (param_table.size() != params.size()) {
    throw std::runtime_error("checkpoint '" + path.string() +
                             "': parameter table size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = param_table[i].at("name").get<std::string>();
    const auto shape = param_table[i].at("shape").get<std::vector<int>>();
    if (name != params[i].name || shape != params[i].shape) {
      throw std::runtime_error(
          "checkpoint '" + path.string() + "': parameter '" + name +
          "' does not match the shape implied by the config");
    }
    in.read(reinterpret_cast<char*>(params[i].v.data()),
            static_cast<std::streamsize>(params[i].v.size() * sizeof(float)));
    if (!in) {
      throw std::runtime_error("truncated checkpoint '" + path.string() + "'");
    }
  }
  return loaded;
}

}  // namespace petseg
