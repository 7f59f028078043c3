#include "ynet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ynet/errors.hpp"

namespace ynet {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s, const std::string& field) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw FormatError("checkpoint config: bad integer list in field " + field);
    }
  }
  if (out.empty()) throw FormatError("checkpoint config: empty list in field " + field);
  return out;
}

void write_u16(std::ostream& s, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  s.write(reinterpret_cast<char*>(b), 2);
}

void write_u32(std::ostream& s, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  s.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& s, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  s.write(reinterpret_cast<char*>(b), 8);
}

uint64_t read_uint(std::istream& s, int bytes, const char* what) {
  unsigned char b[8];
  if (!s.read(reinterpret_cast<char*>(b), bytes))
    throw FormatError(std::string("checkpoint truncated while reading ") + what);
  uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream ss;
  ss << "arch=" << arch_name(cfg.architecture) << "\n"
     << "base_channels=" << cfg.base_channels << "\n"
     << "depth=" << cfg.depth << "\n"
     << "enc_dilations=" << join_ints(cfg.encoder_dilations) << "\n"
     << "dropout=" << cfg.dropout << "\n"
     << "hardtanh_lo=" << cfg.hardtanh_lo << "\n"
     << "hardtanh_hi=" << cfg.hardtanh_hi << "\n"
     << "freq_bins=" << cfg.freq_bins << "\n"
     << "time_bins=" << cfg.time_bins << "\n"
     << "window_samples=" << cfg.window_samples << "\n"
     << "stft_window=" << cfg.stft_window << "\n"
     << "stft_hop=" << cfg.stft_hop << "\n"
     << "fb_kernel_len=" << cfg.filterbank.kernel_len << "\n"
     << "fb_dilations=" << join_ints(cfg.filterbank.dilation_rates) << "\n"
     << "fb_kernels=" << join_ints(cfg.filterbank.kernels_per_group) << "\n"
     << "fb_stride=" << cfg.filterbank.stride << "\n"
     << "fb_frames=" << cfg.filterbank.target_frames << "\n"
     << "fb_leaky=" << cfg.filterbank.leaky_slope << "\n";
  return ss.str();
}

ModelConfig config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("checkpoint config: malformed line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint config: missing field " + key);
    return it->second;
  };
  auto get_int = [&](const std::string& key) {
    try {
      return std::stoi(get(key));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception&) {
      throw FormatError("checkpoint config: bad integer in field " + key);
    }
  };
  auto get_double = [&](const std::string& key) {
    try {
      return std::stod(get(key));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception&) {
      throw FormatError("checkpoint config: bad number in field " + key);
    }
  };

  ModelConfig cfg;
  try {
    cfg.architecture = parse_arch(get("arch"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: field arch: ") + e.what());
  }
  cfg.base_channels = get_int("base_channels");
  cfg.depth = get_int("depth");
  cfg.encoder_dilations = split_ints(get("enc_dilations"), "enc_dilations");
  cfg.dropout = get_double("dropout");
  cfg.hardtanh_lo = get_double("hardtanh_lo");
  cfg.hardtanh_hi = get_double("hardtanh_hi");
  cfg.freq_bins = get_int("freq_bins");
  cfg.time_bins = get_int("time_bins");
  cfg.window_samples = get_int("window_samples");
  cfg.stft_window = get_int("stft_window");
  cfg.stft_hop = get_int("stft_hop");
  cfg.filterbank.kernel_len = get_int("fb_kernel_len");
  cfg.filterbank.dilation_rates = split_ints(get("fb_dilations"), "fb_dilations");
  cfg.filterbank.kernels_per_group = split_ints(get("fb_kernels"), "fb_kernels");
  cfg.filterbank.stride = get_int("fb_stride");
  cfg.filterbank.target_frames = get_int("fb_frames");
  cfg.filterbank.leaky_slope = get_double("fb_leaky");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + tmp);
    f.write("YNET", 4);
    write_u32(f, 1);
    const std::string cfg_text = config_to_text(ckpt.config);
    write_u32(f, static_cast<uint32_t>(cfg_text.size()));
    f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    const auto specs = parameter_specs(ckpt.config);
    write_u32(f, static_cast<uint32_t>(specs.size()));
    ModelParams<float>& params = const_cast<ModelParams<float>&>(ckpt.params);
    sync_running_stats(params);
    for (const auto& spec : specs) {
      const Tensor<float>& t = params.at(spec.name);
      write_u16(f, static_cast<uint16_t>(spec.name.size()));
      f.write(spec.name.data(), static_cast<std::streamsize>(spec.name.size()));
      f.put(static_cast<char>(t.rank()));
      for (int i = 0; i < t.rank(); ++i) write_u64(f, static_cast<uint64_t>(t.dim(i)));
      f.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    write_u64(f, ckpt.step);
    if (!f) throw IoError("failed writing checkpoint: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "YNET", 4) != 0)
    throw FormatError("checkpoint has bad magic: " + path);
  const uint32_t version = static_cast<uint32_t>(read_uint(f, 4, "version"));
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const uint32_t cfg_len = static_cast<uint32_t>(read_uint(f, 4, "config length"));
  std::string cfg_text(cfg_len, '\0');
  if (cfg_len > 0 && !f.read(cfg_text.data(), cfg_len))
    throw FormatError("checkpoint truncated in config blob: " + path);

  Checkpoint ckpt;
  ckpt.config = config_from_text(cfg_text);
  const auto specs = parameter_specs(ckpt.config);
  std::map<std::string, std::vector<int>> expected;
  for (const auto& s : specs) expected[s.name] = s.shape;

  const uint32_t count = static_cast<uint32_t>(read_uint(f, 4, "tensor count"));
  if (count != specs.size())
    throw FormatError("checkpoint tensor count " + std::to_string(count) + " does not match " +
                      std::to_string(specs.size()) + " expected for " +
                      arch_name(ckpt.config.architecture));
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = static_cast<uint16_t>(read_uint(f, 2, "tensor name length"));
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len))
      throw FormatError("checkpoint truncated in tensor name: " + path);
    auto it = expected.find(name);
    if (it == expected.end())
      throw FormatError("checkpoint has unknown tensor name: " + name);
    const int rank = static_cast<int>(read_uint(f, 1, "tensor rank"));
    std::vector<int> dims(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d)
      dims[static_cast<size_t>(d)] = static_cast<int>(read_uint(f, 8, "tensor dim"));
    if (dims != it->second)
      throw FormatError("checkpoint tensor " + name + " has shape " +
                        detail::shape_str(dims) + ", expected " +
                        detail::shape_str(it->second));
    int64_t numel = 1;
    for (int d : dims) numel *= d;
    std::vector<float> data(static_cast<size_t>(numel));
    if (!f.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float))))
      throw FormatError("checkpoint truncated in tensor data of " + name);
    expected.erase(it);
    const bool learnable = [&] {
      for (const auto& s : specs)
        if (s.name == name) return s.learnable;
      return true;
    }();
    ckpt.params.tensors.emplace(name, Tensor<float>(dims, std::move(data), learnable));
  }
  if (!expected.empty())
    throw FormatError("checkpoint missing tensor: " + expected.begin()->first);
  ckpt.step = read_uint(f, 8, "step count");

  for (const auto& [name, t] : ckpt.params.tensors) {
    if (name.size() > 13 && name.compare(name.size() - 13, 13, ".running_mean") == 0) {
      const std::string prefix = name.substr(0, name.size() - 13);
      auto& state = ckpt.params.bn_stats[prefix];
      state.running_mean = t.values();
      state.running_var = ckpt.params.tensors.at(prefix + ".running_var").values();
      state.initialized = true;
    }
  }
  return ckpt;
}

}  // namespace ynet
