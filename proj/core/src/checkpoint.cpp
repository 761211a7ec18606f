#include "curlm/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "curlm/error.hpp"

namespace curlm {
namespace {

constexpr std::array<char, 8> kMagic{'C', 'U', 'R', 'L', 'M', 'C', 'K', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw ParseError("checkpoint truncated in header length");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void write_floats(std::ostream& out, const std::vector<float>& values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> read_floats(std::istream& in, std::size_t n) {
  std::vector<unsigned char> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw ParseError("checkpoint tensor data truncated");
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

nlohmann::json config_to_json(const model::ModelConfig& c) {
  return {{"n_layers", c.n_layers},         {"n_heads", c.n_heads},
          {"hidden", c.hidden},             {"ffn_mult", c.ffn_mult},
          {"vocab_size", c.vocab_size},     {"n_tag_labels", c.n_tag_labels},
          {"max_seq_len", c.max_seq_len},   {"layer_norm_eps", c.layer_norm_eps},
          {"dropout", c.dropout}};
}

model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.n_tag_labels = j.at("n_tag_labels").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

}  // namespace

std::string format_hash(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json header;
  header["format"] = "curlm-checkpoint";
  header["version"] = 1;
  header["model_config"] = config_to_json(ck.params.config);
  header["step"] = ck.step;
  header["tag_vocabulary"] = ck.tag_vocabulary;
  header["tokenizer_hash"] = format_hash(ck.tokenizer_hash);
  auto tensors = nlohmann::json::array();
  for (const auto& t : ck.params.layout.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = std::move(tensors);
  header["has_optimizer"] = ck.optimizer.has_value();
  header["optimizer_step"] = ck.optimizer ? ck.optimizer->step : 0;
  header["train_config"] = nlohmann::json::parse(ck.train_config_json);
  const auto text = header.dump();

  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_floats(out, ck.params.data);
    if (ck.optimizer) {
      write_floats(out, ck.optimizer->m);
      write_floats(out, ck.optimizer->v);
    }
    if (!out) throw IoError("failed while writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError("not a curlm checkpoint: " + path);
  }
  const auto header_len = read_u64(in);
  if (header_len > (std::uint64_t{1} << 30)) throw ParseError("checkpoint header too large");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) throw ParseError("checkpoint header truncated");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.params.config = config_from_json(header.at("model_config"));
    ck.params.layout = model::ParamLayout::build(ck.params.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != ck.params.layout.tensors.size()) throw ParseError("checkpoint tensor list mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& expect = ck.params.layout.tensors[i];
      if (tensors[i].at("name").get<std::string>() != expect.name ||
          tensors[i].at("shape").get<std::vector<int>>() != expect.shape) {
        throw ParseError("checkpoint tensor " + std::to_string(i) + " does not match the model layout");
      }
    }
    ck.step = header.at("step").get<std::int64_t>();
    ck.tag_vocabulary = header.at("tag_vocabulary").get<std::vector<std::string>>();
    ck.tokenizer_hash = std::stoull(header.at("tokenizer_hash").get<std::string>(), nullptr, 16);
    ck.train_config_json = header.value("train_config", nlohmann::json::object()).dump();
    ck.params.data = read_floats(in, ck.params.layout.total);
    if (header.at("has_optimizer").get<bool>()) {
      model::OptimizerState<float> opt;
      opt.step = header.at("optimizer_step").get<std::int64_t>();
      opt.m = read_floats(in, ck.params.layout.total);
      opt.v = read_floats(in, ck.params.layout.total);
      ck.optimizer = std::move(opt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

}  // namespace curlm
