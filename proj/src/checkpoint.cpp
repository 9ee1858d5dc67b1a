#include "mtb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace mtb {

using nlohmann::json;

namespace {

json config_json(const EncoderConfig& c) {
  return json{{"layers", c.layers},
              {"hidden", c.hidden},
              {"heads", c.heads},
              {"ffn_mult", c.ffn_mult},
              {"max_len", c.max_len},
              {"input_variant", to_string(c.input_variant)},
              {"output_variant", to_string(c.output_variant)},
              {"post_layer", to_string(c.post_layer)},
              {"vocab_size", c.vocab_size},
              {"seed", c.seed},
              {"init_std", c.init_std}};
}

EncoderConfig config_from(const json& j) {
  EncoderConfig c;
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_mult = j.at("ffn_mult").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.input_variant = input_variant_from_string(j.at("input_variant").get<std::string>());
  c.output_variant = output_variant_from_string(j.at("output_variant").get<std::string>());
  c.post_layer = post_layer_from_string(j.at("post_layer").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.init_std = j.at("init_std").get<double>();
  c.validate();
  return c;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_floats(std::ostream& out, const Matrix<float>& m) {
  static_assert(std::endian::native == std::endian::little, "tensors.bin is little-endian");
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

}  // namespace

std::string encoder_config_to_json(const EncoderConfig& config) { return config_json(config).dump(); }

EncoderConfig encoder_config_from_json(const std::string& text) { return config_from(json::parse(text)); }

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  std::ofstream bin(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw Error("cannot write " + (dir / "tensors.bin").string());
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Matrix<float>& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    write_floats(bin, m);
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(float);
  };
  ck.params.for_each(add);
  if (ck.head) ck.head->for_each(add);
  bin.close();

  json manifest{{"format", "mtb-checkpoint"},
                {"version", kCheckpointVersion},
                {"dtype", "float32"},
                {"config", config_json(ck.config)},
                {"vocab_hash", hex64(ck.vocab.fingerprint())},
                {"vocab_size", ck.vocab.size()},
                {"step", ck.step},
                {"relation_names", ck.relation_names},
                {"tensors", tensors}};
  if (ck.head) {
    manifest["head"] = {{"num_classes", ck.head->num_classes()},
                        {"nil_index", ck.head->nil_index ? json(*ck.head->nil_index) : json(nullptr)}};
  }
  std::ofstream man(dir / "manifest.json", std::ios::trunc);
  if (!man) throw Error("cannot write " + (dir / "manifest.json").string());
  man << manifest.dump(2) << '\n';
  ck.vocab.save(dir / "vocab.txt");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream man(dir / "manifest.json");
  if (!man) throw Error("cannot read checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(man);
  } catch (const json::exception& e) {
    throw Error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "mtb-checkpoint") throw Error("not an mtb checkpoint: " + dir.string());
  const int version = manifest.value("version", -1);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  }
  if (manifest.value("dtype", "") != "float32") throw Error("unsupported checkpoint dtype");

  Checkpoint ck;
  ck.config = config_from(manifest.at("config"));
  ck.step = manifest.at("step").get<std::int64_t>();
  ck.relation_names = manifest.at("relation_names").get<std::vector<std::string>>();
  ck.vocab = Vocabulary::load(dir / "vocab.txt");
  if (hex64(ck.vocab.fingerprint()) != manifest.at("vocab_hash").get<std::string>()) {
    throw Error("vocab.txt does not match the checkpoint's vocabulary hash");
  }

  // Shapes come from a freshly constructed model; the file must agree.
  ck.params = Encoder<float>(ck.config).params();
  if (manifest.contains("head")) {
    const auto& h = manifest["head"];
    std::optional<int> nil;
    if (!h.at("nil_index").is_null()) nil = h.at("nil_index").get<int>();
    ck.head = ClassifierHead<float>::init(h.at("num_classes").get<int>(), ck.config.rep_dim(), 0, nil);
  }

  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) throw Error("cannot read " + (dir / "tensors.bin").string());
  const auto& entries = manifest.at("tensors");
  std::size_t index = 0;
  auto read = [&](const std::string& name, Matrix<float>& m) {
    if (index >= entries.size()) throw Error("checkpoint is missing tensor " + name);
    const auto& e = entries[index++];
    if (e.at("name").get<std::string>() != name || e.at("rows").get<Eigen::Index>() != m.rows() ||
        e.at("cols").get<Eigen::Index>() != m.cols()) {
      throw Error("checkpoint tensor mismatch at " + name);
    }
    bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!bin) throw Error("tensors.bin truncated at " + name);
  };
  ck.params.for_each(read);
  if (ck.head) ck.head->for_each(read);
  if (index != entries.size()) throw Error("checkpoint has unexpected extra tensors");
  return ck;
}

void check_vocab(const Checkpoint& checkpoint, const Vocabulary& vocab) {
  if (vocab.fingerprint() != checkpoint.vocab.fingerprint()) {
    throw Error("vocabulary does not match checkpoint (hash " + hex64(vocab.fingerprint()) + " vs " +
                hex64(checkpoint.vocab.fingerprint()) + ")");
  }
}

}  // namespace mtb
