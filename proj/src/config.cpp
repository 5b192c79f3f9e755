#include "hrm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hrm {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error(ErrorCode::Config, "bad boolean for '" + key + "': '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "bad integer for '" + key + "': '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "bad number for '" + key + "': '" + v + "'");
  }
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

void RunConfig::set(const std::string& key, const std::string& value) {
  // feature extraction
  if (key == "feature.window_ms") features.window_ms = parse_real(key, value);
  else if (key == "feature.hop_ms") features.hop_ms = parse_real(key, value);
  else if (key == "feature.n_mel") {
    features.n_mel = parse_int(key, value);
    train.model.dims.f_mel = features.n_mel;
  } else if (key == "feature.n_mfcc") {
    features.n_mfcc = parse_int(key, value);
    train.model.dims.c_mfcc = features.n_mfcc;
  }
  // encoder seam
  else if (key == "encoder.kind") {
    require(value == "toy" || value == "external", ErrorCode::Config,
            "encoder.kind must be 'toy' or 'external'");
    encoder_kind = value;
  } else if (key == "encoder.library") encoder_library = value;
  else if (key == "encoder.dim") {
    encoder_dim = parse_int(key, value);
    train.model.dims.d_enc = encoder_dim;
  } else if (key == "encoder.window") encoder_window = parse_int(key, value);
  else if (key == "encoder.hop") encoder_hop = parse_int(key, value);
  else if (key == "encoder.freeze") encoder_freeze = parse_bool(key, value);
  // model
  else if (key == "model.variant") {
    Variant v = variant_from_string(value);
    ModelDims dims = train.model.dims;
    train.model = ModelConfig::for_variant(v, dims);
  } else if (key == "model.ssl") train.model.toggles.ssl = parse_bool(key, value);
  else if (key == "model.sr_emb") train.model.toggles.sr_emb = parse_bool(key, value);
  else if (key == "model.mel") train.model.toggles.mel = parse_bool(key, value);
  else if (key == "model.multi_cnn") train.model.toggles.multi_cnn = parse_bool(key, value);
  else if (key == "model.mfcc") train.model.toggles.mfcc = parse_bool(key, value);
  else if (key == "model.cross_attn") train.model.toggles.cross_attn = parse_bool(key, value);
  else if (key == "model.blstm") train.model.toggles.blstm = parse_bool(key, value);
  else if (key == "model.d_sr") train.model.dims.d_sr = parse_int(key, value);
  else if (key == "model.cnn_channels") train.model.dims.cnn_channels = parse_int(key, value);
  else if (key == "model.attn_heads") train.model.dims.attn_heads = parse_int(key, value);
  else if (key == "model.blstm_hidden") train.model.dims.blstm_hidden = parse_int(key, value);
  // loss
  else if (key == "loss.name") train.loss.name = loss_from_string(value);
  else if (key == "loss.margin_contrastive") train.loss.margin_contrastive = parse_real(key, value);
  else if (key == "loss.margin_rank") train.loss.margin_rank = parse_real(key, value);
  else if (key == "loss.dcq_weight") train.loss.dcq_weight = parse_real(key, value);
  // training
  else if (key == "train.learning_rate") train.learning_rate = parse_real(key, value);
  else if (key == "train.batch_size") train.batch_size = parse_int(key, value);
  else if (key == "train.patience_steps") train.patience_steps = parse_int(key, value);
  else if (key == "train.validate_every") train.validate_every = parse_int(key, value);
  else if (key == "train.weight_decay") train.weight_decay = parse_real(key, value);
  else if (key == "train.max_steps") train.max_steps = parse_int(key, value);
  else if (key == "seed") train.seed = static_cast<uint64_t>(std::stoull(value));
  else if (key == "cv.k") cv_folds = parse_int(key, value);
  else {
    throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
  }
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg = defaults();
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip comments and blanks
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t");
    line = line.substr(a, b - a + 1);
    auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::Config,
            "config line " + std::to_string(n) + ": expected key=value");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  char buf[64];
  auto real = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return std::string(buf);
  };
  out << "feature.window_ms=" << real(features.window_ms) << '\n';
  out << "feature.hop_ms=" << real(features.hop_ms) << '\n';
  out << "feature.n_mel=" << features.n_mel << '\n';
  out << "feature.n_mfcc=" << features.n_mfcc << '\n';
  out << "encoder.kind=" << encoder_kind << '\n';
  out << "encoder.library=" << encoder_library << '\n';
  out << "encoder.dim=" << encoder_dim << '\n';
  out << "encoder.window=" << encoder_window << '\n';
  out << "encoder.hop=" << encoder_hop << '\n';
  out << "encoder.freeze=" << (encoder_freeze ? 1 : 0) << '\n';
  out << "model.variant=" << variant_to_string(train.model.variant) << '\n';
  out << "model.ssl=" << train.model.toggles.ssl << '\n';
  out << "model.sr_emb=" << train.model.toggles.sr_emb << '\n';
  out << "model.mel=" << train.model.toggles.mel << '\n';
  out << "model.multi_cnn=" << train.model.toggles.multi_cnn << '\n';
  out << "model.mfcc=" << train.model.toggles.mfcc << '\n';
  out << "model.cross_attn=" << train.model.toggles.cross_attn << '\n';
  out << "model.blstm=" << train.model.toggles.blstm << '\n';
  out << "model.d_sr=" << train.model.dims.d_sr << '\n';
  out << "model.cnn_channels=" << train.model.dims.cnn_channels << '\n';
  out << "model.attn_heads=" << train.model.dims.attn_heads << '\n';
  out << "model.blstm_hidden=" << train.model.dims.blstm_hidden << '\n';
  out << "loss.name=" << loss_to_string(train.loss.name) << '\n';
  out << "loss.margin_contrastive=" << real(train.loss.margin_contrastive) << '\n';
  out << "loss.margin_rank=" << real(train.loss.margin_rank) << '\n';
  out << "loss.dcq_weight=" << real(train.loss.dcq_weight) << '\n';
  out << "train.learning_rate=" << real(train.learning_rate) << '\n';
  out << "train.batch_size=" << train.batch_size << '\n';
  out << "train.patience_steps=" << train.patience_steps << '\n';
  out << "train.validate_every=" << train.validate_every << '\n';
  out << "train.weight_decay=" << real(train.weight_decay) << '\n';
  out << "train.max_steps=" << train.max_steps << '\n';
  out << "seed=" << train.seed << '\n';
  out << "cv.k=" << cv_folds << '\n';
  return out.str();
}

void RunConfig::write(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write config '" + path + "'");
  out << to_text();
}

std::unique_ptr<FrameEncoder> RunConfig::make_encoder() const {
  if (encoder_kind == "toy") {
    return std::make_unique<ToyEncoder>(encoder_dim, train.seed, encoder_window,
                                        encoder_hop);
  }
  require(!encoder_library.empty(), ErrorCode::Config,
          "encoder.kind=external requires encoder.library");
  return std::make_unique<ExternalEncoderAdapter>(encoder_library);
}

void ablate_component(RunConfig& cfg, const std::string& component) {
  ModelToggles& t = cfg.train.model.toggles;
  if (component == "ssl") t.ssl = false;
  else if (component == "sr_emb") t.sr_emb = false;
  else if (component == "mel") t.mel = false;
  else if (component == "multi_cnn") t.multi_cnn = false;
  else if (component == "mfcc") t.mfcc = false;
  else if (component == "cross_attn") t.cross_attn = false;
  else if (component == "blstm") t.blstm = false;
  else {
    throw Error(ErrorCode::Config, "unknown component '" + component +
                                       "' (expected one of ssl, sr_emb, mel, "
                                       "multi_cnn, mfcc, cross_attn, blstm)");
  }
  cfg.train.model.validate();
}

}  // namespace hrm
