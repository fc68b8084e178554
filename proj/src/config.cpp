// Copyright 2026 The storec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "storec/config.hpp"

#include <climits>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace storec::cli {
namespace {

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

long long parse_ll(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + ": expected an integer, got '" +
                      value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("config: " + key + ": trailing characters in '" + value +
                      "'");
  }
  return out;
}

struct FieldDef {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

FieldDef int_field(const std::string& key, int RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v) {
            const long long x = parse_ll(key, v);
            if (x < INT_MIN || x > INT_MAX) {
              throw ConfigError("config: " + key + ": out of range");
            }
            c.*member = static_cast<int>(x);
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

FieldDef u64_field(const std::string& key, std::uint64_t RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v) {
            std::size_t used = 0;
            std::uint64_t x = 0;
            try {
              x = std::stoull(v, &used);
            } catch (const std::exception&) {
              throw ConfigError("config: " + key +
                                ": expected an unsigned integer, got '" + v +
                                "'");
            }
            if (used != v.size() || v[0] == '-') {
              throw ConfigError("config: " + key + ": bad value '" + v + "'");
            }
            c.*member = x;
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

FieldDef dbl_field(const std::string& key, double RunConfig::* member) {
  return {key,
          [key, member](RunConfig& c, const std::string& v) {
            std::size_t used = 0;
            double x = 0.0;
            try {
              x = std::stod(v, &used);
            } catch (const std::exception&) {
              throw ConfigError("config: " + key + ": expected a number, got '" +
                                v + "'");
            }
            if (used != v.size()) {
              throw ConfigError("config: " + key + ": trailing characters in '" +
                                v + "'");
            }
            c.*member = x;
          },
          [member](const RunConfig& c) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", c.*member);
            return std::string(buf);
          }};
}

FieldDef str_field(const std::string& key, std::string RunConfig::* member) {
  return {key,
          [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      u64_field("seed", &RunConfig::seed),
      str_field("scenario", &RunConfig::scenario),
      str_field("ablate", &RunConfig::ablate),
      str_field("graph.mode", &RunConfig::graph_mode),

      int_field("gen.users", &RunConfig::gen_users),
      int_field("gen.intentions", &RunConfig::gen_intentions),
      int_field("gen.clusters", &RunConfig::gen_clusters),
      int_field("gen.min_len", &RunConfig::gen_min_len),
      int_field("gen.max_len", &RunConfig::gen_max_len),
      dbl_field("gen.p_stay", &RunConfig::gen_p_stay),
      dbl_field("gen.p_noise", &RunConfig::gen_p_noise),
      dbl_field("gen.purchase_rate", &RunConfig::gen_purchase_rate),
      dbl_field("gen.gap_rate", &RunConfig::gen_gap_rate),
      int_field("gen.complements", &RunConfig::gen_complements),

      int_field("rel.d_g", &RunConfig::rel_d_g),
      dbl_field("rel.lambda", &RunConfig::rel_lambda),
      dbl_field("rel.epsilon", &RunConfig::rel_epsilon),
      dbl_field("rel.lr", &RunConfig::rel_lr),
      int_field("rel.epochs", &RunConfig::rel_epochs),
      int_field("rel.batch", &RunConfig::rel_batch),
      dbl_field("rel.init_scale", &RunConfig::rel_init_scale),
      int_field("rel.top_k", &RunConfig::rel_top_k),
      int_field("rel.neg_ratio", &RunConfig::rel_neg_ratio),

      int_field("model.d", &RunConfig::model_d),
      int_field("model.max_len", &RunConfig::model_max_len),
      int_field("model.gcn_layers", &RunConfig::model_gcn_layers),
      str_field("model.gcn_activation", &RunConfig::model_gcn_activation),
      int_field("model.blocks", &RunConfig::model_blocks),
      dbl_field("model.dropout", &RunConfig::model_dropout),
      dbl_field("model.init_scale", &RunConfig::model_init_scale),

      dbl_field("train.lr", &RunConfig::train_lr),
      int_field("train.batch", &RunConfig::train_batch),
      int_field("train.epochs", &RunConfig::train_epochs),
      int_field("train.negatives", &RunConfig::train_negatives),

      str_field("eval.split", &RunConfig::eval_split),
      int_field("mad.max_depth", &RunConfig::mad_max_depth),

      str_field("paths.corpus", &RunConfig::path_corpus),
      str_field("paths.world", &RunConfig::path_world),
      str_field("paths.pairs", &RunConfig::path_pairs),
      str_field("paths.graph", &RunConfig::path_graph),
      str_field("paths.checkpoint", &RunConfig::path_checkpoint),
      str_field("paths.train_log", &RunConfig::path_train_log),
      str_field("paths.splits", &RunConfig::path_splits),
      str_field("paths.report", &RunConfig::path_report),
      str_field("paths.ranks", &RunConfig::path_ranks),
      str_field("paths.gradcheck", &RunConfig::path_gradcheck),
      str_field("paths.mad", &RunConfig::path_mad),
  };
  return defs;
}

void require_one_of(const std::string& key, const std::string& value,
                    std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string opts;
  for (const char* a : allowed) {
    if (!opts.empty()) opts += ", ";
    opts += a;
  }
  throw ConfigError("config: " + key + " must be one of {" + opts + "}, got '" +
                    value + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const FieldDef& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  require_one_of("scenario", scenario, {"original", "24h", "purchase"});
  require_one_of("ablate", ablate, {"none", "no-gr", "no-sr"});
  require_one_of("graph.mode", graph_mode, {"trained", "oracle", "identity"});
  require_one_of("eval.split", eval_split, {"val", "test"});
  require_one_of("model.gcn_activation", model_gcn_activation,
                 {"linear", "elu", "relu"});
  generator().validate();
  model_config().validate();
  train_config().validate();
  if (rel_d_g < 1) throw ConfigError("config: rel.d_g must be >= 1");
  if (!(rel_lambda > 0)) throw ConfigError("config: rel.lambda must be > 0");
  if (!(rel_epsilon > 0)) throw ConfigError("config: rel.epsilon must be > 0");
  if (rel_lr < 0) throw ConfigError("config: rel.lr must be >= 0");
  if (rel_epochs < 0) throw ConfigError("config: rel.epochs must be >= 0");
  if (rel_batch < 1) throw ConfigError("config: rel.batch must be >= 1");
  if (!(rel_init_scale > 0)) {
    throw ConfigError("config: rel.init_scale must be > 0");
  }
  if (rel_top_k < 1 || rel_top_k >= gen_intentions) {
    throw ConfigError("config: rel.top_k must be in [1, M)");
  }
  if (rel_neg_ratio < 0) throw ConfigError("config: rel.neg_ratio must be >= 0");
  if (mad_max_depth < 1) throw ConfigError("config: mad.max_depth must be >= 1");
  for (const auto& [key, path] : std::map<std::string, std::string>{
           {"paths.corpus", path_corpus},
           {"paths.world", path_world},
           {"paths.pairs", path_pairs},
           {"paths.graph", path_graph},
           {"paths.checkpoint", path_checkpoint},
           {"paths.train_log", path_train_log},
           {"paths.splits", path_splits},
           {"paths.report", path_report},
           {"paths.gradcheck", path_gradcheck},
           {"paths.mad", path_mad}}) {
    if (path.empty()) throw ConfigError("config: " + key + " must not be empty");
  }
}

data::GeneratorConfig RunConfig::generator() const {
  data::GeneratorConfig g;
  g.num_users = gen_users;
  g.num_intentions = gen_intentions;
  g.num_clusters = gen_clusters;
  g.min_seq_len = gen_min_len;
  g.max_seq_len = gen_max_len;
  g.p_stay = gen_p_stay;
  g.p_noise = gen_p_noise;
  g.purchase_rate = gen_purchase_rate;
  g.gap_rate = gen_gap_rate;
  g.complements_per_intention = gen_complements;
  g.seed = gen_seed();
  return g;
}

graph::RelationConfig RunConfig::relation() const {
  graph::RelationConfig r;
  r.d_g = rel_d_g;
  r.lambda = rel_lambda;
  r.epsilon = rel_epsilon;
  r.lr = rel_lr;
  r.epochs = rel_epochs;
  r.batch_size = rel_batch;
  r.init_scale = rel_init_scale;
  r.top_k = rel_top_k;
  r.seed = rel_seed();
  return r;
}

model::ModelConfig RunConfig::model_config() const {
  model::ModelConfig m;
  m.num_intentions = gen_intentions;
  m.d = model_d;
  m.max_len = model_max_len;
  m.gcn_layers = model_gcn_layers;
  m.gcn_activation = model::gcn_activation_from_string(model_gcn_activation);
  m.num_blocks = model_blocks;
  m.dropout = model_dropout;
  m.init_scale = model_init_scale;
  m.seed = model_seed();
  m.disable_graph_regularizer = ablate == "no-gr";
  m.deterministic_embeddings = ablate == "no-sr";
  return m;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.learning_rate = train_lr;
  t.batch_size = train_batch;
  t.max_epochs = train_epochs;
  t.negatives_per_position = train_negatives;
  t.seed = train_seed();
  return t;
}

std::string RunConfig::split_scenario() const {
  return scenario == "original" ? "loo" : scenario;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    config.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return config;
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          const std::string& ablate_flag) {
  RunConfig config =
      config_path.empty() ? RunConfig{} : parse_run_config(read_file(config_path));
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: override '" + kv + "' is not key=value");
    }
    config.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!ablate_flag.empty()) config.set("ablate", ablate_flag);
  // The no-gr ablation removes the relation graph entirely, so the effective
  // graph mode is identity regardless of what was configured.
  if (config.ablate == "no-gr") config.graph_mode = "identity";
  config.validate();
  return config;
}

std::string canonical_config(const RunConfig& config) {
  std::map<std::string, std::string> sorted;
  for (const FieldDef& f : fields()) sorted[f.key] = f.get(config);
  std::string out;
  for (const auto& [key, value] : sorted) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

std::uint64_t config_hash(const RunConfig& config) {
  return fnv1a64(canonical_config(config));
}

std::string config_hash_hex(const RunConfig& config) {
  return hex64(config_hash(config));
}

std::map<std::string, std::string> config_key_values(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const FieldDef& f : fields()) out[f.key] = f.get(config);
  return out;
}

}  // namespace storec::cli
