// Copyright 2026 The MPDL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mpdl/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mpdl/data.hpp"
#include "mpdl/errors.hpp"
#include "mpdl/graph.hpp"
#include "mpdl/orchestrator.hpp"

namespace mpdl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_blob_sha1(std::span<const std::uint8_t> content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw CryptoError("sha1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

namespace {

struct Options {
  std::string dataset;
  std::string id_column = "id";
  std::string label_column = "diagnosis";
  std::vector<double> gammas{0.1};
  std::string epsilon = "0.5";
  std::vector<std::string> epsilons{"0.1", "0.5", "1", "2", "inf"};
  std::string sensitivity_mode = "per_layer";
  double lambda = 0.01;
  std::size_t folds = 5;
  double threshold = 0.15;
  std::size_t max_iters = 2;
  std::size_t dual_epochs = 10;
  std::size_t central_epochs = 20;
  double lr = 0.1;
  double central_grad_clip = 5.0;
  std::size_t batch_size = 32;
  double test_fraction = 0.1;
  unsigned he_bits = 1024;
  unsigned psi_bits = 1024;
  bool exact_duality_grad = false;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  std::string out_dir = ".";
  std::string backend = "inproc";
  std::string transcript;
  bool unsafe_audit = false;
  bool shadow = false;
  // graph
  std::string edges;
  std::size_t nodes = 200;
  std::size_t communities = 4;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t width_a = 6;
  std::size_t width_b = 6;
  double holdout = 0.1;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

double parse_epsilon(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("epsilon '" + s + "' is not a number or 'inf'");
  }
  if (used != s.size() || !(v > 0.0) || std::isinf(v)) {
    throw ConfigError("epsilon '" + s + "' must be positive (or 'inf')");
  }
  return v;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MpdlConfig base_config(const Options& o) {
  MpdlConfig c;
  c.epsilon = parse_epsilon(o.epsilon);
  if (o.sensitivity_mode == "per_layer") {
    c.sensitivity_mode = dp::SensitivityMode::kPerLayer;
  } else if (o.sensitivity_mode == "per_neuron") {
    c.sensitivity_mode = dp::SensitivityMode::kPerNeuron;
  } else {
    throw ConfigError("sensitivity-mode must be per_layer or per_neuron");
  }
  c.lambda = o.lambda;
  c.folds = o.folds;
  c.threshold = o.threshold;
  c.max_iters = o.max_iters;
  c.dual_epochs = o.dual_epochs;
  c.central_epochs = o.central_epochs;
  c.lr = o.lr;
  c.central_grad_clip = o.central_grad_clip;
  c.batch_size = o.batch_size;
  c.test_fraction = o.test_fraction;
  c.seed = o.seed;
  c.encrypt = !o.shadow;
  c.he_bits = o.he_bits;
  c.psi_bits = o.psi_bits;
  c.exact_duality_grad = o.exact_duality_grad;
  if (!(o.threshold > 0.0) || !std::isfinite(o.threshold)) {
    throw ConfigError("threshold must be a positive number");
  }
  if (o.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (o.shadow && !o.unsafe_audit) throw ConfigError("--shadow requires --unsafe-audit");
  if (o.backend != "inproc" && o.backend != "tcp") throw ConfigError("backend must be inproc or tcp");
  for (double g : o.gammas) {
    MpdlConfig probe = c;
    probe.gamma = g;
    try {
      probe.validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  return c;
}

json resolved(const Options& o, const std::string& command) {
  json j;
  j["command"] = command;
  j["dataset"] = o.dataset;
  j["id_column"] = o.id_column;
  j["label_column"] = o.label_column;
  j["gamma"] = o.gammas;
  j["epsilon"] = o.epsilon;
  j["epsilons"] = o.epsilons;
  j["sensitivity_mode"] = o.sensitivity_mode;
  j["lambda"] = o.lambda;
  j["folds"] = o.folds;
  j["threshold"] = o.threshold;
  j["max_iters"] = o.max_iters;
  j["dual_epochs"] = o.dual_epochs;
  j["central_epochs"] = o.central_epochs;
  j["lr"] = o.lr;
  j["central_grad_clip"] = o.central_grad_clip;
  j["batch_size"] = o.batch_size;
  j["test_fraction"] = o.test_fraction;
  j["he_bits"] = o.he_bits;
  j["psi_bits"] = o.psi_bits;
  j["exact_duality_grad"] = o.exact_duality_grad;
  j["seed"] = o.seed;
  j["repeats"] = o.repeats;
  j["backend"] = o.backend;
  j["encrypt"] = !o.shadow;
  if (command == "graph") {
    j["edges"] = o.edges;
    j["nodes"] = o.nodes;
    j["communities"] = o.communities;
    j["p_in"] = o.p_in;
    j["p_out"] = o.p_out;
    j["width_a"] = o.width_a;
    j["width_b"] = o.width_b;
    j["holdout"] = o.holdout;
  }
  return j;
}

std::ofstream open_output(const Options& o, const std::string& name, fs::path& path) {
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + o.out_dir);
  path = fs::path(o.out_dir) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void write_preamble(std::ostream& f, const json& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs) {
  f << "# config: " << config.dump() << '\n';
  for (const auto& [name, hash] : inputs) f << "# input: " << name << " blob " << hash << '\n';
}

struct LoadedData {
  PartyDataset data;
  std::vector<std::pair<std::string, std::string>> inputs;
};

LoadedData load_dataset(const Options& o) {
  if (o.dataset.empty()) throw ConfigError("--dataset is required");
  const auto bytes = read_bytes(o.dataset);
  LoadedData out;
  out.inputs.emplace_back(fs::path(o.dataset).filename().string(), git_blob_sha1(bytes));
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  out.data = parse_csv(in, {o.id_column, o.label_column, ',', {}});
  if (!out.data.labels) throw ConfigError("dataset has no label column");
  return out;
}

RunOptions run_options(const Options& o) {
  RunOptions r;
  r.backend = o.backend == "tcp" ? transport::Backend::kTcp : transport::Backend::kInProcess;
  return r;
}

std::uint64_t repeat_seed(std::uint64_t seed, std::size_t r) {
  return r == 0 ? seed : derive_seed(seed, static_cast<std::uint64_t>(r));
}

void maybe_dump(const Options& o, const MpdlRun& run, bool& done) {
  if (o.transcript.empty() || done) return;
  std::ofstream f(o.transcript, std::ios::binary);
  if (!f) throw IoError("cannot write " + o.transcript);
  run.transcript.dump_ndjson(f, o.unsafe_audit);
  done = true;
}

int cmd_mpdl(const Options& o, std::ostream& out) {
  MpdlConfig base = base_config(o);
  const auto loaded = load_dataset(o);
  fs::path path;
  auto f = open_output(o, "mpdl.csv", path);
  write_preamble(f, resolved(o, "mpdl"), loaded.inputs);
  f << "method,gamma,mean,std,repeats\n";
  bool dumped = false;
  for (double g : o.gammas) {
    std::vector<double> joint, dual, one_sided;
    for (std::size_t r = 0; r < o.repeats; ++r) {
      MpdlConfig c = base;
      c.gamma = g;
      c.seed = repeat_seed(o.seed, r);
      const auto run = run_mpdl(loaded.data, std::nullopt, c, run_options(o));
      maybe_dump(o, run, dumped);
      joint.push_back(run.report.joint_t);
      dual.push_back(run.report.dual_t);
      one_sided.push_back(run.report.mpdl_a);
    }
    for (auto [name, v] : {std::pair{"joint_T", &joint}, std::pair{"dual_T", &dual},
                           std::pair{"MPDL_A", &one_sided}}) {
      const auto [m, s] = mean_std(*v);
      f << name << ',' << fmt(g) << ',' << fmt(m) << ',' << fmt(s) << ',' << o.repeats << '\n';
    }
  }
  if (!f) throw IoError("write failed: " + path.string());
  out << path.string() << '\n';
  return kExitOk;
}

int cmd_privacy(const Options& o, std::ostream& out) {
  MpdlConfig base = base_config(o);
  std::vector<double> eps;
  for (const auto& s : o.epsilons) eps.push_back(parse_epsilon(s));
  if (eps.empty()) throw ConfigError("--epsilons is empty");
  const auto loaded = load_dataset(o);
  fs::path path;
  auto f = open_output(o, "privacy_sweep.csv", path);
  write_preamble(f, resolved(o, "privacy-sweep"), loaded.inputs);
  f << "epsilon,accuracy,accuracy_std,mae,mae_std,repeats\n";
  bool dumped = false;
  for (double e : eps) {
    std::vector<double> acc, mae;
    for (std::size_t r = 0; r < o.repeats; ++r) {
      MpdlConfig c = base;
      c.gamma = o.gammas.front();
      c.epsilon = e;
      c.seed = repeat_seed(o.seed, r);
      RunOptions ro = run_options(o);
      ro.skip_unlabeled = true;
      const auto run = run_mpdl(loaded.data, std::nullopt, c, ro);
      maybe_dump(o, run, dumped);
      acc.push_back(run.report.dual_t);
      mae.push_back(run.report.inference_mae);
    }
    const auto [am, as] = mean_std(acc);
    const auto [mm, ms] = mean_std(mae);
    f << fmt(e) << ',' << fmt(am) << ',' << fmt(as) << ',' << fmt(mm) << ',' << fmt(ms) << ','
      << o.repeats << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
  out << path.string() << '\n';
  return kExitOk;
}

int cmd_graph(const Options& o, std::ostream& out) {
  base_config(o);  // shared checks
  graph::PartyGraph g;
  std::size_t width_a = o.width_a;
  std::vector<std::pair<std::string, std::string>> inputs;
  if (!o.edges.empty()) {
    if (o.dataset.empty()) throw ConfigError("--edges needs --dataset for node features");
    const auto feat_bytes = read_bytes(o.dataset);
    inputs.emplace_back(fs::path(o.dataset).filename().string(), git_blob_sha1(feat_bytes));
    std::istringstream fin(std::string(feat_bytes.begin(), feat_bytes.end()));
    auto ds = parse_csv(fin, {o.id_column, "", ',', {}});
    const auto edge_bytes = read_bytes(o.edges);
    inputs.emplace_back(fs::path(o.edges).filename().string(), git_blob_sha1(edge_bytes));
    std::istringstream ein(std::string(edge_bytes.begin(), edge_bytes.end()));
    const auto edges = graph::parse_edge_list(ein, index_by_id(ds.ids));
    g = graph::make_graph(ds.ids, edges, ds.features);
    if (width_a == 0 || width_a >= ds.features.cols) width_a = ds.features.cols / 2;
  } else {
    if (o.communities == 0 || o.nodes < o.communities || o.width_a == 0 || o.width_b == 0) {
      throw ConfigError("synthetic graph needs nodes >= communities >= 1 and positive widths");
    }
    auto s = graph::make_sbm_graph(o.nodes, o.communities, o.p_in, o.p_out, o.width_a, o.width_b,
                                   o.seed);
    g = std::move(s.graph);
    inputs.emplace_back("synthetic-sbm", "-");
  }
  fs::path path;
  auto f = open_output(o, "graph.csv", path);
  write_preamble(f, resolved(o, "graph"), inputs);
  f << "gamma,auc,auc_std,auc_raw,completion_mse,repeats\n";
  for (double gamma : o.gammas) {
    std::vector<double> auc, raw, mse;
    for (std::size_t r = 0; r < o.repeats; ++r) {
      graph::LinkTaskConfig c;
      c.gamma = gamma;
      c.holdout_fraction = o.holdout;
      c.dual_epochs = o.dual_epochs;
      c.lr = o.lr;
      c.batch_size = o.batch_size;
      c.lambda = o.lambda;
      c.encrypt = !o.shadow;
      c.he_bits = o.he_bits;
      c.seed = repeat_seed(o.seed, r);
      const auto res = graph::run_link_task(g, width_a, c);
      auc.push_back(res.auc);
      raw.push_back(res.auc_raw);
      mse.push_back(res.completion_mse);
    }
    const auto [am, as] = mean_std(auc);
    f << fmt(gamma) << ',' << fmt(am) << ',' << fmt(as) << ',' << fmt(mean_std(raw).first) << ','
      << fmt(mean_std(mse).first) << ',' << o.repeats << '\n';
  }
  if (!f) throw IoError("write failed: " + path.string());
  out << path.string() << '\n';
  return kExitOk;
}

void add_options(CLI::App& app, Options& o) {
  app.add_option("--dataset", o.dataset, "CSV with a header row");
  app.add_option("--id-column", o.id_column, "entity id column")->capture_default_str();
  app.add_option("--label-column", o.label_column, "label column")->capture_default_str();
  app.add_option("--gamma", o.gammas, "co-occurrence fraction(s)")->delimiter(',')->capture_default_str();
  app.add_option("--epsilon", o.epsilon, "privacy budget, or inf")->capture_default_str();
  app.add_option("--epsilons", o.epsilons, "privacy-sweep grid")->delimiter(',')->capture_default_str();
  app.add_option("--sensitivity-mode", o.sensitivity_mode, "per_layer or per_neuron")
      ->check(CLI::IsMember({"per_layer", "per_neuron"}))
      ->capture_default_str();
  app.add_option("--lambda", o.lambda, "duality weight")->capture_default_str();
  app.add_option("--folds", o.folds, "K")->capture_default_str();
  app.add_option("--threshold", o.threshold, "T")->capture_default_str();
  app.add_option("--max-iters", o.max_iters, "m")->capture_default_str();
  app.add_option("--dual-epochs", o.dual_epochs)->capture_default_str();
  app.add_option("--central-epochs", o.central_epochs)->capture_default_str();
  app.add_option("--lr", o.lr)->capture_default_str();
  app.add_option("--central-grad-clip", o.central_grad_clip, "0 disables")->capture_default_str();
  app.add_option("--batch-size", o.batch_size)->capture_default_str();
  app.add_option("--test-fraction", o.test_fraction)->capture_default_str();
  app.add_option("--he-bits", o.he_bits, "Paillier modulus size")->capture_default_str();
  app.add_option("--psi-bits", o.psi_bits, "RSA modulus size for alignment")->capture_default_str();
  app.add_flag("--exact-duality-grad", o.exact_duality_grad, "factor-2 duality gradient");
  app.add_option("--seed", o.seed)->envname("MPDL_SEED")->capture_default_str();
  app.add_option("--repeats", o.repeats)->capture_default_str();
  app.add_option("--out-dir", o.out_dir)->capture_default_str();
  app.add_option("--backend", o.backend, "inproc or tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}))
      ->capture_default_str();
  app.add_option("--transcript", o.transcript, "NDJSON transcript of the first run");
  app.add_flag("--unsafe-audit", o.unsafe_audit, "full transcript payloads; allows --shadow");
  app.add_flag("--shadow", o.shadow, "plaintext dual rounds (needs --unsafe-audit)");
  app.add_option("--edges", o.edges, "edge list 'src dst' by entity id");
  app.add_option("--nodes", o.nodes)->capture_default_str();
  app.add_option("--communities", o.communities)->capture_default_str();
  app.add_option("--p-in", o.p_in)->capture_default_str();
  app.add_option("--p-out", o.p_out)->capture_default_str();
  app.add_option("--width-a", o.width_a)->capture_default_str();
  app.add_option("--width-b", o.width_b)->capture_default_str();
  app.add_option("--holdout", o.holdout, "held-out edge fraction")->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vertical federated learning with dual-model feature inference"};
  app.name("mpdl");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "key = value file; flags override it");
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;
  add_options(app, o);
  auto* c_mpdl = app.add_subcommand("mpdl", "end-to-end runs, accuracy table rows");
  auto* c_priv = app.add_subcommand("privacy-sweep", "accuracy and inference MAE versus epsilon");
  auto* c_graph = app.add_subcommand("graph", "link prediction AUC versus gamma");
  auto* c_self = app.add_subcommand("selftest", "quick oracle checks of every module");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (c_self->parsed()) return selftest(out) == 0 ? kExitOk : kExitFailure;
    if (c_mpdl->parsed()) return cmd_mpdl(o, out);
    if (c_priv->parsed()) return cmd_privacy(o, out);
    if (c_graph->parsed()) return cmd_graph(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ProtocolError& e) {
    err << "protocol violation: " << e.what() << '\n';
    return kExitProtocol;
  } catch (const SchemaError& e) {
    err << "protocol violation: " << e.what() << '\n';
    return kExitProtocol;
  } catch (const TransportError& e) {
    err << "protocol violation: " << e.what() << '\n';
    return kExitProtocol;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace mpdl::cli
