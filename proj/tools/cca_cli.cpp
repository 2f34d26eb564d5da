// Command-line driver: fit-ica, train, eval, search, synth, check-grads.
//
// Exit codes: 0 success, 2 usage/validation/I/O error, 3 numeric failure.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "cca/adapter.hpp"
#include "cca/crossmodal.hpp"
#include "cca/error.hpp"
#include "cca/featurepack.hpp"
#include "cca/ica.hpp"
#include "cca/search.hpp"
#include "cca/synth.hpp"
#include "cca/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cca::Error(cca::ErrorKind::Io, "cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw cca::Error(cca::ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
}

void emit(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw cca::Error(cca::ErrorKind::Io, "cannot write " + out_path);
    out << text << '\n';
  }
  std::cout << text << '\n';
}

std::vector<double> parse_grid_axis(const std::string& text, const char* name) {
  // Either "a,b,c" or "start:stop:step" (inclusive).
  auto fail = [&]() -> std::vector<double> {
    throw cca::Error(cca::ErrorKind::InvalidArgument,
                     std::string("cannot parse --") + name + "-grid '" + text + "'");
  };
  auto to_double = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail();
    }
    if (used != s.size() || !std::isfinite(v)) fail();
    return v;
  };
  std::vector<double> values;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) return fail();
    const double start = to_double(parts[0]), stop = to_double(parts[1]), step = to_double(parts[2]);
    if (!(step > 0.0) || stop < start) return fail();
    const auto count = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) values.push_back(start + step * i);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) values.push_back(to_double(p));
  }
  if (values.empty()) return fail();
  return values;
}

json ica_config_json(const cca::IcaConfig& c) {
  return {{"n_components", c.n_components},
          {"nonlinearity", cca::to_string(c.nonlinearity)},
          {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations},
          {"seed", c.seed}};
}

json hyperparams_json(const cca::Hyperparams& hp) {
  return {{"alpha", hp.alpha}, {"beta", hp.beta}, {"gamma", hp.gamma}, {"eta", hp.eta}};
}

json base_report(const std::string& command, const json& config, std::uint64_t seed,
                 std::chrono::steady_clock::time_point start) {
  json r;
  r["command"] = command;
  r["tool_version"] = kVersion;
  r["config"] = config;
  r["seed"] = seed;
  r["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// Options shared by commands that score a task: the task, an optional
// checkpoint and the ICA model (or the no-ICA ablation).
struct ModelOptions {
  std::string manifest;
  std::string checkpoint;
  std::string ica;
  bool no_ica = false;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--manifest", o.manifest, "Task manifest JSON")->required();
  cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint directory (omit for training-free)");
  cmd->add_option("--ica", o.ica, "ICA model directory");
  cmd->add_flag("--no-ica", o.no_ica, "Use raw normalized features as cache keys");
}

struct LoadedModel {
  cca::FewShotTask task;
  std::optional<cca::IcaModel> ica;
  cca::Predictor predictor;
};

LoadedModel load_model(const ModelOptions& o, const json& config_file) {
  LoadedModel m;
  m.task = cca::load_task(o.manifest);
  bool disentangled = !o.no_ica;
  std::optional<cca::Checkpoint> ckpt;
  if (!o.checkpoint.empty()) {
    ckpt = cca::load_checkpoint(o.checkpoint);
    disentangled = ckpt->disentangled;
  }
  if (disentangled) {
    if (o.ica.empty())
      throw cca::Error(cca::ErrorKind::InvalidArgument,
                       "an ICA model (--ica) is required unless --no-ica is given");
    m.ica = cca::load_ica(o.ica);
  }
  const cca::IcaModel* ica = m.ica ? &*m.ica : nullptr;

  if (ckpt) {
    if (ckpt->cache.keys.rows() != m.task.cache_features.rows() ||
        ckpt->head.dim() != m.task.dim() || ckpt->cache.n_classes() != m.task.n_classes)
      throw cca::Error(cca::ErrorKind::DimensionMismatch, "checkpoint does not match the manifest");
    if (ica && ica->n_components() != ckpt->cache.dim())
      throw cca::Error(cca::ErrorKind::DimensionMismatch, "checkpoint does not match the ICA model");
    m.predictor = cca::make_predictor(ckpt->cache, ckpt->head, m.task.cache_features);
  } else {
    // Training-free: identity adapter, text classifier straight from text_init.
    cca::TrainConfig tc;
    tc.ablation.no_ica = !disentangled;
    cca::merge_json(config_file, tc);
    tc.ablation.no_ica = !disentangled;
    const cca::TrainState state = cca::init_state(m.task, ica, tc);
    m.predictor = cca::make_predictor(state.cache, state.head, m.task.cache_features);
  }
  return m;
}

cca::Hyperparams default_hyperparams(const cca::Predictor& p) {
  return {p.cache.alpha, p.cache.beta, p.head.gamma, p.head.eta};
}

json split_report(const cca::Predictor& p, const cca::EvalSplit& split, const cca::Hyperparams& hp,
                  std::size_t batch_size, std::size_t n_classes) {
  const auto predicted = cca::argmax_rows(cca::predict_logits(p, split, hp, batch_size));
  std::vector<std::vector<std::size_t>> confusion(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) ++confusion[split.labels[i]][predicted[i]];
  std::vector<json> per_class;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t total = 0;
    for (std::size_t v : confusion[c]) total += v;
    per_class.push_back(total == 0 ? json(nullptr)
                                   : json(static_cast<double>(confusion[c][c]) /
                                          static_cast<double>(total)));
  }
  return {{"accuracy", cca::accuracy(predicted, split.labels)},
          {"n", split.labels.size()},
          {"per_class_accuracy", per_class},
          {"confusion", confusion},
          {"predictions", predicted},
          {"labels", split.labels}};
}

int run_fit_ica(const std::string& source, cca::IcaConfig cfg, bool raw, const std::string& out,
                const json& file_cfg) {
  const auto start = std::chrono::steady_clock::now();
  cca::Mat samples = cca::read_matrix(source);
  if (!raw) samples = cca::l2_normalize_rows(samples);
  cfg.validate(static_cast<std::size_t>(samples.cols()));
  const cca::IcaModel model = cca::fit_ica(samples, cfg);
  cca::save_ica(model, out);
  json config = ica_config_json(cfg);
  config["source"] = source;
  config["out"] = out;
  config["raw"] = raw;
  config["config_file"] = file_cfg;
  json report = base_report("fit-ica", config, cfg.seed, start);
  report["converged"] = model.converged;
  report["iterations"] = model.iterations;
  report["input_dim"] = model.input_dim();
  report["n_components"] = model.n_components();
  emit(report, "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal cache adapter toolkit: ICA disentanglement, cache classifier, fine-tuning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags take precedence)");

  // fit-ica
  auto* fit = app.add_subcommand("fit-ica", "Fit the unmixing matrix on a source feature pack");
  std::string fit_source, fit_out, fit_nonlin = "logcosh";
  cca::IcaConfig ica_cfg;
  bool fit_raw = false;
  fit->add_option("--source", fit_source, "Source feature pack")->required();
  auto* fit_m = fit->add_option("--components,-m", ica_cfg.n_components, "Number of components M");
  auto* fit_nl = fit->add_option("--nonlinearity", fit_nonlin, "logcosh | cube");
  auto* fit_tol = fit->add_option("--tolerance", ica_cfg.tolerance, "Convergence tolerance");
  auto* fit_it = fit->add_option("--max-iterations", ica_cfg.max_iterations, "Iteration cap");
  auto* fit_seed = fit->add_option("--seed", ica_cfg.seed, "RNG seed");
  fit->add_flag("--raw", fit_raw, "Do not L2-normalize source rows before fitting");
  fit->add_option("--out", fit_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Fine-tune the cache adapter and text classifier");
  ModelOptions train_opts;
  std::string train_out;
  cca::TrainConfig tc;
  train->add_option("--manifest", train_opts.manifest, "Task manifest JSON")->required();
  train->add_option("--ica", train_opts.ica, "ICA model directory");
  auto* t_noica = train->add_flag("--no-ica", train_opts.no_ica, "Ablation: no disentanglement");
  train->add_option("--out", train_out, "Checkpoint directory")->required();
  auto* t_epochs = train->add_option("--epochs", tc.epochs);
  auto* t_bs = train->add_option("--batch-size", tc.batch_size);
  auto* t_lrc = train->add_option("--lr-cache", tc.lr_cache);
  auto* t_lrt = train->add_option("--lr-text", tc.lr_text);
  auto* t_l1 = train->add_option("--l1-lambda", tc.l1_lambda);
  auto* t_seed = train->add_option("--seed", tc.seed);
  auto* t_alpha = train->add_option("--alpha", tc.alpha);
  auto* t_beta = train->add_option("--beta", tc.beta);
  auto* t_gamma = train->add_option("--gamma", tc.gamma);
  auto* t_eta = train->add_option("--eta", tc.eta);
  auto* t_tau = train->add_option("--clip-scale", tc.clip_scale);
  auto* t_attn = train->add_option("--attn-scale", tc.attn_scale);
  bool no_shuffle = false;
  auto* t_noshuf = train->add_flag("--no-shuffle", no_shuffle);
  auto* t_fixc = train->add_flag("--fix-cache-adapter", tc.ablation.fix_cache_adapter);
  auto* t_fixt = train->add_flag("--fix-text-classifier", tc.ablation.fix_text_classifier);
  auto* t_nofus = train->add_flag("--no-fusion", tc.ablation.no_fusion);

  // eval
  auto* eval = app.add_subcommand("eval", "Score val/test splits");
  ModelOptions eval_opts;
  add_model_options(eval, eval_opts);
  std::optional<double> e_alpha, e_beta, e_gamma, e_eta;
  std::size_t eval_batch = 0;
  std::string eval_out;
  eval->add_option("--alpha", e_alpha);
  eval->add_option("--beta", e_beta);
  eval->add_option("--gamma", e_gamma);
  eval->add_option("--eta", e_eta);
  eval->add_option("--batch-size", eval_batch, "Query chunk size (0 = all at once)");
  eval->add_option("--out", eval_out, "Also write the report here");

  // search
  auto* search = app.add_subcommand("search", "Grid search alpha, beta, gamma, eta on the validation split");
  ModelOptions search_opts;
  add_model_options(search, search_opts);
  std::string g_alpha, g_beta, g_gamma, g_eta, search_out;
  bool search_full = false;
  search->add_option("--alpha-grid", g_alpha, "a,b,c or start:stop:step");
  search->add_option("--beta-grid", g_beta);
  search->add_option("--gamma-grid", g_gamma);
  search->add_option("--eta-grid", g_eta);
  search->add_flag("--full", search_full, "Full Cartesian product instead of two passes");
  search->add_option("--out", search_out, "Also write the report here");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic few-shot task");
  std::string synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", synth_spec, "Generative spec JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Override the spec seed");

  // check-grads
  auto* grads = app.add_subcommand("check-grads", "Compare analytic gradients with central differences");
  std::size_t gc_n = 4, gc_k = 2, gc_c = 12, gc_m = 6, gc_b = 5;
  double gc_step = 1e-4, gc_threshold = 1e-4;
  std::uint64_t gc_seed = 0;
  grads->add_option("--n-classes", gc_n);
  grads->add_option("--shots", gc_k);
  grads->add_option("--dim", gc_c);
  grads->add_option("--components", gc_m);
  grads->add_option("--batch", gc_b);
  grads->add_option("--step", gc_step);
  grads->add_option("--threshold", gc_threshold);
  grads->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const json file_cfg = config_path.empty() ? json::object() : read_json_file(config_path);
    const auto start = std::chrono::steady_clock::now();

    if (*fit) {
      // Config file values apply where the flag was not given.
      if (!*fit_m && file_cfg.contains("n_components"))
        ica_cfg.n_components = file_cfg["n_components"].get<std::size_t>();
      if (!*fit_nl && file_cfg.contains("nonlinearity"))
        fit_nonlin = file_cfg["nonlinearity"].get<std::string>();
      if (!*fit_tol && file_cfg.contains("tolerance"))
        ica_cfg.tolerance = file_cfg["tolerance"].get<double>();
      if (!*fit_it && file_cfg.contains("max_iterations"))
        ica_cfg.max_iterations = file_cfg["max_iterations"].get<int>();
      if (!*fit_seed && file_cfg.contains("seed")) ica_cfg.seed = file_cfg["seed"].get<std::uint64_t>();
      ica_cfg.nonlinearity = cca::parse_nonlinearity(fit_nonlin);
      if (ica_cfg.n_components == 0)
        throw cca::Error(cca::ErrorKind::InvalidArgument, "--components is required");
      return run_fit_ica(fit_source, ica_cfg, fit_raw, fit_out, file_cfg);
    }

    if (*train) {
      cca::TrainConfig merged;
      cca::merge_json(file_cfg, merged);
      auto over = [](CLI::Option* opt, auto& dst, const auto& src) {
        if (*opt) dst = src;
      };
      over(t_epochs, merged.epochs, tc.epochs);
      over(t_bs, merged.batch_size, tc.batch_size);
      over(t_lrc, merged.lr_cache, tc.lr_cache);
      over(t_lrt, merged.lr_text, tc.lr_text);
      over(t_l1, merged.l1_lambda, tc.l1_lambda);
      over(t_seed, merged.seed, tc.seed);
      over(t_alpha, merged.alpha, tc.alpha);
      over(t_beta, merged.beta, tc.beta);
      over(t_gamma, merged.gamma, tc.gamma);
      over(t_eta, merged.eta, tc.eta);
      over(t_tau, merged.clip_scale, tc.clip_scale);
      over(t_attn, merged.attn_scale, tc.attn_scale);
      if (*t_noshuf) merged.shuffle = false;
      over(t_fixc, merged.ablation.fix_cache_adapter, tc.ablation.fix_cache_adapter);
      over(t_fixt, merged.ablation.fix_text_classifier, tc.ablation.fix_text_classifier);
      over(t_nofus, merged.ablation.no_fusion, tc.ablation.no_fusion);
      over(t_noica, merged.ablation.no_ica, train_opts.no_ica);
      merged.validate();

      const cca::FewShotTask task = cca::load_task(train_opts.manifest);
      std::optional<cca::IcaModel> ica;
      if (!merged.ablation.no_ica) {
        if (train_opts.ica.empty())
          throw cca::Error(cca::ErrorKind::InvalidArgument,
                           "an ICA model (--ica) is required unless --no-ica is given");
        ica = cca::load_ica(train_opts.ica);
      }
      const cca::TrainState state = cca::train(task, ica ? &*ica : nullptr, merged);
      json config = cca::to_json(merged);
      config["manifest"] = train_opts.manifest;
      config["ica"] = train_opts.ica;
      config["out"] = train_out;
      json report = base_report("train", config, merged.seed, start);
      report["loss_trace"] = state.loss_trace;
      report["epochs_run"] = state.epoch;
      cca::save_checkpoint(state, merged, train_out,
                           {{"tool_version", kVersion}, {"wall_time_s", report["wall_time_s"]}});
      emit(report, "");
      return 0;
    }

    if (*eval) {
      const LoadedModel m = load_model(eval_opts, file_cfg);
      const cca::IcaModel* ica = m.ica ? &*m.ica : nullptr;
      cca::Hyperparams hp = default_hyperparams(m.predictor);
      if (file_cfg.contains("alpha")) hp.alpha = file_cfg["alpha"].get<double>();
      if (file_cfg.contains("beta")) hp.beta = file_cfg["beta"].get<double>();
      if (file_cfg.contains("gamma")) hp.gamma = file_cfg["gamma"].get<double>();
      if (file_cfg.contains("eta")) hp.eta = file_cfg["eta"].get<double>();
      if (e_alpha) hp.alpha = *e_alpha;
      if (e_beta) hp.beta = *e_beta;
      if (e_gamma) hp.gamma = *e_gamma;
      if (e_eta) hp.eta = *e_eta;
      if (!(hp.beta > 0.0)) throw cca::Error(cca::ErrorKind::InvalidArgument, "beta must be > 0");

      json splits = json::object();
      if (m.task.val_features.rows() > 0)
        splits["val"] = split_report(m.predictor, cca::make_split(m.task.val_features, m.task.val_labels, ica),
                                     hp, eval_batch, m.task.n_classes);
      if (m.task.test_features.rows() > 0)
        splits["test"] = split_report(m.predictor, cca::make_split(m.task.test_features, m.task.test_labels, ica),
                                      hp, eval_batch, m.task.n_classes);
      if (splits.empty()) throw cca::Error(cca::ErrorKind::InvalidArgument, "manifest has no val or test split");
      json config = {{"manifest", eval_opts.manifest}, {"checkpoint", eval_opts.checkpoint},
                     {"ica", eval_opts.ica}, {"no_ica", !m.ica.has_value()},
                     {"batch_size", eval_batch}, {"config_file", file_cfg}};
      json report = base_report("eval", config, 0, start);
      report["parameters"] = hyperparams_json(hp);
      report["training_free"] = eval_opts.checkpoint.empty();
      report["splits"] = splits;
      report["wall_time_s"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      emit(report, eval_out);
      return 0;
    }

    if (*search) {
      const LoadedModel m = load_model(search_opts, file_cfg);
      const cca::IcaModel* ica = m.ica ? &*m.ica : nullptr;
      if (m.task.val_features.rows() == 0)
        throw cca::Error(cca::ErrorKind::InvalidArgument, "manifest has no validation split");
      cca::SearchGrid grid = cca::SearchGrid::defaults();
      if (file_cfg.contains("grid")) {
        const json& g = file_cfg["grid"];
        if (g.contains("alpha")) grid.alpha = g["alpha"].get<std::vector<double>>();
        if (g.contains("beta")) grid.beta = g["beta"].get<std::vector<double>>();
        if (g.contains("gamma")) grid.gamma = g["gamma"].get<std::vector<double>>();
        if (g.contains("eta")) grid.eta = g["eta"].get<std::vector<double>>();
      }
      if (!g_alpha.empty()) grid.alpha = parse_grid_axis(g_alpha, "alpha");
      if (!g_beta.empty()) grid.beta = parse_grid_axis(g_beta, "beta");
      if (!g_gamma.empty()) grid.gamma = parse_grid_axis(g_gamma, "gamma");
      if (!g_eta.empty()) grid.eta = parse_grid_axis(g_eta, "eta");
      grid.validate();
      const cca::SearchMode mode = search_full || file_cfg.value("full", false)
                                       ? cca::SearchMode::Full
                                       : cca::SearchMode::TwoPass;
      const cca::EvalSplit val = cca::make_split(m.task.val_features, m.task.val_labels, ica);
      const cca::SearchResult result = cca::grid_search(m.predictor, val, grid, mode);

      json table = json::array();
      for (const auto& row : result.table) {
        json r = hyperparams_json(row.params);
        r["accuracy"] = row.accuracy;
        table.push_back(r);
      }
      json config = {{"manifest", search_opts.manifest}, {"checkpoint", search_opts.checkpoint},
                     {"ica", search_opts.ica}, {"no_ica", !m.ica.has_value()},
                     {"mode", mode == cca::SearchMode::Full ? "full" : "two-pass"},
                     {"config_file", file_cfg}};
      json report = base_report("search", config, 0, start);
      report["grid"] = {{"alpha", grid.alpha}, {"beta", grid.beta}, {"gamma", grid.gamma}, {"eta", grid.eta}};
      report["table"] = table;
      report["best"] = hyperparams_json(result.best);
      report["best_accuracy"] = result.best_accuracy;
      report["wall_time_s"] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      emit(report, search_out);
      return 0;
    }

    if (*synth) {
      json spec = read_json_file(synth_spec);
      for (const auto& [key, value] : file_cfg.items())
        if (!spec.contains(key)) spec[key] = value;
      if (synth_seed) spec["seed"] = *synth_seed;
      const cca::SynthJob job = cca::parse_synth_job(spec);
      const fs::path manifest = cca::write_synth_job(job, synth_out);
      json report = base_report("synth", spec, job.spec.seed, start);
      report["manifest"] = manifest.string();
      report["n_classes"] = job.spec.label_rule.n_classes();
      report["thresholds"] = job.spec.label_rule.thresholds;
      emit(report, "");
      return 0;
    }

    if (*grads) {
      // Small random instance: identity-initialized adapter perturbed so no
      // entry sits at the l1 kink, nonzero alpha/gamma/eta/lambda.
      cca::GenerativeSpec spec = cca::make_spec(gc_m, gc_c, cca::LatentDist::Laplace, 0.5, gc_seed);
      spec.label_rule.latents = {0};
      spec.label_rule.weights = {1.0};
      spec.label_rule.thresholds = cca::balanced_thresholds(spec, gc_n);
      const cca::FewShotTask task = cca::make_task(spec, {gc_k, 0, 0, 4});
      cca::Mat source = cca::sample(spec, 2000, 7).features;
      cca::IcaConfig icfg;
      icfg.n_components = gc_m;
      icfg.seed = gc_seed;
      const cca::IcaModel ica = cca::fit_ica(cca::l2_normalize_rows(source), icfg);

      cca::TrainConfig cfg;
      cfg.alpha = 1.3;
      cfg.beta = 2.0;
      cfg.gamma = 0.7;
      cfg.eta = 0.4;
      cfg.attn_scale = 2.0;
      cfg.clip_scale = 3.0;
      cfg.l1_lambda = 1e-2;
      cfg.seed = gc_seed;
      cca::TrainState state = cca::init_state(task, &ica, cfg);
      std::mt19937_64 rng(gc_seed);
      std::normal_distribution<double> jitter(0.0, 0.05);
      for (Eigen::Index i = 0; i < state.cache.adapter.size(); ++i)
        state.cache.adapter.data()[i] += jitter(rng);
      for (Eigen::Index i = 0; i < state.head.text_weights.size(); ++i)
        state.head.text_weights.data()[i] += jitter(rng);

      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < std::min<std::size_t>(gc_b, gc_n * gc_k); ++i) idx.push_back(i * 3 % (gc_n * gc_k));
      const cca::Batch batch = cca::cache_batch(task, state.cache, idx);
      const cca::GradCheckReport rep = cca::finite_diff_check(state, batch, cfg, gc_step);
      json config = {{"n_classes", gc_n}, {"shots", gc_k}, {"dim", gc_c}, {"components", gc_m},
                     {"batch", idx.size()}, {"step", gc_step}, {"threshold", gc_threshold},
                     {"train", cca::to_json(cfg)}};
      json report = base_report("check-grads", config, gc_seed, start);
      report["cache_adapter_error"] = rep.cache_error;
      report["text_classifier_error"] = rep.text_error;
      report["max_relative_error"] = rep.max_error();
      report["passed"] = rep.max_error() < gc_threshold;
      emit(report, "");
      return rep.max_error() < gc_threshold ? 0 : 3;
    }
  } catch (const cca::Error& e) {
    std::cerr << "error [" << cca::to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "error [config]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
