// Command-line front end: generate synthetic corpora, run experiment suites
// from a JSON config, and recompute summaries from stored curves.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ctial/experiment.hpp"
#include "ctial/synthetic.hpp"

namespace {

namespace fs = std::filesystem;

ctial::SyntheticSpec parse_synthetic_block(const std::string& config_path) {
  ctial::SyntheticSpec spec;
  if (config_path.empty()) return spec;
  std::ifstream in(config_path);
  if (!in) throw ctial::Error("cannot open config file: " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ctial::Error("config " + config_path + ": " + e.what());
  }
  if (!j.contains("synthetic")) return spec;
  const nlohmann::json& s = j.at("synthetic");
  ctial::detail::check_keys(s,
                            {"n", "classes", "label_sigma", "feature_sigma", "offset_sigma",
                             "dim_gain", "feature_dim", "n_groups"},
                            "synthetic");
  try {
    if (s.contains("n")) spec.n = s.at("n").get<ctial::Index>();
    if (s.contains("classes")) spec.classes = s.at("classes").get<std::vector<std::string>>();
    if (s.contains("label_sigma")) spec.label_sigma = s.at("label_sigma").get<double>();
    if (s.contains("feature_sigma")) spec.feature_sigma = s.at("feature_sigma").get<double>();
    if (s.contains("offset_sigma")) spec.offset_sigma = s.at("offset_sigma").get<double>();
    if (s.contains("dim_gain")) spec.dim_gain = s.at("dim_gain").get<double>();
    if (s.contains("feature_dim")) spec.feature_dim = s.at("feature_dim").get<ctial::Index>();
    if (s.contains("n_groups")) spec.n_groups = s.at("n_groups").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ctial::Error("config " + config_path + ": " + e.what());
  }
  return spec;
}

int cmd_generate(const std::string& config, const std::string& out, std::uint64_t seed) {
  const ctial::SyntheticSpec spec = parse_synthetic_block(config);
  const ctial::Dataset corpus = ctial::generate_synthetic_corpus(spec, seed);
  fs::create_directories(out);
  const fs::path dir(out);
  ctial::write_dataset(corpus, (dir / "features.csv").string(), (dir / "labels.csv").string());
  ctial::write_lexicon(ctial::nrc_vad_lexicon(), (dir / "lexicon.json").string());
  std::cout << "wrote " << corpus.n() << " samples (" << spec.classes.size() << " classes, "
            << spec.feature_dim << " features, seed " << seed << ") to " << out
            << "/{features.csv,labels.csv,lexicon.json}\n";
  return 0;
}

int cmd_run(const std::string& config, const std::string& out, std::int64_t seed, int jobs) {
  ctial::ExperimentConfig cfg = ctial::load_experiment_config(config);
  if (!out.empty()) cfg.output_dir = out;
  if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};

  const ctial::Dataset source =
      ctial::load_dataset(cfg.source.features_path, cfg.source.labels_path, cfg.source.schema);
  const ctial::Dataset target =
      ctial::load_dataset(cfg.target.features_path, cfg.target.labels_path, cfg.target.schema);

  for (const std::string& w : ctial::validate_experiment(cfg, source, target))
    std::cerr << "warning: " << w << "\n";

  const std::size_t total = cfg.strategies.size() * cfg.seeds.size();
  std::size_t done = 0;
  const auto progress = [&](const ctial::LearningCurve& curve) {
    ++done;
    std::cerr << "[" << done << "/" << total << "] " << ctial::strategy_name(curve.strategy)
              << " seed " << curve.seed << "\n";
  };
  ctial::run_suite(cfg, source, target, jobs, progress);
  std::cout << "wrote " << cfg.output_dir << "/curves.csv, queries.csv, summary.json ("
            << total << " runs)\n";
  return 0;
}

int cmd_report(const std::string& out) {
  ctial::regenerate_summary(out);
  std::cout << "wrote " << out << "/summary.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-task active learning between categorical and dimensional emotion models"};
  app.require_subcommand(1);

  std::string g_config, g_out = "data";
  std::int64_t g_seed = 7;
  CLI::App* gen = app.add_subcommand(
      "generate", "Write a synthetic corpus: features.csv, labels.csv, lexicon.json");
  gen->add_option("--config", g_config,
                  "JSON config; its \"synthetic\" block overrides generator defaults");
  gen->add_option("--out", g_out, "output directory (default: data)");
  gen->add_option("--seed", g_seed, "corpus generation seed (default: 7)");

  std::string r_config, r_out;
  std::int64_t r_seed = -1;
  int r_jobs = 1;
  CLI::App* run = app.add_subcommand("run", "Run the experiment suite described by a config");
  run->add_option("--config", r_config, "JSON experiment config")->required();
  run->add_option("--out", r_out, "override the config's output directory");
  run->add_option("--seed", r_seed, "run only this seed instead of the config's list");
  run->add_option("--jobs", r_jobs, "parallel workers (default: 1)");

  std::string p_out;
  CLI::App* rep = app.add_subcommand(
      "report", "Recompute summary.json from a previously written curves.csv");
  rep->add_option("--out", p_out, "suite output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(g_config, g_out, static_cast<std::uint64_t>(g_seed));
    if (run->parsed()) return cmd_run(r_config, r_out, r_seed, r_jobs);
    if (rep->parsed()) return cmd_report(p_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
