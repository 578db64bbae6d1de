// ragseg: build and query a retrieval database of instance embeddings, run
// confidence-gated segmentation, and evaluate or benchmark the results.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ragseg/commands.hpp"

namespace {

using ragseg::Error;
using ragseg::ErrorCode;

struct GlobalFlags {
  std::string config;
  std::optional<std::string> db;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> index;
  std::optional<std::size_t> k;
  std::optional<float> lambda;
  std::optional<float> threshold;
  std::optional<std::uint32_t> ef_search;
  std::optional<std::string> report;
};

ragseg::RunConfig resolve(const GlobalFlags& g) {
  ragseg::RunConfig c = g.config.empty() ? ragseg::RunConfig{} : ragseg::RunConfig::load(g.config);
  if (g.db) c.db_path = *g.db;
  if (g.seed) c.seed = *g.seed;
  if (g.index) {
    if (*g.index == "exact") c.index = ragseg::IndexKind::Exact;
    else if (*g.index == "hnsw") c.index = ragseg::IndexKind::Hnsw;
    else throw Error(ErrorCode::InvalidConfig, "--index must be exact or hnsw");
  }
  if (g.k) c.fusion.k = *g.k;
  if (g.lambda) c.fusion.lambda = *g.lambda;
  if (g.threshold) c.fusion.threshold = *g.threshold;
  if (g.ef_search) c.hnsw.ef_search = *g.ef_search;
  if (g.report) c.report_path = *g.report;
  c.validate();
  return c;
}

// Writes to the report path when set, stdout otherwise.
void emit(const ragseg::RunConfig& c, const std::string& text) {
  if (c.report_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(c.report_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write report '" + c.report_path + "'");
  out << text;
}

std::string with_seed(nlohmann::json j, const ragseg::RunConfig& c) {
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented mask classification and segmentation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run config; flags override its values");
  app.add_option("--db", g.db, "Embedding database file");
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--index", g.index, "exact | hnsw");
  app.add_option("--k", g.k, "Neighbors retrieved");
  app.add_option("--lambda", g.lambda, "Retrieval weight");
  app.add_option("--threshold", g.threshold, "Confidence gate on max base probability");
  app.add_option("--ef-search", g.ef_search, "HNSW search beam width");
  app.add_option("--report", g.report, "Write the report here instead of stdout");

  auto* ingest = app.add_subcommand("ingest", "Pool labeled masks into the database");
  std::vector<std::string> feature_files, manifests;
  ingest->add_option("--features", feature_files, "KNFP feature files")->required();
  ingest->add_option("--masks", manifests, "Mask manifests, one per feature file")->required();

  auto* query = app.add_subcommand("query", "Retrieve neighbors of one mask");
  std::string q_features, q_masks;
  std::size_t q_mask_index = 0;
  query->add_option("--features", q_features)->required();
  query->add_option("--masks", q_masks)->required();
  query->add_option("--mask-index", q_mask_index);

  auto* segment = app.add_subcommand("segment", "Classify proposals and stitch a semantic map");
  std::string s_features, s_masks, s_probs, s_out_map, s_out_decisions;
  segment->add_option("--features", s_features)->required();
  segment->add_option("--masks", s_masks)->required();
  segment->add_option("--probs", s_probs, "Base probability file")->required();
  segment->add_option("--out-map", s_out_map, "16-bit PGM output");
  segment->add_option("--out-decisions", s_out_decisions, "JSON-lines per-mask decisions");

  auto* eval = app.add_subcommand("eval", "mIoU over paired label maps");
  std::vector<std::string> e_pred, e_gt;
  std::optional<std::size_t> e_classes;
  bool e_keep_void = false;
  std::string e_format = "json";
  eval->add_option("--pred", e_pred, "Predicted PGM maps")->required();
  eval->add_option("--gt", e_gt, "Ground-truth PGM maps, same order")->required();
  eval->add_option("--classes", e_classes, "Class count (default: database vocabulary)");
  eval->add_flag("--count-void", e_keep_void, "Count ground-truth void pixels");
  eval->add_option("--format", e_format)->check(CLI::IsMember({"json", "csv"}));

  auto* simulate = app.add_subcommand("simulate", "Continual vocabulary expansion on synthetic clusters");
  ragseg::SyntheticSpec spec;
  spec.class_count = 150;
  spec.per_class = 32;
  std::size_t base_classes = 100, step = 10, queries_per_class = 10;
  double logit_scale = 10.0;
  simulate->add_option("--classes", spec.class_count);
  simulate->add_option("--base-classes", base_classes);
  simulate->add_option("--step", step, "New classes per timestep");
  simulate->add_option("--per-class", spec.per_class, "Stored embeddings per class");
  simulate->add_option("--queries-per-class", queries_per_class);
  simulate->add_option("--dim", spec.dim);
  simulate->add_option("--separation", spec.separation);
  simulate->add_option("--sigma", spec.sigma);
  simulate->add_option("--base-logit-scale", logit_scale);

  auto* bench = app.add_subcommand("bench", "Brute force vs HNSW throughput and recall");
  ragseg::BenchOptions bench_opts;
  std::size_t synth_count = 0, synth_classes = 100, synth_dim = 64;
  bench->add_option("--queries", bench_opts.query_count);
  bench->add_option("--ef-list", bench_opts.ef_search, "ef_search values")->delimiter(',');
  bench->add_option("--ef-construction", bench_opts.hnsw.ef_construction);
  bench->add_option("--M", bench_opts.hnsw.M);
  bench->add_option("--synthetic", synth_count, "Benchmark N synthetic vectors instead of --db");
  bench->add_option("--synthetic-classes", synth_classes);
  bench->add_option("--dim", synth_dim);

  auto* stats = app.add_subcommand("db-stats", "Record and class counts of a database");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ragseg::RunConfig config = resolve(g);
    if (ingest->parsed()) {
      emit(config, with_seed(ragseg::cmd_ingest(config, feature_files, manifests).to_json(), config));
    } else if (query->parsed()) {
      emit(config, ragseg::cmd_query(config, q_features, q_masks, q_mask_index, config.fusion.k).to_csv());
    } else if (segment->parsed()) {
      const auto report = ragseg::cmd_segment(config, s_features, s_masks, s_probs, s_out_map, s_out_decisions);
      nlohmann::json summary = {{"masks", report.decisions.size()}, {"index_queries", report.index_queries}};
      summary["decisions"] = nlohmann::json::array();
      for (const auto& d : report.decisions) summary["decisions"].push_back(d.to_json());
      emit(config, with_seed(summary, config));
    } else if (eval->parsed()) {
      std::vector<std::string> names;
      std::size_t classes = 0;
      if (e_classes) {
        classes = *e_classes;
      } else {
        if (config.db_path.empty()) throw Error(ErrorCode::InvalidConfig, "eval needs --classes or --db");
        names = ragseg::EmbeddingDatabase::load(config.db_path).registry().names();
        classes = names.size();
      }
      const auto report = ragseg::cmd_eval(e_pred, e_gt, classes, !e_keep_void);
      emit(config, e_format == "csv" ? report.to_csv(names) : with_seed(report.to_json(names), config));
    } else if (simulate->parsed()) {
      spec.schedule = ragseg::make_schedule(base_classes, spec.class_count, step);
      ragseg::SimulationConfig sim;
      sim.fusion = config.fusion;
      sim.index = config.index;
      sim.hnsw = config.hnsw;
      sim.queries_per_class = queries_per_class;
      sim.base_logit_scale = logit_scale;
      sim.seed = config.seed;
      const auto rows = ragseg::cmd_simulate_continual(spec, sim);
      emit(config, "# seed=" + std::to_string(config.seed) + "\n" + ragseg::simulation_csv(rows));
    } else if (bench->parsed()) {
      bench_opts.k = config.fusion.k;
      bench_opts.seed = config.seed;
      bench_opts.hnsw.seed = config.hnsw.seed;
      bench_opts.hnsw.validate();
      std::optional<ragseg::EmbeddingDatabase> db;
      if (synth_count > 0) {
        ragseg::SyntheticSpec s;
        s.class_count = synth_classes;
        s.per_class = (synth_count + synth_classes - 1) / synth_classes;
        s.dim = synth_dim;
        db = ragseg::synthetic_database(s, config.seed);
      } else {
        if (config.db_path.empty()) throw Error(ErrorCode::InvalidConfig, "bench needs --db or --synthetic");
        db = ragseg::EmbeddingDatabase::load(config.db_path);
      }
      const auto rows = ragseg::cmd_bench_index(db->snapshot(), bench_opts);
      emit(config, "# seed=" + std::to_string(config.seed) + "\n" + ragseg::bench_csv(rows));
    } else if (stats->parsed()) {
      emit(config, with_seed(ragseg::cmd_db_stats(config), config));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ragseg::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
