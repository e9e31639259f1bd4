#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "psim/checkpoint.hpp"
#include "psim/dataset.hpp"
#include "psim/error.hpp"
#include "psim/fluidc.hpp"
#include "psim/ged.hpp"
#include "psim/io.hpp"
#include "psim/model.hpp"
#include "psim/random.hpp"
#include "psim/train.hpp"

namespace fs = std::filesystem;
using namespace psim;

namespace {

constexpr const char* kModule = "cli";

enum ExitCode { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

struct Globals {
  int threads = 1;
  bool verbose = false;
};

/// Relative output paths are placed under $PSIM_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv("PSIM_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
  }
  return p;
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::exists(path)) throw DataError(kModule, std::string(flag) + " '" + path + "' does not exist");
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

ModelConfig read_model_config(const std::string& path) {
  if (path.empty()) return ModelConfig{};
  require_file(path, "--model-config");
  return model_config_from_json(read_text_file(path));
}

/// Rebuilds the model described by a checkpoint's meta and loads its values.
PSimGnn load_model(const std::string& checkpoint) {
  require_file(checkpoint, "--checkpoint");
  const auto meta = nlohmann::json::parse(read_checkpoint_meta(checkpoint));
  if (!meta.contains("model")) throw DataError(kModule, "checkpoint '" + checkpoint + "' has no model config");
  PSimGnn model(model_config_from_json(meta.at("model").dump()));
  load_checkpoint(model.parameters(), checkpoint);
  return model;
}

void log(const Globals& g, const std::string& message) {
  if (g.verbose) std::cerr << message << '\n';
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  BaDatasetOptions options;
  std::string out;
};

void add_gen(CLI::App& app, GenArgs& a, std::function<void()>& action, const Globals& g) {
  auto* sub = app.add_subcommand("gen", "Build a Barabasi-Albert dataset with ground-truth GEDs");
  sub->add_option("--n", a.options.n, "Nodes per basic graph")->check(CLI::PositiveNumber);
  sub->add_option("--basics", a.options.basics, "Basic graphs")->check(CLI::PositiveNumber);
  sub->add_option("--trims", a.options.trims_per_basic, "Trimmed graphs per basic graph");
  sub->add_option("--attach", a.options.attach, "BA edges per new node")->check(CLI::PositiveNumber);
  sub->add_option("--min-ged", a.options.min_ged, "Smallest trim target");
  sub->add_option("--max-ged", a.options.max_ged, "Largest trim target");
  sub->add_option("--beam-width", a.options.ground_truth.beam_width, "Beam width of the ground-truth search")
      ->check(CLI::PositiveNumber);
  sub->add_option("--name", a.options.name, "Dataset name (default ba<n>)");
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->callback([&] {
    action = [&] {
      a.options.threads = g.threads;
      const auto start = std::chrono::steady_clock::now();
      const DatasetManifest m = build_ba_dataset(a.options);
      const fs::path dir = output_path(a.out);
      save_manifest(m, dir);
      const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
      std::cout << "dataset " << m.name << '\n'
                << "graphs " << m.graphs.size() << '\n'
                << "pairs " << m.pairs.size() << '\n'
                << "train " << m.splits.train.size() << " val " << m.splits.val.size() << " test "
                << m.splits.test.size() << '\n'
                << "out " << dir.string() << '\n';
      log(g, "generated in " + number(took.count()) + " s");
    };
  });
}

// ---- partition ---------------------------------------------------------------

struct PartitionArgs {
  std::string graph;
  int k = 3;
  std::string out;
  int max_sweeps = kDefaultMaxSweeps;
};

void add_partition(CLI::App& app, PartitionArgs& a, std::function<void()>& action,
                   const std::uint64_t& seed) {
  auto* sub = app.add_subcommand("partition", "FluidC partition of one graph");
  sub->add_option("--graph", a.graph, "Graph JSON file")->required();
  sub->add_option("--k", a.k, "Number of communities");
  sub->add_option("--max-sweeps", a.max_sweeps, "Sweep limit");
  sub->add_option("--out", a.out, "Write the partition JSON here instead of stdout");
  sub->callback([&] {
    action = [&] {
      require_file(a.graph, "--graph");
      const Graph g = load_graph_file(a.graph);
      const PartitionResult p = fluidc(g, a.k, seed, a.max_sweeps);
      const std::string text = partition_to_json(p);
      if (a.out.empty()) {
        std::cout << text << '\n';
      } else {
        write_text_file_atomic(output_path(a.out), text + "\n");
      }
      std::cerr << "converged " << (p.converged ? "yes" : "no") << " after " << p.sweeps << " sweeps\n";
    };
  });
}

// ---- ged -------------------------------------------------------------------

struct GedArgs {
  std::string g1, g2;
  std::string method = "exact";
  std::size_t beam_width = kDefaultBeamWidth;
  long timeout_ms = 0;
};

void add_ged(CLI::App& app, GedArgs& a, std::function<void()>& action) {
  auto* sub = app.add_subcommand("ged", "Graph edit distance between two graphs");
  sub->add_option("--g1", a.g1, "First graph JSON")->required();
  sub->add_option("--g2", a.g2, "Second graph JSON")->required();
  sub->add_option("--method", a.method, "exact | hungarian | vj | beam")
      ->check(CLI::IsMember({"exact", "hungarian", "vj", "beam"}));
  sub->add_option("--beam-width", a.beam_width, "Beam width")->check(CLI::PositiveNumber);
  sub->add_option("--timeout-ms", a.timeout_ms, "Exact search budget, 0 for none");
  sub->callback([&] {
    action = [&] {
      require_file(a.g1, "--g1");
      require_file(a.g2, "--g2");
      const Graph g1 = load_graph_file(a.g1);
      const Graph g2 = load_graph_file(a.g2);
      GedResult r;
      switch (parse_ged_method(a.method)) {
        case GedMethod::kExactAstar: {
          ExactGedOptions opts;
          opts.timeout = std::chrono::milliseconds(a.timeout_ms);
          r = exact_ged_astar(g1, g2, {}, opts);
          break;
        }
        case GedMethod::kHungarian:
          r = bipartite_ged(g1, g2, {}, AssignmentSolver::kHungarian);
          break;
        case GedMethod::kVj:
          r = bipartite_ged(g1, g2, {}, AssignmentSolver::kJonkerVolgenant);
          break;
        default:
          r = beam_ged(g1, g2, {}, a.beam_width);
          break;
      }
      const auto norm = nged_similarity(r.value, g1.node_count(), g2.node_count());
      nlohmann::ordered_json record;
      record["g1"] = g1.id();
      record["g2"] = g2.id();
      record["method"] = to_string(r.method);
      record["ged"] = r.value;
      record["nged"] = norm.nged;
      record["sim"] = norm.sim;
      std::cout << record.dump() << '\n';
    };
  });
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string model_config;
  std::string out;
  TrainConfig config;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& action, const Globals& g,
               const std::uint64_t& seed) {
  auto* sub = app.add_subcommand("train", "Train the similarity model on a dataset");
  sub->add_option("--dataset", a.dataset, "Dataset directory")->required();
  sub->add_option("--model-config", a.model_config, "Model config JSON (defaults when omitted)");
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--iterations", a.config.iterations, "Minibatch updates")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", a.config.batch_size, "Pairs per minibatch")->check(CLI::PositiveNumber);
  sub->add_option("--lr", a.config.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--validate-every", a.config.validate_every, "Validation cadence")
      ->check(CLI::PositiveNumber);
  sub->add_option("--val-cap", a.config.validation_cap, "Validation pair cap, 0 for all");
  sub->callback([&] {
    action = [&] {
      require_file(a.dataset, "--dataset");
      a.config.seed = seed;
      a.config.threads = g.threads;
      const DatasetManifest m = load_manifest(a.dataset);
      ModelConfig mc = read_model_config(a.model_config);
      PSimGnn model(mc);
      PartitionCache partitions = build_partitions(m, mc.k, g.threads);
      const auto start = std::chrono::steady_clock::now();
      const TrainResult r = train(model, m, partitions, a.config, [&](const HistoryRow& row) {
        log(g, "iteration " + std::to_string(row.iteration) + " train " + number(row.train_loss) +
                   " val " + number(row.val_loss));
      });
      const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;

      const fs::path dir = output_path(a.out);
      fs::create_directories(dir);
      nlohmann::ordered_json meta;
      meta["model"] = nlohmann::json::parse(model_config_to_json(mc));
      meta["dataset"] = m.name;
      meta["iterations"] = a.config.iterations;
      meta["batch_size"] = a.config.batch_size;
      meta["learning_rate"] = a.config.learning_rate;
      meta["seed"] = seed;
      meta["best_iteration"] = r.best_iteration;
      meta["best_val_loss"] = r.best_val_loss;
      save_checkpoint(model.parameters(), dir / "checkpoint.json", meta.dump());
      write_text_file_atomic(dir / "history.csv", history_to_csv(r.history));
      std::cout << "best_iteration " << r.best_iteration << '\n'
                << "best_val_loss " << number(r.best_val_loss) << '\n'
                << "final_val_loss " << number(r.final_val_loss) << '\n'
                << "checkpoint " << (dir / "checkpoint.json").string() << '\n';
      log(g, "trained in " + number(took.count()) + " s");
    };
  });
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::string checkpoint;
  std::string report;
  std::vector<std::size_t> ks{10, 20};
};

void add_eval(CLI::App& app, EvalArgs& a, std::function<void()>& action, const Globals& g) {
  auto* sub = app.add_subcommand("eval", "Regression and ranking metrics on the test split");
  sub->add_option("--dataset", a.dataset, "Dataset directory")->required();
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint written by train")->required();
  sub->add_option("--report", a.report, "Report path; .csv writes CSV, anything else JSON");
  sub->add_option("--k", a.ks, "Cutoffs for p@k");
  sub->callback([&] {
    action = [&] {
      require_file(a.dataset, "--dataset");
      const DatasetManifest m = load_manifest(a.dataset);
      const PSimGnn model = load_model(a.checkpoint);
      PartitionCache partitions = build_partitions(m, model.config().k, g.threads);
      const EvalReport r = evaluate(model, m, partitions, a.ks, g.threads);
      const std::string csv = eval_report_to_csv(r);
      std::cout << csv;
      if (!a.report.empty()) {
        const fs::path path = output_path(a.report);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        write_text_file_atomic(path, path.extension() == ".csv" ? csv : eval_report_to_json(r) + "\n");
      }
    };
  });
}

// ---- rank --------------------------------------------------------------------

struct RankArgs {
  std::string dataset;
  std::string checkpoint;
  std::vector<std::string> queries;
  std::size_t top = 10;
  std::string out;
};

void add_rank(CLI::App& app, RankArgs& a, std::function<void()>& action, const Globals& g) {
  auto* sub = app.add_subcommand("rank", "Rank the train+val database for test queries");
  sub->add_option("--dataset", a.dataset, "Dataset directory")->required();
  sub->add_option("--checkpoint", a.checkpoint, "Checkpoint written by train")->required();
  sub->add_option("--query", a.queries, "Query graph ids (default: every test graph)");
  sub->add_option("--top", a.top, "Results listed per query")->check(CLI::PositiveNumber);
  sub->add_option("--out", a.out, "Write the CSV here instead of stdout");
  sub->callback([&] {
    action = [&] {
      require_file(a.dataset, "--dataset");
      const DatasetManifest m = load_manifest(a.dataset);
      const PSimGnn model = load_model(a.checkpoint);
      const auto& queries = a.queries.empty() ? m.splits.test : a.queries;
      for (const auto& q : queries) m.index_of(q);
      PartitionCache partitions = build_partitions(m, model.config().k, g.threads);
      const auto pairs = query_pairs(m, queries);
      if (pairs.empty()) throw DataError(kModule, "no database graphs to rank");
      const auto preds = predict(model, m, partitions, pairs, g.threads);

      std::ostringstream out;
      out << "query,rank,id,predicted_sim,true_sim,true_ged\n";
      for (std::size_t begin = 0; begin < pairs.size();) {
        std::size_t end = begin;
        while (end < pairs.size() && pairs[end].first == pairs[begin].first) ++end;
        std::vector<double> scores(preds.begin() + static_cast<std::ptrdiff_t>(begin),
                                   preds.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::string> ids;
        for (std::size_t p = begin; p < end; ++p) ids.push_back(m.graphs[pairs[p].second].graph.id());
        const auto order = top_k(scores, ids, std::min(a.top, scores.size()));
        for (std::size_t r = 0; r < order.size(); ++r) {
          const auto& pr = pairs[begin + order[r]];
          const auto& rec = m.pair(pr.first, pr.second);
          out << m.graphs[pr.first].graph.id() << ',' << r + 1 << ',' << ids[order[r]] << ','
              << number(scores[order[r]]) << ',' << number(rec.sim) << ',' << rec.ged << '\n';
        }
        begin = end;
      }
      if (a.out.empty()) {
        std::cout << out.str();
      } else {
        write_text_file_atomic(output_path(a.out), out.str());
      }
    };
  });
}

// ---- bench -------------------------------------------------------------------

struct BenchArgs {
  std::size_t n = 200;
  std::size_t pairs = 100;
  int k = 3;
  std::size_t repetitions = 1;
  std::string checkpoint;
  std::string out;
};

void add_bench(CLI::App& app, BenchArgs& a, std::function<void()>& action, const std::uint64_t& seed) {
  auto* sub = app.add_subcommand("bench", "Scoring time per pair for m in {0, k, k^2}");
  sub->add_option("--n", a.n, "Nodes per random BA graph")->check(CLI::PositiveNumber);
  sub->add_option("--pairs", a.pairs, "Scored pairs")->check(CLI::PositiveNumber);
  sub->add_option("--k", a.k, "Partitions per graph")->check(CLI::PositiveNumber);
  sub->add_option("--repetitions", a.repetitions, "Timed passes")->check(CLI::PositiveNumber);
  sub->add_option("--checkpoint", a.checkpoint, "Use this model's weights for m = its own m");
  sub->add_option("--out", a.out, "Write the CSV here instead of stdout");
  sub->callback([&] {
    action = [&] {
      std::vector<PartitionResult> parts;
      for (std::size_t i = 0; i < 2 * a.pairs; ++i) {
        const Graph g = generate_ba(a.n, 1, derive_seed(seed, i), "bench-" + std::to_string(i));
        parts.push_back(fluidc(g, a.k, derive_seed(seed, 1000000 + i)));
      }
      std::ostringstream out;
      out << "m,ms_per_pair,propagation_steps_per_pair,pairs,repetitions\n";
      for (int m : {0, a.k, a.k * a.k}) {
        ModelConfig mc;
        mc.k = a.k;
        mc.m = m;
        mc.init_seed = seed;
        std::optional<PSimGnn> model;
        if (!a.checkpoint.empty()) {
          PSimGnn loaded = load_model(a.checkpoint);
          if (loaded.config().k == a.k && loaded.config().m == m) model.emplace(std::move(loaded));
        }
        if (!model) model.emplace(mc);
        ForwardStats stats;
        for (std::size_t p = 0; p < a.pairs; ++p) {
          Tape tape(false);
          model->forward(tape, parts[2 * p], parts[2 * p + 1], &stats);
        }
        const double ms = bench_timing(
            [&](std::size_t p) {
              Tape tape(false);
              model->forward(tape, parts[2 * p], parts[2 * p + 1]);
            },
            a.pairs, a.repetitions);
        out << m << ',' << number(ms) << ','
            << number(static_cast<double>(stats.propagation_steps) / static_cast<double>(a.pairs)) << ','
            << a.pairs << ',' << a.repetitions << '\n';
      }
      if (a.out.empty()) {
        std::cout << out.str();
      } else {
        write_text_file_atomic(output_path(a.out), out.str());
      }
    };
  });
}

// ---- gradcheck -----------------------------------------------------------------

struct GradcheckArgs {
  std::string model_config;
  std::size_t n = 10;
  double tolerance = 1e-4;
  double jitter = 0.1;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a, std::function<void()>& action, int& status,
                  const std::uint64_t& seed) {
  auto* sub = app.add_subcommand("gradcheck", "Finite-difference audit of every model gradient");
  sub->add_option("--model-config", a.model_config, "Model config JSON (defaults when omitted)");
  sub->add_option("--n", a.n, "Nodes per random test graph")->check(CLI::PositiveNumber);
  sub->add_option("--tolerance", a.tolerance, "Pass threshold on the max relative error");
  sub->add_option("--jitter", a.jitter, "Uniform noise added to the initial parameters")
      ->check(CLI::NonNegativeNumber);
  sub->callback([&] {
    action = [&] {
      const ModelConfig mc = read_model_config(a.model_config);
      PSimGnn model(mc);
      Rng jitter(derive_seed(seed, 5));
      model.parameters().perturb(a.jitter, jitter);
      const Graph g1 = generate_ba(a.n, 1, derive_seed(seed, 1), "g1");
      const Graph g2 = generate_ba(a.n, 1, derive_seed(seed, 2), "g2");
      const PartitionResult p1 = fluidc(g1, mc.k, derive_seed(seed, 3));
      const PartitionResult p2 = fluidc(g2, mc.k, derive_seed(seed, 4));
      auto params = model.parameters().all();
      const auto report = grad_check(
          [&](Tape& t) { return model.forward(t, p1, p2); }, params, 1e-5, 1e-6);
      std::cout << "coordinates " << report.coordinates << '\n'
                << "step_refined " << report.refined << '\n'
                << "max_relative_error " << number(report.max_relative_error) << '\n'
                << "worst_parameter " << report.worst_parameter << '[' << report.worst_index << "]\n"
                << "status " << (report.max_relative_error < a.tolerance ? "pass" : "fail") << '\n';
      status = report.max_relative_error < a.tolerance ? kOk : kNumericFailure;
    };
  });
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kArgument:
      return kUsage;
    case ErrorKind::kNumeric:
      return kNumericFailure;
    default:
      return kDataFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partition-based graph similarity: datasets, GED, training and evaluation"};
  app.require_subcommand(1);
  Globals globals;
  std::uint64_t seed = 0;
  app.add_option("--threads", globals.threads, "Worker threads for pair-batch work")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for every random choice");
  app.add_flag("-v,--verbose", globals.verbose, "Progress on stderr");

  std::function<void()> action;
  int status = kOk;
  GenArgs gen;
  gen.options.seed = 0;
  PartitionArgs partition;
  GedArgs ged;
  TrainArgs train_args;
  EvalArgs eval_args;
  RankArgs rank;
  BenchArgs bench;
  GradcheckArgs gradcheck;
  add_gen(app, gen, action, globals);
  add_partition(app, partition, action, seed);
  add_ged(app, ged, action);
  add_train(app, train_args, action, globals, seed);
  add_eval(app, eval_args, action, globals);
  add_rank(app, rank, action, globals);
  add_bench(app, bench, action, seed);
  add_gradcheck(app, gradcheck, action, status, seed);
  // Subcommands also accept --seed after their name.
  for (auto* sub : app.get_subcommands({})) {
    sub->add_option("--seed", seed, "Seed for every random choice");
    sub->add_option("--threads", globals.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", globals.verbose, "Progress on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  gen.options.seed = seed;
  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "error [" << e.module() << ", " << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error [" << kModule << "]: " << e.what() << '\n';
    return kDataFailure;
  }
  return status;
}
