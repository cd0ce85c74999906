#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "retrobranch/bench.hpp"
#include "retrobranch/branchers.hpp"
#include "retrobranch/errors.hpp"
#include "retrobranch/imitation.hpp"
#include "retrobranch/metadata.hpp"
#include "retrobranch/trainer.hpp"

using namespace retrobranch;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

struct GenOptions {
  std::string problem_class = "set_covering";
  GeneratorSpec spec;
};

void add_generator_options(CLI::App* cmd, GenOptions& g) {
  cmd->add_option("--class", g.problem_class, "set_covering | combinatorial_auction | capacitated_facility_location | "
                                              "maximum_independent_set")
      ->capture_default_str();
  cmd->add_option("--rows", g.spec.rows, "set covering rows")->capture_default_str();
  cmd->add_option("--cols", g.spec.cols, "set covering columns")->capture_default_str();
  cmd->add_option("--density", g.spec.density, "set covering density")->capture_default_str();
  cmd->add_option("--items", g.spec.items)->capture_default_str();
  cmd->add_option("--bids", g.spec.bids)->capture_default_str();
  cmd->add_option("--customers", g.spec.customers)->capture_default_str();
  cmd->add_option("--facilities", g.spec.facilities)->capture_default_str();
  cmd->add_option("--capacity-ratio", g.spec.capacity_ratio)->capture_default_str();
  cmd->add_option("--nodes", g.spec.nodes, "independent set graph nodes")->capture_default_str();
  cmd->add_option("--affinity", g.spec.affinity)->capture_default_str();
}

GeneratorSpec finish_spec(const GenOptions& g) {
  GeneratorSpec s = g.spec;
  s.problem_class = problem_class_from_string(g.problem_class);
  return s;
}

std::string spec_json(const GeneratorSpec& s) {
  nlohmann::ordered_json j;
  j["class"] = to_string(s.problem_class);
  switch (s.problem_class) {
    case ProblemClass::set_covering:
      j["rows"] = s.rows;
      j["cols"] = s.cols;
      j["density"] = s.density;
      break;
    case ProblemClass::combinatorial_auction:
      j["items"] = s.items;
      j["bids"] = s.bids;
      break;
    case ProblemClass::capacitated_facility_location:
      j["customers"] = s.customers;
      j["facilities"] = s.facilities;
      j["capacity_ratio"] = s.capacity_ratio;
      break;
    default:
      j["nodes"] = s.nodes;
      j["affinity"] = s.affinity;
      break;
  }
  return j.dump();
}

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (item.name == "++" || item.name == "--" || item.name.empty()) continue;
    if (!item.parents.empty()) throw ParameterError("config file '" + path + "': sections are not supported");
    auto inputs = item.inputs;
    inputs.erase(std::find_if(inputs.begin(), inputs.end(), [](const std::string& s) { return s.starts_with('#'); }),
                 inputs.end());
    if (inputs.size() != 1) throw ParameterError("config key '" + item.name + "' needs exactly one value");
    kv[item.name] = inputs.front();
  }
  return kv;
}

std::string take(std::map<std::string, std::string>& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::string v = it->second;
  kv.erase(it);
  return v;
}

template <class T>
T take_num(std::map<std::string, std::string>& kv, const std::string& key, T fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::istringstream in(it->second);
  T v{};
  if (!(in >> v) || !in.eof()) throw ParameterError("config key '" + key + "': cannot parse '" + it->second + "'");
  kv.erase(it);
  return v;
}

std::unique_ptr<BranchingPolicy> make_policy(const std::string& spec) {
  if (spec.ends_with(".qnet.json"))
    return std::make_unique<NeuralBranching>(std::make_shared<const QNetwork<float>>(load_qnet(spec)));
  return make_classical_policy(spec);
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ParameterError("--out is required");
  fs::create_directories(dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string argv_line(int argc, char** argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) s += (i > 1 ? " " : "") + std::string(argv[i]);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branch-and-bound MILP solver with learned retrospective branching"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--config", g.config, "key = value configuration file (train-rl)");
  app.add_option("--out", g.out, "output file or directory");
  app.fallthrough();

  GenOptions gen;
  long count = 1;
  auto* generate_cmd = app.add_subcommand("generate", "write random instances");
  add_generator_options(generate_cmd, gen);
  generate_cmd->add_option("--count", count, "number of instances")->capture_default_str();

  std::string instance_path, policy = "pb", selector = "best_first", tree_out;
  long max_nodes = -1;
  double time_limit = 3600.0;
  auto* solve_cmd = app.add_subcommand("solve", "solve one instance and print its record");
  solve_cmd->add_option("instance", instance_path, "instance .milp.json")->required();
  solve_cmd->add_option("--policy", policy, "sb | pb | random | mostfrac | <checkpoint>.qnet.json")->capture_default_str();
  solve_cmd->add_option("--selector", selector, "best_first | dfs | bfs")->capture_default_str();
  solve_cmd->add_option("--max-nodes", max_nodes)->capture_default_str();
  solve_cmd->add_option("--time-limit", time_limit)->capture_default_str();
  solve_cmd->add_option("--tree-out", tree_out, "write the search tree as JSON");

  auto* train_rl_cmd = app.add_subcommand("train-rl", "train a Q-network with retrospective trajectories");

  long num_train = 10000, num_valid = 2000, label_max_nodes = -1;
  double explore_prob = 0.05;
  auto* label_cmd = app.add_subcommand("label", "collect strong-branching labels for imitation");
  add_generator_options(label_cmd, gen);
  label_cmd->add_option("--num-train", num_train)->capture_default_str();
  label_cmd->add_option("--num-valid", num_valid)->capture_default_str();
  label_cmd->add_option("--explore-prob", explore_prob)->capture_default_str();
  label_cmd->add_option("--max-nodes", label_max_nodes)->capture_default_str();

  std::string data_dir;
  IlConfig il;
  auto* train_il_cmd = app.add_subcommand("train-il", "imitation-train a Q-network on strong-branching labels");
  train_il_cmd->add_option("--data", data_dir, "directory written by `label`")->required();
  train_il_cmd->add_option("--epochs", il.epochs)->capture_default_str();
  train_il_cmd->add_option("--batch-size", il.batch_size)->capture_default_str();
  train_il_cmd->add_option("--lr", il.lr)->capture_default_str();
  train_il_cmd->add_option("--emb-dim", il.net.emb)->capture_default_str();

  std::string instance_dir;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a policy over an instance directory");
  evaluate_cmd->add_option("--policy", policy)->capture_default_str();
  evaluate_cmd->add_option("--instances", instance_dir)->required();
  evaluate_cmd->add_option("--selector", selector)->capture_default_str();
  evaluate_cmd->add_option("--max-nodes", max_nodes)->capture_default_str();
  evaluate_cmd->add_option("--time-limit", time_limit)->capture_default_str();

  std::string baseline_csv, candidate_csv;
  auto* compare_cmd = app.add_subcommand("compare", "compare two evaluation CSVs");
  compare_cmd->add_option("baseline", baseline_csv)->required();
  compare_cmd->add_option("candidate", candidate_csv)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  RunMetadata meta;
  meta.command = argv_line(argc, argv);
  meta.seed = g.seed;
  try {
    if (!g.config.empty() && !train_rl_cmd->parsed()) throw ParameterError("--config is only read by train-rl");

    if (generate_cmd->parsed()) {
      if (count <= 0) throw ParameterError("--count must be positive");
      ensure_dir(g.out);
      GeneratorSpec spec = finish_spec(gen);
      for (long i = 0; i < count; ++i) {
        spec.seed = g.seed + static_cast<std::uint64_t>(i);
        MilpInstance inst = generate(spec);
        inst.name = "inst" + std::to_string(i);
        write_instance(inst, (fs::path(g.out) / (inst.name + ".milp.json")).string());
      }
      meta.config_text = spec_json(spec);
      meta.fields["generator"] = spec_json(spec);
      meta.fields["count"] = std::to_string(count);
      write_metadata(meta, (fs::path(g.out) / "metadata.json").string());
      return 0;
    }

    if (solve_cmd->parsed()) {
      NamedInstance inst{fs::path(instance_path).filename().string(), read_instance(instance_path)};
      if (inst.id.ends_with(".milp.json")) inst.id.resize(inst.id.size() - 10);
      auto pol = make_policy(policy);
      SolveOptions opts;
      opts.selector = node_selector_from_string(selector);
      opts.seed = g.seed;
      opts.limits.max_nodes = max_nodes;
      opts.limits.max_seconds = time_limit;
      const EvalRecord rec = evaluate_one(inst, *pol, opts.selector, g.seed, opts.limits);
      const std::string csv = eval_csv_header() + "\n" + eval_csv_row(rec) + "\n";
      std::cout << csv;
      if (!tree_out.empty()) write_text(tree_out, dump_tree_json(solve(inst.instance, *make_policy(policy), opts).tree));
      meta.config_text = "policy=" + policy + ";selector=" + selector + ";max_nodes=" + std::to_string(max_nodes);
      if (!g.out.empty()) {
        write_text(g.out, csv);
        write_metadata(meta, g.out + ".meta.json");
      } else {
        std::cerr << meta.to_json();
      }
      return 0;
    }

    if (train_rl_cmd->parsed()) {
      if (g.config.empty()) throw ParameterError("train-rl needs --config");
      ensure_dir(g.out);
      auto kv = read_config(g.config);
      GeneratorSpec spec;
      spec.problem_class = problem_class_from_string(take(kv, "problem_class", "set_covering"));
      spec.rows = take_num(kv, "rows", 30);
      spec.cols = take_num(kv, "cols", 60);
      spec.density = take_num(kv, "density", 0.2);
      spec.items = take_num(kv, "items", spec.items);
      spec.bids = take_num(kv, "bids", spec.bids);
      spec.customers = take_num(kv, "customers", spec.customers);
      spec.facilities = take_num(kv, "facilities", spec.facilities);
      spec.capacity_ratio = take_num(kv, "capacity_ratio", spec.capacity_ratio);
      spec.nodes = take_num(kv, "nodes", spec.nodes);
      spec.affinity = take_num(kv, "affinity", spec.affinity);
      const long n_valid = take_num(kv, "num_valid", 50L);
      const std::uint64_t train_seed = take_num<std::uint64_t>(kv, "instance_seed", 0);
      const std::uint64_t valid_seed = take_num<std::uint64_t>(kv, "valid_seed", 1000000);
      TrainerConfig cfg;
      cfg.seed = g.seed;
      apply_overrides(cfg, kv);
      cfg.validate();

      std::vector<MilpInstance> valid;
      for (long i = 0; i < n_valid; ++i) {
        GeneratorSpec s = spec;
        s.seed = valid_seed + static_cast<std::uint64_t>(i);
        valid.push_back(generate(s));
      }
      auto stream = [&](long k) {
        GeneratorSpec s = spec;
        s.seed = train_seed + static_cast<std::uint64_t>(k);
        return generate(s);
      };
      const fs::path out(g.out);
      const TrainRlResult r = train_rl(cfg, stream, valid, (out / "train_log.csv").string());

      meta.config_text = describe(cfg) + "generator = " + spec_json(spec) + "\nnum_valid = " + std::to_string(n_valid) +
                         "\ninstance_seed = " + std::to_string(train_seed) + "\nvalid_seed = " +
                         std::to_string(valid_seed) + "\n";
      nlohmann::ordered_json ck;
      ck["config_hash"] = "fnv1a64:" + hex64(fnv1a64(meta.config_text));
      ck["best_epoch"] = r.best_epoch;
      ck["val_nodes"] = r.best_val_nodes;
      save_qnet(r.best, (out / "best.qnet.json").string(), ck.dump());
      save_qnet(r.last, (out / "last.qnet.json").string(), ck.dump());
      std::string lengths = "episode,full_episode_length\n";
      for (std::size_t i = 0; i < r.episode_lengths.size(); ++i)
        lengths += std::to_string(i) + "," + std::to_string(r.episode_lengths[i]) + "\n";
      write_text((out / "episode_lengths.csv").string(), lengths);
      std::string tl = "trajectory,length\n";
      for (std::size_t i = 0; i < r.trajectory_lengths.size(); ++i)
        tl += std::to_string(i) + "," + std::to_string(r.trajectory_lengths[i]) + "\n";
      write_text((out / "trajectory_lengths.csv").string(), tl);
      meta.fields["generator"] = spec_json(spec);
      meta.fields["best_epoch"] = std::to_string(r.best_epoch);
      write_metadata(meta, (out / "metadata.json").string());
      std::cout << "best epoch " << r.best_epoch << ", validation mean nodes " << r.best_val_nodes << "\n";
      return 0;
    }

    if (label_cmd->parsed()) {
      ensure_dir(g.out);
      GeneratorSpec spec = finish_spec(gen);
      LabelConfig lc;
      lc.explore_prob = explore_prob;
      lc.seed = g.seed;
      lc.max_nodes = label_max_nodes;
      long used_train = 0, used_valid = 0;
      auto train_stream = [&](long k) {
        GeneratorSpec s = spec;
        s.seed = g.seed * 1000003ULL + static_cast<std::uint64_t>(k);
        return generate(s);
      };
      auto valid_stream = [&](long k) {
        GeneratorSpec s = spec;
        s.seed = g.seed * 1000003ULL + 500000 + static_cast<std::uint64_t>(k);
        return generate(s);
      };
      const auto train = label_sb(train_stream, num_train, lc, &used_train);
      LabelConfig lv = lc;
      lv.seed = g.seed + 1;
      const auto valid = label_sb(valid_stream, num_valid, lv, &used_valid);
      const fs::path out(g.out);
      save_dataset(train, (out / "train.il.json").string());
      save_dataset(valid, (out / "valid.il.json").string());
      meta.config_text = spec_json(spec) + ";explore_prob=" + std::to_string(explore_prob);
      meta.fields["generator"] = spec_json(spec);
      meta.fields["train_instances"] = std::to_string(used_train);
      meta.fields["valid_instances"] = std::to_string(used_valid);
      write_metadata(meta, (out / "metadata.json").string());
      return 0;
    }

    if (train_il_cmd->parsed()) {
      ensure_dir(g.out);
      const fs::path data(data_dir);
      const auto train = load_dataset((data / "train.il.json").string());
      const auto valid = fs::exists(data / "valid.il.json") ? load_dataset((data / "valid.il.json").string())
                                                             : std::vector<LabelledSample>{};
      il.seed = g.seed;
      const IlResult r = train_il(train, valid, il);
      const fs::path out(g.out);
      std::string log = il_log_header() + "\n";
      for (const auto& e : r.log) log += il_log_row(e) + "\n";
      write_text((out / "il_log.csv").string(), log);
      nlohmann::ordered_json ck;
      ck["best_epoch"] = r.best_epoch;
      ck["val_accuracy"] = r.best_val_accuracy;
      save_qnet(r.best, (out / "best.qnet.json").string(), ck.dump());
      std::ostringstream cfg;
      cfg << "epochs=" << il.epochs << ";batch_size=" << il.batch_size << ";lr=" << il.lr << ";emb=" << il.net.emb;
      meta.config_text = cfg.str();
      write_metadata(meta, (out / "metadata.json").string());
      std::cout << "best epoch " << r.best_epoch << ", validation accuracy " << r.best_val_accuracy << "\n";
      return 0;
    }

    if (evaluate_cmd->parsed()) {
      const auto insts = load_instance_dir(instance_dir);
      auto pol = make_policy(policy);
      SolveLimits lim;
      lim.max_nodes = max_nodes;
      lim.max_seconds = time_limit;
      const std::string csv = eval_csv(evaluate(insts, *pol, node_selector_from_string(selector), g.seed, lim));
      meta.config_text = "policy=" + policy + ";selector=" + selector + ";max_nodes=" + std::to_string(max_nodes);
      if (g.out.empty()) {
        std::cout << csv;
        std::cerr << meta.to_json();
      } else {
        write_text(g.out, csv);
        write_metadata(meta, g.out + ".meta.json");
      }
      return 0;
    }

    if (compare_cmd->parsed()) {
      auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParameterError("cannot read " + path);
        return std::string(std::istreambuf_iterator<char>(in), {});
      };
      const auto report =
          format_report(compare(parse_eval_csv(slurp(baseline_csv)), parse_eval_csv(slurp(candidate_csv))));
      meta.config_text = baseline_csv + ";" + candidate_csv;
      if (g.out.empty()) {
        std::cout << report;
      } else {
        write_text(g.out, report);
        write_metadata(meta, g.out + ".meta.json");
      }
      return 0;
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
