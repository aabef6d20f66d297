// Command-line front end: ingest or generate samples, solve the
// normalization fixpoint, emit estimate reports, and run the verification
// suites. Every output embeds a manifest that reproduces the run.
//
// Exit codes: 0 ok, 2 malformed input or parameters, 3 inconsistent
// sample stream, 4 verification mismatch, 1 anything else.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "massweight/count_table.hpp"
#include "massweight/estimator.hpp"
#include "massweight/format.hpp"
#include "massweight/json_io.hpp"
#include "massweight/oracle.hpp"
#include "massweight/rng.hpp"
#include "massweight/synthetic.hpp"
#include "massweight/version.hpp"
#include "massweight/zsolver.hpp"

namespace mw = massweight;

namespace {

unsigned thread_cap() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("MASSWEIGHT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0 && v < 1024) hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return hw;
}

mw::SolveMethod method_from_string(const std::string& s) {
  if (s == "picard") return mw::SolveMethod::picard;
  if (s == "secant") return mw::SolveMethod::secant;
  if (s == "newton") return mw::SolveMethod::newton;
  throw mw::ParseError("unknown method '" + s + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mw::ParseError("cannot open output '" + path + "'");
  out << text;
}

void emit(const std::string& text, const std::string& output_path) {
  if (output_path.empty())
    std::cout << text;
  else
    write_text(output_path, text);
}

mw::MassTable load_table(const std::string& path) {
  mw::MassTable table = mw::read_sample_csv_file(path);
  if (table.empty()) throw mw::ParseError("'" + path + "' contains no sample rows");
  return table;
}

// Flags shared by compare/generate; --config supplies defaults, explicit
// flags override.
struct SyntheticFlags {
  std::string config_path;
  std::string regime;
  std::optional<double> a, b;
  std::optional<std::uint64_t> n_draws;
  std::optional<int> m;
  std::optional<std::uint64_t> seed;

  mw::SyntheticConfig resolve() const {
    mw::SyntheticConfig cfg;
    bool have_base = false;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw mw::ParseError("cannot open config '" + config_path + "'");
      mw::json j;
      try {
        in >> j;
      } catch (const mw::json::exception& e) {
        throw mw::ParseError(std::string("bad config JSON: ") + e.what());
      }
      cfg = mw::synthetic_config_from_json(j);
      have_base = true;
    }
    if (!regime.empty()) {
      cfg = mw::regime_config(mw::regime_from_string(regime));
      have_base = true;
    }
    if (!have_base && (!a || !b || !n_draws))
      throw mw::ParseError("need --regime, --config, or all of --a/--b/--n");
    if (a) cfg.dist.a = *a;
    if (b) cfg.dist.b = *b;
    if (n_draws) cfg.n_draws = *n_draws;
    if (m) cfg.m = *m;
    if (seed) cfg.seed = *seed;
    cfg.dist.validate();
    if (cfg.n_draws == 0) throw mw::ParseError("n_draws must be positive");
    if (cfg.m < 0) throw mw::ParseError("m must be nonnegative");
    // custom parameters lose the preset tag and its precomputed mass
    if (a || b || n_draws)
      cfg.expected_mass_on_sample = mw::expected_sampled_mass(cfg.dist, cfg.n_draws);
    return cfg;
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (synthetic schema)");
    cmd->add_option("--regime", regime, "preset: concentrated|intermediate|tail_dominated")
        ->check(CLI::IsMember({"concentrated", "intermediate", "tail_dominated"}));
    auto opt_a = cmd->add_option("--a", "tail scale");
    auto opt_b = cmd->add_option("--b", "tail exponent");
    auto opt_n = cmd->add_option("--n", "draws per sample");
    auto opt_m = cmd->add_option("--m", "test-function oscillation index");
    auto opt_s = cmd->add_option("--seed", "RNG seed");
    opt_a->each([this](const std::string& v) { a = std::stod(v); });
    opt_b->each([this](const std::string& v) { b = std::stod(v); });
    opt_n->each([this](const std::string& v) { n_draws = std::stoull(v); });
    opt_m->each([this](const std::string& v) { m = std::stoi(v); });
    opt_s->each([this](const std::string& v) { seed = std::stoull(v); });
  }
};

// ---------------------------------------------------------------------------

int cmd_estimate(const std::string& input, const std::string& method,
                 const std::string& output) {
  const mw::MassTable table = load_table(input);
  const mw::SolveOptions opts{.method = method_from_string(method)};
  const mw::ZSolution zsol = mw::solve_z(table, opts);
  const mw::EstimateReport rep = mw::make_report(table, zsol);

  mw::RunManifest manifest;
  manifest.command = "estimate";
  manifest.config = {{"input", input}, {"method", method}};
  manifest.method = method;
  if (!output.empty()) manifest.outputs.push_back(output);

  mw::json out = mw::to_json(rep);
  out["manifest"] = mw::to_json(manifest);
  out["iterations"] = zsol.iterations;
  out["method"] = mw::to_string(zsol.method);
  out["residual"] = zsol.residual;
  out["summary"] = {{"n_draws", zsol.summary.n_draws},
                    {"n_distinct", zsol.summary.n_distinct},
                    {"n_singletons", zsol.summary.n_singletons},
                    {"mass_on_sample", zsol.summary.mass_on_sample}};
  emit(out.dump(2) + "\n", output);
  return 0;
}

int cmd_solve(const std::string& input, const std::string& method, const std::string& init,
              const std::string& output) {
  const mw::MassTable table = load_table(input);
  const mw::InitKind init_kind =
      (init == "ps") ? mw::InitKind::mass_on_sample : mw::InitKind::good_turing;

  mw::RunManifest manifest;
  manifest.command = "solve";
  manifest.config = {{"input", input}, {"method", method}, {"init", init}};
  manifest.method = method;
  if (!output.empty()) manifest.outputs.push_back(output);

  std::string text = "# manifest: " + mw::to_json(manifest).dump() + "\n";

  std::vector<mw::TraceRow> trace;
  mw::SolveOptions opts{.method = method_from_string(method), .init = init_kind};
  const mw::ZSolution sol = mw::solve_z(table, opts, &trace);
  text += "case: " + std::string(mw::to_string(sol.boundary)) + "\n";

  if (sol.boundary != mw::BoundaryCase::regular) {
    text += "z: " + mw::format_g17(sol.z) + "\n";
    emit(text, output);
    return 0;
  }

  text += "method: " + std::string(mw::to_string(sol.method)) + "\n";
  text += "init: " + init + "\n";
  text += "k,z,phi_z,residual\n";
  for (const auto& row : trace)
    text += std::to_string(row.k) + "," + mw::format_g17(row.z) + "," +
            mw::format_g17(row.map_z) + "," + mw::format_g17(row.residual) + "\n";

  // iteration counts under both documented initializers
  mw::SolveOptions gt = opts;
  gt.init = mw::InitKind::good_turing;
  mw::SolveOptions ps = opts;
  ps.init = mw::InitKind::mass_on_sample;
  text += "iterations(good-turing): " + std::to_string(mw::solve_z(table, gt).iterations) + "\n";
  text += "iterations(ps): " + std::to_string(mw::solve_z(table, ps).iterations) + "\n";
  text += "z: " + mw::format_g17(sol.z) + "\n";
  text += "residual: " + mw::format_g17(sol.residual) + "\n";
  emit(text, output);
  return 0;
}

int cmd_compare(const SyntheticFlags& flags, std::uint64_t replicates,
                const std::string& csv_path, const std::string& output) {
  const mw::SyntheticConfig cfg = flags.resolve();
  if (replicates < 2) throw mw::ParseError("--replicates must be >= 2");

  mw::RunManifest manifest;
  manifest.command = "compare";
  manifest.config = mw::to_json(cfg);
  manifest.config["replicates"] = replicates;
  manifest.seed = cfg.seed;
  manifest.method = "newton";
  if (!csv_path.empty()) manifest.outputs.push_back(csv_path);
  if (!output.empty()) manifest.outputs.push_back(output);

  const mw::SyntheticSampler sampler{cfg.dist, cfg.m};
  const auto rows =
      mw::run_replicates(sampler, cfg.n_draws, replicates, cfg.seed, thread_cap());
  const mw::ReplicateStats stats = mw::summarize_replicates(rows);

  if (!csv_path.empty()) {
    std::string csv = "# manifest: " + mw::to_json(manifest).dump() + "\n";
    csv += "replicate,case,z,fbar_new,fbar_blue\n";
    for (std::size_t r = 0; r < rows.size(); ++r)
      csv += std::to_string(r) + "," + mw::to_string(rows[r].boundary) + "," +
             mw::format_g17(rows[r].z) + "," + mw::format_g17(rows[r].fbar_new) + "," +
             mw::format_g17(rows[r].fbar_blue) + "\n";
    write_text(csv_path, csv);
  }

  mw::json summary{{"manifest", mw::to_json(manifest)},
                   {"replicates", stats.replicates},
                   {"mean_new", stats.nw.mean},
                   {"var_new", stats.nw.variance},
                   {"se_new", stats.nw.std_error},
                   {"mean_blue", stats.blue.mean},
                   {"var_blue", stats.blue.variance},
                   {"se_blue", stats.blue.std_error},
                   {"variance_ratio_new_over_blue", stats.variance_ratio_new_over_blue},
                   {"expected_sampled_mass", cfg.expected_mass_on_sample}};
  emit(summary.dump(2) + "\n", output);
  return 0;
}

int cmd_oracle(int size, std::uint64_t draws, std::uint64_t trials, std::uint64_t seed,
               const std::string& output) {
  if (size < 1 || size > 6) throw mw::ParseError("--size must be in [1,6]");
  if (draws < 1) throw mw::ParseError("--draws must be >= 1");
  if (trials < 1) throw mw::ParseError("--trials must be >= 1");

  mw::AgreementOptions opt;
  opt.max_size = size;
  opt.max_draws = draws;
  opt.trials = trials;
  opt.seed = seed;
  const mw::AgreementResult res = mw::run_oracle_agreement(opt);

  mw::RunManifest manifest;
  manifest.command = "oracle";
  manifest.config = {{"size", size}, {"draws", draws}, {"trials", trials}};
  manifest.seed = seed;
  if (!output.empty()) manifest.outputs.push_back(output);

  std::string text = "# manifest: " + mw::to_json(manifest).dump() + "\n";
  text += "oracle agreement: trials=" + std::to_string(trials) +
          " max_size=" + std::to_string(size) + " max_draws=" + std::to_string(draws) +
          " seed=" + std::to_string(seed) + " tol=" + mw::format_g17(opt.tol) + "\n";
  text += "worst |delta|: " + mw::format_g17(res.worst_abs_diff) + " (" + res.worst_what +
          ")\n";
  if (res.worst_masses.size() > 0) {
    text += "worst domain: n=" + std::to_string(res.worst_draws) + " masses=[";
    for (Eigen::Index i = 0; i < res.worst_masses.size(); ++i)
      text += (i ? "," : "") + mw::format_g17(res.worst_masses(i));
    text += "]\n";
  }
  text += res.pass ? "PASS\n" : "FAIL\n";
  emit(text, output);
  return res.pass ? 0 : 4;
}

int cmd_generate(const SyntheticFlags& flags, const std::string& output) {
  const mw::SyntheticConfig cfg = flags.resolve();

  mw::RunManifest manifest;
  manifest.command = "generate";
  manifest.config = mw::to_json(cfg);
  manifest.seed = cfg.seed;
  if (!output.empty()) manifest.outputs.push_back(output);

  std::string text = "# manifest: " + mw::to_json(manifest).dump() + "\n";
  text += "key,mass,fvalue\n";
  const mw::SyntheticSampler sampler{cfg.dist, cfg.m};
  mw::SplitMix64 rng = mw::stream_rng(cfg.seed, 0);
  for (std::uint64_t j = 0; j < cfg.n_draws; ++j) {
    const mw::SampleRecord rec = sampler(rng);
    text += mw::hex_encode(rec.key) + "," + mw::format_g17(rec.mass) + "," +
            mw::format_g17(rec.fvalue) + "\n";
  }
  emit(text, output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mass-aware unbiased estimation for averages over discrete distributions"};
  app.set_version_flag("--version", std::string(mw::kVersion));
  app.require_subcommand(1);

  std::string input, output, method = "newton", init = "good-turing", csv_path;
  std::uint64_t replicates = 1000;
  int oracle_size = 4;
  std::uint64_t oracle_draws = 6, oracle_trials = 200, oracle_seed = 1;
  SyntheticFlags compare_flags, generate_flags;

  auto* est = app.add_subcommand("estimate", "estimate the average from a sample CSV");
  est->add_option("input", input, "sample CSV")->required();
  est->add_option("--method", method, "picard|secant|newton")
      ->check(CLI::IsMember({"picard", "secant", "newton"}));
  est->add_option("--output", output, "write JSON report here instead of stdout");

  auto* slv = app.add_subcommand("solve", "print the fixpoint iteration trace");
  slv->add_option("input", input, "sample CSV")->required();
  slv->add_option("--method", method, "picard|secant|newton")
      ->check(CLI::IsMember({"picard", "secant", "newton"}));
  slv->add_option("--init", init, "good-turing|ps starting guess")
      ->check(CLI::IsMember({"good-turing", "ps"}));
  slv->add_option("--output", output, "write trace here instead of stdout");

  auto* cmp = app.add_subcommand("compare", "replicate experiment on a synthetic tail");
  compare_flags.add_to(cmp);
  cmp->add_option("--replicates", replicates, "number of replicates");
  cmp->add_option("--csv", csv_path, "write per-replicate estimates CSV here");
  cmp->add_option("--output", output, "write summary JSON here instead of stdout");

  auto* orc = app.add_subcommand("oracle", "formula-vs-enumeration verification");
  orc->add_option("--size", oracle_size, "max domain size (<= 6)");
  orc->add_option("--draws", oracle_draws, "max draws per trial");
  orc->add_option("--trials", oracle_trials, "number of random domains");
  orc->add_option("--seed", oracle_seed, "RNG seed");
  orc->add_option("--output", output, "write report here instead of stdout");

  auto* gen = app.add_subcommand("generate", "dump a synthetic sample stream CSV");
  generate_flags.add_to(gen);
  gen->add_option("--output", output, "write CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (est->parsed()) return cmd_estimate(input, method, output);
    if (slv->parsed()) return cmd_solve(input, method, init, output);
    if (cmp->parsed()) return cmd_compare(compare_flags, replicates, csv_path, output);
    if (orc->parsed())
      return cmd_oracle(oracle_size, oracle_draws, oracle_trials, oracle_seed, output);
    if (gen->parsed()) return cmd_generate(generate_flags, output);
  } catch (const mw::MassMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mw::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mw::InvalidRecord& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
