#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "attnlip/bounds.hpp"
#include "attnlip/parallel.hpp"
#include "attnlip/random.hpp"
#include "attnlip/softmax.hpp"
#include "attnlip/trainer.hpp"
#include "io.hpp"

namespace attnlip::cli {
namespace {

Json power_json(const PowerIterationOptions& p) {
  Json j;
  j["tol"] = p.tol;
  j["max_iter"] = p.max_iter;
  j["seed"] = p.seed;
  return j;
}

Json metadata(const std::string& command, std::uint64_t seed) {
  Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["seed"] = seed;
  return j;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json ingredients_json(const BoundIngredients& in) {
  Json j;
  j["wv_norm"] = in.wv_norm;
  j["wq_norm"] = in.wq_norm;
  j["wk_norm"] = in.wk_norm;
  j["a_norm"] = in.a_norm;
  j["x_norm"] = in.x_norm;
  j["x_frobenius"] = in.x_frobenius;
  j["p_norm"] = in.p_norm;
  j["max_g1"] = in.max_g1;
  j["max_sigma1"] = in.max_sigma1;
  j["radius"] = in.radius;
  j["tokens"] = in.tokens;
  return j;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
  std::string weights;
  std::string input;
  std::optional<double> radius;
  std::string exact = "on";
  std::string out;
  std::uint64_t seed = 0;
  double max_entries = kDefaultJacobianBudget;
};

int cmd_certify(const CertifyArgs& a, std::ostream& out) {
  const WeightsFile weights = parse_weights(read_json_file(a.weights));
  InputSequence x = parse_input(read_json_file(a.input));
  if (a.radius) {
    try {
      x = InputSequence(x.x(), *a.radius);
    } catch (const Error& e) {
      throw ValidationError(std::string("--radius: ") + e.what());
    }
  }
  if (x.model_dim() != weights.model_dim)
    throw ValidationError("input has " + std::to_string(x.model_dim()) + " columns but model_dim is " +
                          std::to_string(weights.model_dim));

  CertifyOptions opts;
  opts.exact = a.exact == "on";
  opts.max_jacobian_entries = a.max_entries;
  opts.power.seed = a.seed;

  // Heads of one layer are certified together; every head sees the given input.
  std::map<std::size_t, std::vector<const LabeledHead*>> by_layer;
  for (const auto& h : weights.heads) by_layer[h.layer].push_back(&h);

  Json report = metadata("certify", a.seed);
  report["power_iteration"] = power_json(opts.power);
  report["max_jacobian_entries"] = opts.max_jacobian_entries;
  report["ball_radius"] = opts.ball_radius;
  report["exact_requested"] = opts.exact;
  Json input;
  input["tokens"] = x.tokens();
  input["model_dim"] = x.model_dim();
  input["radius"] = x.effective_radius();
  report["input"] = input;

  bool capacity_exceeded = false;
  std::size_t violations = 0;
  Json heads = Json::array();
  Json aggregates = Json::array();
  for (const auto& [layer, members] : by_layer) {
    std::vector<AttentionHeadWeights> ws;
    for (const auto* m : members) ws.push_back(m->weights);
    const CertificationReport cr = certify(x, ws, opts);
    capacity_exceeded = capacity_exceeded || cr.capacity_exceeded;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const BoundReport& r = cr.heads[i];
      Json h;
      h["layer"] = members[i]->layer;
      h["head"] = members[i]->head;
      h["exact"] = optional_number(r.exact);
      h["ours_eq4"] = r.ours_eq4;
      h["ours_g1"] = r.ours_g1;
      h["ours_appendix_c"] = r.ours_appendix_c;
      h["specformer"] = r.specformer;
      h["castin"] = r.castin;
      h["ingredients"] = ingredients_json(r.ingredients);
      const auto issues = check_bound_report(r);
      violations += issues.size();
      h["violations"] = issues;
      heads.push_back(std::move(h));
    }
    const MultiheadAggregate& g = cr.aggregate;
    Json agg;
    agg["layer"] = layer;
    agg["exact_root_sum_square"] = optional_number(g.exact);
    agg["exact_sum"] = g.exact ? Json(g.exact_sum) : Json(nullptr);
    agg["exact_concatenated"] = optional_number(g.exact_concatenated);
    agg["ours_eq4"] = g.ours_eq4;
    agg["ours_g1"] = g.ours_g1;
    agg["ours_appendix_c"] = g.ours_appendix_c;
    agg["specformer"] = g.specformer;
    agg["castin"] = g.castin;
    aggregates.push_back(std::move(agg));
  }
  report["heads"] = std::move(heads);
  report["aggregates"] = std::move(aggregates);
  report["capacity_exceeded"] = capacity_exceeded;
  write_text_file(a.out, report.dump(2) + "\n");

  out << "certified " << weights.heads.size() << " head(s); violations=" << violations
      << (capacity_exceeded ? "; exact skipped (over budget)" : "") << "\n";
  return capacity_exceeded ? kExitCapacity : kExitOk;
}

// ---------------------------------------------------------- simplex-check

struct SimplexArgs {
  long long max_n = 50;
  long long trials = 10'000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simplex_check(const SimplexArgs& a, std::ostream& out) {
  if (a.trials < 1) throw ValidationError("--trials must be at least 1");
  if (a.max_n < 2) throw ValidationError("--n must be at least 2");
  struct Row {
    Eigen::Index n;
    double x1, g1, sigma1, ratio;
    bool ok;
  };
  std::vector<Row> rows(static_cast<std::size_t>(a.trials));
  parallel_for(rows.size(), [&](std::size_t t) {
    Rng rng(derive_seed(a.seed, t));
    const auto n = static_cast<Eigen::Index>(rng.uniform_int(2, a.max_n));
    const SimplexVector p(rng.dirichlet(n));
    const InterlacingSandwich s = interlacing_sandwich(p);
    const double g1 = s.g(0);
    const double sigma1 = s.singular_values(0);
    const double ratio = sigma1 > 0.0 ? g1 / sigma1 : (g1 == 0.0 ? 1.0 : INFINITY);
    rows[t] = {n, s.ordinals(0), g1, sigma1, ratio, s.holds(1e-10)};
  });

  CsvTable table;
  table.header = {"n", "x1", "g1", "sigma1", "sandwich_ok", "ratio"};
  std::size_t violations = 0;
  double max_g1 = 0.0;
  std::vector<double> ratios;
  for (const auto& r : rows) {
    table.rows.push_back({std::to_string(r.n), format_double(r.x1), format_double(r.g1), format_double(r.sigma1),
                          r.ok ? "1" : "0", format_double(r.ratio)});
    violations += r.ok ? 0 : 1;
    max_g1 = std::max(max_g1, r.g1);
    ratios.push_back(r.ratio);
  }
  write_text_file(a.out, to_csv(table));

  const double min_ratio = *std::min_element(ratios.begin(), ratios.end());
  out << "trials=" << a.trials << " violations=" << violations << " max_g1=" << format_double(max_g1)
      << " ratio[min,p50,p90,p99,max]=" << format_double(min_ratio) << "," << format_double(quantile(ratios, 0.5))
      << "," << format_double(quantile(ratios, 0.9)) << "," << format_double(quantile(ratios, 0.99)) << ","
      << format_double(quantile(ratios, 1.0)) << "\n";
  const bool failed = violations > 0 || max_g1 > 0.5 + 1e-12 || min_ratio < 1.0 - 1e-10;
  return failed ? kExitValidation : kExitOk;
}

// ----------------------------------------------------------- bounds-sweep

struct SweepArgs {
  long long instances = 500;
  std::string dims = "8,8,4";
  std::uint64_t seed = 0;
  std::string out;
};

std::array<Eigen::Index, 3> parse_dims(const std::string& s) {
  std::array<Eigen::Index, 3> d{};
  std::istringstream in(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(in, part, ',')) {
    if (i >= 3) throw ValidationError("--dims needs exactly three values N,D,d");
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(part, &used);
    } catch (const std::exception&) {
      throw ValidationError("--dims: '" + part + "' is not an integer");
    }
    if (used != part.size() || v < 1) throw ValidationError("--dims: '" + part + "' is not a positive integer");
    d[i++] = static_cast<Eigen::Index>(v);
  }
  if (i != 3) throw ValidationError("--dims needs exactly three values N,D,d");
  return d;
}

int cmd_bounds_sweep(const SweepArgs& a, std::ostream& out) {
  if (a.instances < 0) throw ValidationError("--instances must be nonnegative");
  const auto [n, dm, dh] = parse_dims(a.dims);
  std::vector<BoundReport> reports(static_cast<std::size_t>(a.instances));
  parallel_for(reports.size(), [&](std::size_t i) {
    const RandomInstance inst = make_random_instance(derive_seed(a.seed, i), n, dm, dh);
    CertifyOptions opts;
    opts.power.seed = derive_seed(a.seed ^ 0x5DEECE66Dull, i);
    reports[i] = certify(inst.x, {inst.w}, opts).heads.front();
  });

  CsvTable table;
  table.header = {"instance_id", "N", "D", "d", "exact", "ours_eq4", "ours_appc", "specformer", "castin", "max_g1",
                  "max_sigma1"};
  std::size_t violations = 0;
  double mean_ours = 0.0;
  double mean_specformer = 0.0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const BoundReport& r = reports[i];
    table.rows.push_back({std::to_string(i), std::to_string(n), std::to_string(dm), std::to_string(dh),
                          r.exact ? format_double(*r.exact) : "", format_double(r.ours_eq4),
                          format_double(r.ours_appendix_c), format_double(r.specformer), format_double(r.castin),
                          format_double(r.ingredients.max_g1), format_double(r.ingredients.max_sigma1)});
    violations += check_bound_report(r).empty() ? 0 : 1;
    mean_ours += r.ours_eq4;
    mean_specformer += r.specformer;
  }
  write_text_file(a.out, to_csv(table));
  if (!reports.empty()) {
    mean_ours /= static_cast<double>(reports.size());
    mean_specformer /= static_cast<double>(reports.size());
  }
  out << "instances=" << a.instances << " violations=" << violations << " mean_ours_eq4=" << format_double(mean_ours)
      << " mean_specformer=" << format_double(mean_specformer) << "\n";
  return violations ? kExitValidation : kExitOk;
}

// ------------------------------------------------------------- train-demo

struct TrainArgs {
  std::size_t steps = 300;
  double lambda = 0.0;
  long long k = 0;
  std::string agg = "mean";
  std::uint64_t seed = 0;
  std::string out;
  double lr = 0.5;
  std::size_t samples = 96;
  std::size_t probes = 32;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t measure_every = 25;
};

int cmd_train_demo(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  JasminConfig cfg;
  if (a.k < 0) throw ValidationError("--k must be nonnegative");
  cfg.k = static_cast<std::size_t>(a.k);
  cfg.lambda = a.lambda;
  cfg.aggregation = a.agg == "max" ? Aggregation::kMax : Aggregation::kMean;
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  if (a.steps < 1) throw ValidationError("--steps must be at least 1");
  if (a.samples < 1) throw ValidationError("--samples must be at least 1");

  ToyModelConfig mc;
  mc.layers = a.layers;
  mc.heads = a.heads;
  if (cfg.k >= 2 && static_cast<std::size_t>(mc.tokens) < cfg.k + 1)
    throw ValidationError("--k " + std::to_string(cfg.k) + " needs at least " + std::to_string(cfg.k + 1) +
                          " tokens per sequence");
  const Dataset all = generate_synthetic_dataset(derive_seed(a.seed, 0), a.samples + a.probes, mc.tokens,
                                                 mc.model_dim, mc.classes);
  Dataset train_set;
  train_set.classes = all.classes;
  std::vector<Matrix> probes;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < a.samples) {
      train_set.inputs.push_back(all.inputs[i]);
      train_set.labels.push_back(all.labels[i]);
    } else {
      probes.push_back(all.inputs[i]);
    }
  }
  TrainOptions opts;
  opts.steps = a.steps;
  opts.lr = a.lr;
  opts.seed = derive_seed(a.seed, 2);
  opts.measure_every = a.measure_every;

  TrainResult result;
  try {
    result = train(make_toy_model(mc, derive_seed(a.seed, 1)), train_set, probes, cfg, opts);
  } catch (const TrainingError& e) {
    err << "error: training diverged at step " << e.step() << ": " << e.what() << "\n";
    return kExitDivergence;
  }

  CsvTable table;
  table.header = {"step", "task_loss", "jasmin_loss", "accuracy", "jacobian_median", "jacobian_mean", "max_g1",
                  "mean_max_g1"};
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : result.trace.records)
    table.rows.push_back({std::to_string(r.step), format_double(r.task_loss), format_double(r.jasmin_loss),
                          format_double(r.accuracy), opt(r.jacobian_median), opt(r.jacobian_mean),
                          format_double(r.max_g1), format_double(r.mean_max_g1)});
  write_text_file(a.out, to_csv(table));
  const TrainRecord& last = result.trace.records.back();
  out << "final_accuracy=" << format_double(last.accuracy)
      << " final_median_jacobian_norm=" << opt(last.jacobian_median) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local Lipschitz certification for dot-product self-attention", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CertifyArgs ca;
  auto* certify_cmd = app.add_subcommand("certify", "Compute all bounds (and the exact norm) for a weights/input pair");
  certify_cmd->add_option("--weights", ca.weights, "Weights JSON")->required();
  certify_cmd->add_option("--input", ca.input, "Input sequence JSON")->required();
  certify_cmd->add_option("--radius", ca.radius, "Row-norm radius R (default: max row norm)");
  certify_cmd->add_option("--exact", ca.exact, "Form the exact Jacobian")->check(CLI::IsMember({"on", "off"}));
  certify_cmd->add_option("--out", ca.out, "Report JSON")->required();
  certify_cmd->add_option("--seed", ca.seed, "Power-iteration seed");
  certify_cmd->add_option("--max-jacobian-entries", ca.max_entries, "Dense Jacobian budget")
      ->check(CLI::PositiveNumber);

  SimplexArgs sa;
  auto* simplex_cmd = app.add_subcommand("simplex-check", "Sweep the softmax-Jacobian interlacing chain");
  simplex_cmd->add_option("--n", sa.max_n, "Largest vector length");
  simplex_cmd->add_option("--trials", sa.trials, "Number of Dirichlet(1) samples");
  simplex_cmd->add_option("--seed", sa.seed, "Seed");
  simplex_cmd->add_option("--out", sa.out, "Per-trial CSV")->required();

  SweepArgs wa;
  auto* sweep_cmd = app.add_subcommand("bounds-sweep", "Compare all bounds with the exact norm on random instances");
  sweep_cmd->add_option("--instances", wa.instances, "Number of instances");
  sweep_cmd->add_option("--dims", wa.dims, "N,D,d");
  sweep_cmd->add_option("--seed", wa.seed, "Seed");
  sweep_cmd->add_option("--out", wa.out, "Sweep CSV")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train-demo", "Train the toy attention classifier with JaSMin");
  train_cmd->add_option("--steps", ta.steps, "Gradient steps");
  train_cmd->add_option("--lambda", ta.lambda, "Regularisation weight");
  train_cmd->add_option("--k", ta.k, "0 for log g1, >= 2 for log(g1/g_k)");
  train_cmd->add_option("--agg", ta.agg, "Row aggregation")->check(CLI::IsMember({"mean", "max"}));
  train_cmd->add_option("--seed", ta.seed, "Seed");
  train_cmd->add_option("--out", ta.out, "Trace CSV")->required();
  train_cmd->add_option("--lr", ta.lr, "Learning rate");
  train_cmd->add_option("--samples", ta.samples, "Training sequences");
  train_cmd->add_option("--probes", ta.probes, "Held-out probe sequences");
  train_cmd->add_option("--layers", ta.layers, "Attention layers");
  train_cmd->add_option("--heads", ta.heads, "Heads per layer");
  train_cmd->add_option("--measure-every", ta.measure_every, "Steps between Jacobian measurements");

  std::vector<std::string> rev;
  for (std::size_t i = args.size(); i > 1; --i) rev.push_back(args[i - 1]);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (certify_cmd->parsed()) return cmd_certify(ca, out);
    if (simplex_cmd->parsed()) return cmd_simplex_check(sa, out);
    if (sweep_cmd->parsed()) return cmd_bounds_sweep(wa, out);
    if (train_cmd->parsed()) return cmd_train_demo(ta, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitCapacity;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace attnlip::cli
