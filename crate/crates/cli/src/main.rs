//! `percolate`: batch experiment runner.
//!
//! Every subcommand prints a one-line JSON summary on stdout that embeds the
//! resolved configuration; feeding that `config` object back through
//! `--config` reproduces the run.

mod settings;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use percolate::couplings::{
    blowup_lrp_frequencies, blowup_lrp_with_budget, blowup_sfp, couple_alpha_sweep, fpp_cffp_edge_check,
    stitching_check, weight_dominance_test, BlowupSpec, CouplingReport,
};
use percolate::estimators::{
    ball_radius_samples, bk_brute_force_k, bound_compliance, fit_distance_exponent, fit_shape_constant,
    mc_ball_growth, mc_tail_grid, median_distances, reference_delta, shape_radius, tail_estimates_csv, BoundFamily,
    Event, ModelConfig, Process, ShapeReport, Threshold,
};
use percolate::io::GraphFile;
use percolate::kernels::{BoundConstants, KernelVariant, ModelParams};
use percolate::metrics::{cost_distance, graph_distance, LazyFpp};
use percolate::sampler::{sample_fpp_costs, BoxSpec, Budget, CffpField, Realization};

use settings::{CliError, Settings};

#[derive(Parser)]
#[command(name = "percolate", version, about = "Sample percolation models and run Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph (or CFFP costs) and write it in the text edge-list format.
    Generate(GenerateArgs),
    /// Hop or cost distance between two vertices.
    Distance(DistanceArgs),
    /// Monte Carlo tail probabilities Pr[d(x,y) <= threshold].
    Tail(TailArgs),
    /// Mean ball sizes around a root.
    Growth(GrowthArgs),
    /// Run a coupling check; exits 3 on violations.
    Coupling(CouplingArgs),
    /// Exact disjoint-occurrence enumeration; exits 3 if the product bound fails.
    Bk(BkArgs),
    /// Fit the polylogarithmic distance exponent.
    Fit(FitArgs),
    /// Shape containment frequencies of hop balls.
    Shape(ShapeArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON object of flag values; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trial loops (default 1).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// lrp, sfp, girg or cffp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// Box side length.
    #[arg(long = "L")]
    side: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Pareto exponent; `inf` for unit weights.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// min or exp.
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    /// Also write Exp(1) edge costs.
    #[arg(long)]
    costs: Option<bool>,
}

#[derive(Args)]
struct DistanceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    /// Read the graph from a file instead of sampling it.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    x: Option<usize>,
    #[arg(long)]
    y: Option<usize>,
    /// hops or cost.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct TailArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    /// Vertex pairs `x:y`, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(usize, usize)>>,
    /// Hop thresholds.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    /// Cost thresholds.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// LRP compliance: candidate epsilons.
    #[arg(long = "eps-grid", value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    /// SFP compliance: candidate c1, c2, beta and epsilon values (cartesian grid).
    #[arg(long, value_delimiter = ',')]
    c1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    c2: Option<Vec<f64>>,
    #[arg(long = "beta-exp", value_delimiter = ',')]
    beta_exp: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Write the compliance report JSON here.
    #[arg(long)]
    report: Option<String>,
}

#[derive(Args)]
struct GrowthArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    root: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct CouplingArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    /// alpha, fpp-cffp, blowup-lrp, blowup-sfp, weight-dominance or stitching.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long = "alpha-prime")]
    alpha_prime: Option<f64>,
    #[arg(long)]
    wu: Option<f64>,
    #[arg(long)]
    wv: Option<f64>,
    #[arg(long)]
    dist: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Blow-up factor.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "lambda-b")]
    lambda_b: Option<f64>,
    #[arg(long = "tau-prime")]
    tau_prime: Option<f64>,
    #[arg(long = "c-agg")]
    c_agg: Option<f64>,
    /// Coarse pairs `u:v` for the stitching check.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(usize, usize)>>,
}

#[derive(Args)]
struct BkArgs {
    #[command(flatten)]
    common: Common,
    /// Number of edges.
    #[arg(long)]
    n: Option<usize>,
    /// Edge probabilities.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Increasing event such as `open:1&2|open:3`.
    #[arg(long = "eventA")]
    event_a: Option<String>,
    #[arg(long = "eventB")]
    event_b: Option<String>,
    /// Further events for the k-ary variant.
    #[arg(long = "event")]
    events: Option<Vec<String>>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    /// CSV of `dist,median` rows; otherwise medians are simulated.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Option<Vec<(usize, usize)>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct ShapeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    root: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Radius constant in r(k) = exp(c k^(1/Δ)); fitted when absent.
    #[arg(long)]
    c: Option<f64>,
    /// Hop count at which c is fitted (default: the first k).
    #[arg(long = "fit-k")]
    fit_k: Option<u32>,
    #[arg(long)]
    quantile: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected x:y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad vertex id {v:?}"));
    Ok((p(a)?, p(b)?))
}

/// Outcome of a subcommand: its result object and whether a compliance test
/// failed.
struct Outcome {
    result: Value,
    failed_check: bool,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Outcome {
            result,
            failed_check: false,
        }
    }
}

fn load(common: &Common) -> Result<Settings, CliError> {
    let mut s = Settings::load(common.config.as_deref())?;
    s.set("seed", &common.seed);
    s.set("threads", &common.threads);
    s.set("out", &common.out);
    Ok(s)
}

fn apply_model(s: &mut Settings, m: &ModelFlags) {
    s.set("model", &m.model);
    s.set("d", &m.d);
    s.set("L", &m.side);
    s.set_real("alpha", m.alpha);
    s.set_real("tau", m.tau);
    s.set_real("lambda", m.lambda);
    s.set("kernel", &m.kernel);
}

fn model_config(s: &mut Settings) -> Result<ModelConfig, CliError> {
    let process: Process = s.req::<String>("model")?.parse()?;
    let d = s.get_or("d", 1usize)?;
    let side: usize = s.req("L")?;
    let alpha = s.req_real("alpha")?;
    let tau = s.real_or("tau", f64::INFINITY)?;
    let lambda = s.real_or("lambda", 1.0)?;
    let kernel = match s.get_or("kernel", "min".to_string())?.as_str() {
        "min" => KernelVariant::MinForm,
        "exp" => KernelVariant::ExpForm,
        other => return Err(CliError::Usage(format!("kernel must be min or exp, got {other:?}"))),
    };
    let params = ModelParams::new(d, alpha, tau, lambda)?.with_kernel(kernel);
    let cfg = ModelConfig::new(process, BoxSpec::new(d, side)?, params).with_budget(Budget::from_env()?);
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(path: &str, contents: &str) -> Result<(), CliError> {
    if path == "-" {
        print!("{contents}");
        return Ok(());
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {path}: {e}")))
}

fn generate(a: &GenerateArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("costs", &a.costs);
    let cfg = model_config(&mut s)?;
    let seed: u64 = s.req("seed")?;
    let with_costs = s.get_or("costs", false)?;
    let file = match cfg.process.graph_tag() {
        Some(tag) => {
            let g = Realization::new(&cfg.box_spec, &cfg.params, tag, seed, &cfg.budget)?.into_graph();
            let costs = with_costs.then(|| sample_fpp_costs(&g, seed));
            GraphFile::from_graph(&g, costs.as_ref())
        }
        None => {
            let field = CffpField::sample(&cfg.box_spec, &cfg.params, seed, &cfg.budget)?;
            GraphFile::from_cffp(&field, &field.to_cost_map())
        }
    };
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &file.to_text())?;
    }
    Ok((
        s,
        Outcome::ok(json!({
            "vertices": file.weights.len(),
            "edges": file.edges.len(),
            "cost_lines": file.costs.len(),
        })),
    ))
}

fn distance(a: &DistanceArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("graph", &a.graph);
    s.set("x", &a.x);
    s.set("y", &a.y);
    s.set("metric", &a.metric);
    let x: usize = s.req("x")?;
    let y: usize = s.req("y")?;
    let metric = s.get_or("metric", "hops".to_string())?;
    if metric != "hops" && metric != "cost" {
        return Err(CliError::Usage(format!("metric must be hops or cost, got {metric:?}")));
    }
    let result = if let Some(path) = s.get::<String>("graph")? {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
        let file = GraphFile::parse(&text)?;
        if metric == "cost" {
            let costs = match file.cost_map()? {
                Some(c) => c,
                None => sample_fpp_costs(&file.to_graph()?, s.req("seed")?),
            };
            json!({"x": x, "y": y, "cost": cost_distance(&costs, x, y)?})
        } else {
            let g = file.to_graph()?;
            json!({"x": x, "y": y, "hops": graph_distance(&g, x, y)?, "geo_dist": g.dist(check(x, &g)?, check(y, &g)?)})
        }
    } else {
        let cfg = model_config(&mut s)?;
        let seed: u64 = s.req("seed")?;
        match cfg.process.graph_tag() {
            None => {
                let field = CffpField::sample(&cfg.box_spec, &cfg.params, seed, &cfg.budget)?;
                json!({"x": x, "y": y, "cost": cost_distance(&field, x, y)?})
            }
            Some(tag) => {
                let r = Realization::new(&cfg.box_spec, &cfg.params, tag, seed, &cfg.budget)?;
                if metric == "cost" {
                    let lazy = LazyFpp { realization: &r, seed };
                    json!({"x": x, "y": y, "cost": cost_distance(&lazy, x, y)?})
                } else {
                    let hops = graph_distance(&r, x, y)?;
                    json!({"x": x, "y": y, "hops": hops, "geo_dist": r.dist(x, y)})
                }
            }
        }
    };
    Ok((s, Outcome::ok(result)))
}

fn check(v: usize, g: &percolate::sampler::SampledGraph) -> Result<usize, CliError> {
    if v >= g.vertex_count() {
        return Err(percolate::Error::InvalidVertex {
            id: v,
            count: g.vertex_count(),
        }
        .into());
    }
    Ok(v)
}

fn thresholds(s: &mut Settings, k: &Option<Vec<u32>>, t: &Option<Vec<f64>>) -> Result<Vec<Threshold>, CliError> {
    s.set("k", k);
    s.set("t", t);
    match (s.get::<Vec<u32>>("k")?, s.get::<Vec<f64>>("t")?) {
        (Some(k), None) => Ok(k.into_iter().map(Threshold::Hops).collect()),
        (None, Some(t)) => Ok(t.into_iter().map(Threshold::Cost).collect()),
        _ => Err(CliError::Usage("give exactly one of --k (hops) or --t (costs)".into())),
    }
}

fn tail(a: &TailArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("pairs", &a.pairs);
    s.set("trials", &a.trials);
    s.set("eps_grid", &a.eps_grid);
    s.set("c1", &a.c1);
    s.set("c2", &a.c2);
    s.set("beta_exp", &a.beta_exp);
    s.set("epsilon", &a.epsilon);
    s.set("report", &a.report);
    let cfg = model_config(&mut s)?;
    let th = thresholds(&mut s, &a.k, &a.t)?;
    let pairs: Vec<(usize, usize)> = s.req("pairs")?;
    let trials: usize = s.get_or("trials", 100)?;
    let seed: u64 = s.req("seed")?;
    let estimates = mc_tail_grid(&cfg, &pairs, &th, trials, seed)?;
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &tail_estimates_csv(&estimates))?;
    }
    let family = if let Some(eps_grid) = s.get::<Vec<f64>>("eps_grid")? {
        Some(BoundFamily::Lrp {
            params: cfg.params,
            eps_grid,
        })
    } else if let Some(c1) = s.get::<Vec<f64>>("c1")? {
        let c2: Vec<f64> = s.req("c2")?;
        let beta: Vec<f64> = s.req("beta_exp")?;
        let eps: Vec<f64> = s.req("epsilon")?;
        let mut constants = Vec::new();
        for &c1 in &c1 {
            for &c2 in &c2 {
                for &beta_exp in &beta {
                    for &epsilon in &eps {
                        constants.push(BoundConstants {
                            c1,
                            c2,
                            beta_exp,
                            epsilon,
                        });
                    }
                }
            }
        }
        Some(BoundFamily::Sfp {
            params: cfg.params,
            constants,
        })
    } else {
        None
    };
    let mut result = json!({
        "estimates": estimates.len(),
        "p_hat": estimates.iter().map(|e| e.p_hat).collect::<Vec<_>>(),
    });
    if let Some(family) = family {
        let report = bound_compliance(&estimates, &family)?;
        if let Some(path) = s.get::<String>("report")? {
            write_output(&path, &(serde_json::to_string(&report).expect("report serializes") + "\n"))?;
        }
        result["complies"] = json!(report.complies);
        result["best_margin"] = json!(report.best_margin());
        result["best_constants"] = report.best.constants.clone();
    }
    Ok((s, Outcome::ok(result)))
}

fn growth(a: &GrowthArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("root", &a.root);
    s.set("trials", &a.trials);
    let cfg = model_config(&mut s)?;
    let th = thresholds(&mut s, &a.k, &a.t)?;
    let root = s.get_or("root", cfg.box_spec.center())?;
    let trials: usize = s.get_or("trials", 100)?;
    let seed: u64 = s.req("seed")?;
    let series = mc_ball_growth(&cfg, root, &th, trials, seed)?;
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &series.to_csv())?;
    }
    let result = json!({
        "root": series.root,
        "mean_sizes": series.mean_sizes,
        "log_linear": series.log_linear,
        "stretched": series.stretched,
    });
    Ok((s, Outcome::ok(result)))
}

fn coupling(a: &CouplingArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("kind", &a.kind);
    s.set("trials", &a.trials);
    s.set_real("alpha_prime", a.alpha_prime);
    s.set_real("wu", a.wu);
    s.set_real("wv", a.wv);
    s.set_real("dist", a.dist);
    s.set_real("t", a.t);
    s.set("r", &a.r);
    s.set_real("lambda_b", a.lambda_b);
    s.set_real("tau_prime", a.tau_prime);
    s.set_real("c_agg", a.c_agg);
    s.set("pairs", &a.pairs);
    let kind: String = s.req("kind")?;
    let seed: u64 = s.req("seed")?;
    let trials: usize = s.get_or("trials", 100)?;
    let report: CouplingReport = match kind.as_str() {
        "alpha" => {
            let cfg = model_config(&mut s)?;
            let tag = cfg
                .process
                .graph_tag()
                .ok_or_else(|| CliError::Usage("alpha coupling needs lrp or sfp".into()))?;
            let alpha_prime = s.req_real("alpha_prime")?;
            couple_alpha_sweep(&cfg.box_spec, &cfg.params, alpha_prime, tag, trials, seed, &cfg.budget)?
        }
        "fpp-cffp" => {
            let d = s.get_or("d", 1usize)?;
            let params = ModelParams::new(d, s.req_real("alpha")?, s.real_or("tau", f64::INFINITY)?, s.real_or("lambda", 1.0)?)?;
            fpp_cffp_edge_check(
                s.req_real("wu")?,
                s.req_real("wv")?,
                s.req_real("dist")?,
                s.req_real("t")?,
                &params,
                trials,
                seed,
            )?
        }
        "blowup-lrp" | "blowup-sfp" | "stitching" => {
            let d = s.get_or("d", 1usize)?;
            let side: usize = s.req("L")?;
            let r: usize = s.req("r")?;
            let alpha = s.req_real("alpha")?;
            let lambda = s.req_real("lambda")?;
            let lambda_b = s.real_or("lambda_b", lambda)?;
            let coarse = BoxSpec::new(d, side)?;
            let budget = Budget::from_env()?;
            let mut spec = BlowupSpec::lrp(r, ModelParams::lrp(d, alpha, lambda)?);
            match kind.as_str() {
                "blowup-lrp" => blowup_lrp_frequencies(&coarse, &spec, lambda_b, trials, seed, &budget)?.1,
                "blowup-sfp" => {
                    let tau = s.req_real("tau")?;
                    spec.tau_prime = Some(s.req_real("tau_prime")?);
                    spec.c_agg = s.real_or("c_agg", 1.0)?;
                    blowup_sfp(&coarse, &spec, tau, lambda_b, seed, &budget)?.2
                }
                _ => {
                    let (fine, coarse_g, _) = blowup_lrp_with_budget(&coarse, &spec, lambda_b, seed, &budget)?;
                    let pairs = match s.get::<Vec<(usize, usize)>>("pairs")? {
                        Some(p) => p,
                        None => (1..coarse.vertex_count()?).map(|v| (0, v)).collect(),
                    };
                    stitching_check(&fine, &coarse_g, &coarse, r, &pairs)?
                }
            }
        }
        "weight-dominance" => weight_dominance_test(
            s.req_real("tau")?,
            s.req_real("tau_prime")?,
            s.req_real("alpha")?,
            s.req("r")?,
            s.get_or("d", 1usize)?,
            s.real_or("c_agg", 1.0)?,
            trials,
            seed,
        )?,
        other => return Err(CliError::Usage(format!("unknown coupling kind {other:?}"))),
    };
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &(report.to_json() + "\n"))?;
    }
    let result = json!({
        "kind": report.kind,
        "trials": report.trials,
        "violations": report.violations,
        "checks": report.details.len(),
    });
    Ok((
        s,
        Outcome {
            result,
            failed_check: report.violations > 0,
        },
    ))
}

fn bk(a: &BkArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    s.set("n", &a.n);
    s.set("p", &a.p);
    s.set("eventA", &a.event_a);
    s.set("eventB", &a.event_b);
    s.set("events", &a.events);
    let n: usize = s.req("n")?;
    let p: Vec<f64> = s.req("p")?;
    let mut specs: Vec<String> = vec![s.req("eventA")?, s.req("eventB")?];
    specs.extend(s.get::<Vec<String>>("events")?.unwrap_or_default());
    let events = specs.iter().map(|e| Event::parse(e, n)).collect::<percolate::Result<Vec<_>>>()?;
    let refs: Vec<&Event> = events.iter().collect();
    let r = bk_brute_force_k(n, &p, &refs)?;
    let holds = r.holds(1e-12);
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &(serde_json::to_string(&r).expect("result serializes") + "\n"))?;
    }
    Ok((
        s,
        Outcome {
            result: json!({
                "p_disjoint": r.p_disjoint,
                "p_product": r.p_product,
                "event_probs": r.event_probs,
                "holds": holds,
            }),
            failed_check: !holds,
        },
    ))
}

fn read_samples(path: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{path}:{}: cannot parse {s:?}", i + 1)))
        };
        if f.len() != 2 {
            return Err(CliError::Usage(format!("{path}:{}: expected dist,median", i + 1)));
        }
        out.push((num(f[0])?, num(f[1])?));
    }
    Ok(out)
}

fn fit(a: &FitArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("samples", &a.samples);
    s.set("pairs", &a.pairs);
    s.set("trials", &a.trials);
    let (samples, params) = match s.get::<String>("samples")? {
        Some(path) => {
            let params = if s.contains("alpha") {
                let d = s.get_or("d", 1usize)?;
                Some(ModelParams::new(d, s.req_real("alpha")?, s.real_or("tau", f64::INFINITY)?, s.real_or("lambda", 1.0)?)?)
            } else {
                None
            };
            (read_samples(&path)?, params)
        }
        None => {
            let cfg = model_config(&mut s)?;
            let pairs: Vec<(usize, usize)> = s.req("pairs")?;
            let trials: usize = s.get_or("trials", 25)?;
            let seed: u64 = s.req("seed")?;
            (median_distances(&cfg, &pairs, trials, seed)?, Some(cfg.params))
        }
    };
    let fit = fit_distance_exponent(&samples, params.as_ref())?;
    if let Some(out) = s.get::<String>("out")? {
        let mut csv = String::from("dist,median,residual\n");
        for ((d, m), r) in samples.iter().zip(&fit.residuals) {
            csv.push_str(&format!("{d},{m},{r}\n"));
        }
        write_output(&out, &csv)?;
    }
    Ok((s, Outcome::ok(serde_json::to_value(&fit).expect("fit serializes"))))
}

fn shape(a: &ShapeArgs) -> Result<(Settings, Outcome), CliError> {
    let mut s = load(&a.common)?;
    apply_model(&mut s, &a.model);
    s.set("root", &a.root);
    s.set("k", &a.k);
    s.set("trials", &a.trials);
    s.set_real("c", a.c);
    s.set("fit_k", &a.fit_k);
    s.set_real("quantile", a.quantile);
    s.set_real("delta", a.delta);
    let cfg = model_config(&mut s)?;
    let root = s.get_or("root", cfg.box_spec.center())?;
    let ks: Vec<u32> = s.req("k")?;
    let trials: usize = s.get_or("trials", 100)?;
    let seed: u64 = s.req("seed")?;
    let delta = match s.get_real("delta")? {
        Some(d) => d,
        None => s.record_real("delta", reference_delta(&cfg.params)?),
    };
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CliError::Usage(format!("delta must be finite and positive, got {delta}")));
    }
    let fixed_c = s.get_real("c")?;
    let fit_k = s.get_or("fit_k", ks.first().copied().unwrap_or(1))?;
    let q = s.real_or("quantile", 0.9)?;
    let all_ks: Vec<u32> = ks.iter().copied().chain(fixed_c.is_none().then_some(fit_k)).collect::<BTreeSet<_>>().into_iter().collect();
    let samples = ball_radius_samples(&cfg, root, &all_ks, trials, seed)?;
    let c = match fixed_c {
        Some(c) => c,
        None => {
            let j = all_ks.iter().position(|&k| k == fit_k).expect("fit k sampled");
            fit_shape_constant(&samples[j], fit_k, delta, q)?
        }
    };
    let picked: Vec<Vec<f64>> = ks
        .iter()
        .map(|k| samples[all_ks.iter().position(|x| x == k).expect("k sampled")].clone())
        .collect();
    let report = ShapeReport::from_samples(root, &ks, picked, |k| shape_radius(k, c, delta))?;
    if let Some(out) = s.get::<String>("out")? {
        write_output(&out, &report.to_csv())?;
    }
    Ok((
        s,
        Outcome::ok(json!({
            "root": root,
            "c": c,
            "delta": delta,
            "ks": report.ks,
            "radii": report.radii,
            "frequencies": report.frequencies,
        })),
    ))
}

fn run(cli: &Cli) -> Result<(&'static str, Settings, Outcome), CliError> {
    let (name, (s, outcome)) = match &cli.command {
        Command::Generate(a) => ("generate", with_threads(&a.common, || generate(a))?),
        Command::Distance(a) => ("distance", with_threads(&a.common, || distance(a))?),
        Command::Tail(a) => ("tail", with_threads(&a.common, || tail(a))?),
        Command::Growth(a) => ("growth", with_threads(&a.common, || growth(a))?),
        Command::Coupling(a) => ("coupling", with_threads(&a.common, || coupling(a))?),
        Command::Bk(a) => ("bk", with_threads(&a.common, || bk(a))?),
        Command::Fit(a) => ("fit", with_threads(&a.common, || fit(a))?),
        Command::Shape(a) => ("shape", with_threads(&a.common, || shape(a))?),
    };
    Ok((name, s, outcome))
}

/// Run `f` on a pool of `--threads` workers (from the flag or the config file).
fn with_threads<T: Send>(common: &Common, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    let threads = match common.threads {
        Some(n) => n,
        None => load(common)?.get::<usize>("threads")?.unwrap_or(1),
    };
    if threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .install(f)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((name, s, outcome)) => {
            let summary = json!({
                "command": name,
                "version": env!("CARGO_PKG_VERSION"),
                "config": s.into_value(),
                "result": outcome.result,
            });
            println!("{summary}");
            ExitCode::from(if outcome.failed_check { 3 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use percolate::sampler::ModelTag;

    #[test]
    fn pairs_parse() {
        assert_eq!(parse_pair("3:17"), Ok((3, 17)));
        assert!(parse_pair("3-17").is_err());
    }

    #[test]
    fn model_tags_match_processes() {
        assert_eq!(Process::Sfp.graph_tag(), Some(ModelTag::Sfp));
    }
}
