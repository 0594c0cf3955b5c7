//! `genergy`: every operation of the group-energy toolkit as a subcommand
//! with reproducible, machine-readable output.
//!
//! Each run emits a single JSON record: the subcommand, the fully resolved
//! configuration (echoed so the run can be replayed), the tool version,
//! wall time, and the payload. Payloads of seeded subcommands are
//! byte-identical across reruns and thread counts. `--format csv` renders
//! the payload as CSV instead.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use genergy_core::caps;
use genergy_core::cayley::{
    model_ball_energy_mc, model_ball_mc_statistic, model_density_profile, parse_model_spec,
    ModelSpec,
};
use genergy_core::expectation::{
    action_expectation_bounds, action_independent_expectation, closed_form_discrepancy,
    closed_form_expectation, expected_energy, mc_action_expected, ConstantMode, ExpectationMethod,
};
use genergy_core::experiments::{
    basis_search, default_dominance_thresholds, dominance_experiment, locally_finite_thin_set,
    power_cover, thin_basis_demo, ChainConfig, ChainSpec, DominanceThreshold, HFun,
};
use genergy_core::invariants::{compute_invariants, q_partition_closed_form, QVariant};
use genergy_core::rat::{rat_parse, rat_to_string, Rat};
use genergy_core::sampler::{
    brute_force_expected, mc_expected, SamplingConfig, Statistic, SubsetUniverse,
};
use genergy_core::{
    build_group_str, cs_growth_bound, multiplicative_energy, normalized_energy, product_set,
    DenominatorMode, Error as CoreError, FiniteGroup, GroupAction, Subset,
};

const EXIT_SPEC_PARSE: i32 = 3;
const EXIT_INVALID_ARG: i32 = 4;
const EXIT_CAP: i32 = 5;
const EXIT_UNIVERSE: i32 = 6;
const EXIT_INTERNAL: i32 = 7;
const EXIT_VALIDATION: i32 = 8;
const EXIT_IO: i32 = 9;

#[derive(Parser)]
#[command(
    name = "genergy",
    version,
    about = "Energy statistics for random subsets of groups"
)]
struct Cli {
    /// Output format for the payload.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the record to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo runs (default: GENERGY_THREADS or all
    /// cores). Results never depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the |F|^3 triple-enumeration cap.
    #[arg(long, global = true)]
    cap_triples: Option<u64>,
    /// Override the C(n,k) brute-force cap.
    #[arg(long, global = true)]
    cap_brute: Option<u64>,
    /// Override the ball-size cap.
    #[arg(long, global = true)]
    cap_ball: Option<u64>,
    /// Override the thin-basis window cap.
    #[arg(long, global = true)]
    cap_thin: Option<u64>,
    /// Override the |F|^2|Phi| independent-pair cap.
    #[arg(long, global = true)]
    cap_indep: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(name = "AA", alias = "aa")]
    Aa,
    #[value(name = "AAINV", alias = "aainv")]
    AaInv,
}

impl From<VariantArg> for QVariant {
    fn from(v: VariantArg) -> QVariant {
        match v {
            VariantArg::Aa => QVariant::Aa,
            VariantArg::AaInv => QVariant::AaInv,
        }
    }
}

fn variant_name(v: QVariant) -> &'static str {
    match v {
        QVariant::Aa => "AA",
        QVariant::AaInv => "AAINV",
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Group order, invariant counts, and triple-class cardinalities.
    GroupInfo(GroupInfoArgs),
    /// Energy of an explicit subset pair.
    Energy(EnergyArgs),
    /// Exact expected energy of a uniform random k-subset.
    ExactExpectation(ExactArgs),
    /// Seeded Monte Carlo estimate of a subset statistic.
    McEstimate(McArgs),
    /// Exhaustive subset average of a statistic.
    BruteForce(BruteArgs),
    /// Per-radius density profile of an infinite-group model (CSV-friendly).
    BallDensities(BallDensArgs),
    /// Sum/difference dominance frequencies for random k-subsets.
    Dominance(DominanceArgs),
    /// Randomized search for a small set with |A^{*2}| >= (1-eps)|G|.
    BasisSearch(BasisArgs),
    /// Iterated product sets A, A^{*2}, ..., A^{*m}.
    PowerCover(PowerArgs),
    /// Density of the signed squares and of their sumset in [-n, n].
    ThinBasis(ThinArgs),
    /// Staged thin-set construction along a chain of nested finite groups.
    LocallyFinite(LocallyFiniteArgs),
    /// Run the exact-equality oracle battery; nonzero exit on any failure.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GroupInfoArgs {
    /// Group spec, e.g. `sym:4`, `gl2:3`, `prod(sym:3,cyclic:2)`.
    #[arg(long)]
    group: String,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long)]
    group: String,
    /// First subset: comma-separated element indices, or @path to a file.
    #[arg(long = "A", visible_alias = "a")]
    a: String,
    /// Second subset for --pair custom.
    #[arg(long = "B", visible_alias = "b")]
    b: Option<String>,
    /// AA pairs the set with itself, AAINV with its inverses, custom with --B.
    #[arg(long, default_value = "AA")]
    pair: String,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long, conflicts_with = "model")]
    group: Option<String>,
    /// Infinite-group model; needs --radius.
    #[arg(long, requires = "radius")]
    model: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "AA")]
    variant: VariantArg,
    /// all | binomial-q | closed-corrected | closed-uncorrected.
    #[arg(long, default_value = "all")]
    method: String,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, conflicts_with = "model")]
    group: Option<String>,
    #[arg(long, requires = "radius")]
    model: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    k: usize,
    /// ENERGY_AA | ENERGY_AAINV | SIZE_A2 | SIZE_AAINV | RATIO_EVENT:<p/q>
    /// | ENERGY_ACTION (groups only; uses --h).
    #[arg(long)]
    statistic: String,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Point-subset size for ENERGY_ACTION.
    #[arg(long)]
    h: Option<usize>,
    /// Attach the full value histogram to the estimate.
    #[arg(long)]
    histogram: bool,
}

#[derive(Args)]
struct BruteArgs {
    #[arg(long, conflicts_with = "model")]
    group: Option<String>,
    #[arg(long, requires = "radius")]
    model: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    statistic: String,
}

#[derive(Args)]
struct BallDensArgs {
    /// free:<r> | lattice:<d> | heisenberg | lamplighter.
    #[arg(long)]
    model: String,
    #[arg(long)]
    nmax: usize,
    /// Exact pairwise commuting scan up to this many elements.
    #[arg(long, default_value_t = genergy_core::cayley::EXACT_PAIR_CAP)]
    pair_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DominanceArgs {
    #[arg(long, conflicts_with = "model")]
    group: Option<String>,
    #[arg(long, requires = "radius")]
    model: Option<String>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra ratio thresholds as rationals, e.g. `30/7` (repeatable).
    #[arg(long = "threshold")]
    thresholds: Vec<String>,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long)]
    group: String,
    /// log2 | sqrtlog | const:<c>.
    #[arg(long, default_value = "log2")]
    h: String,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Discard high-energy candidates before the product-set computation.
    #[arg(long)]
    prefilter: bool,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long)]
    group: String,
    #[arg(long = "A", visible_alias = "a")]
    a: String,
    #[arg(long, default_value_t = 6)]
    power: usize,
}

#[derive(Args)]
struct ThinArgs {
    #[arg(long)]
    n: u64,
}

#[derive(Args)]
struct LocallyFiniteArgs {
    /// ea2:<stages> or sym:<max degree>.
    #[arg(long)]
    chain: String,
    #[arg(long, default_value = "const:1.3")]
    h: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    budget: u64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Largest subset size for the brute-force oracle comparisons.
    #[arg(long, default_value_t = 5)]
    max_k: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Some(v) = cli.cap_triples {
        caps::set_triple_enum_cap(v);
    }
    if let Some(v) = cli.cap_brute {
        caps::set_brute_force_cap(v);
    }
    if let Some(v) = cli.cap_ball {
        caps::set_ball_cap(v);
    }
    if let Some(v) = cli.cap_thin {
        caps::set_thin_basis_cap(v);
    }
    if let Some(v) = cli.cap_indep {
        caps::set_independent_pair_cap(v);
    }
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("GENERGY_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(genergy_core::sampler::default_threads);

    let start = Instant::now();
    let result = run(&cli.cmd, threads);
    match result {
        Ok(out) => {
            let record = json!({
                "subcommand": out.name,
                "config": out.config,
                "version": env!("CARGO_PKG_VERSION"),
                "wall_ms": start.elapsed().as_millis() as u64,
                "payload": out.payload,
            });
            let rendered = match (cli.format, &out.custom_csv) {
                (Format::Json, _) => {
                    serde_json::to_string_pretty(&record).expect("record serializes")
                }
                (Format::Csv, Some(csv)) => csv.clone(),
                (Format::Csv, None) => payload_to_csv(&record["payload"]),
            };
            let rendered = rendered.trim_end().to_string();
            if let Some(path) = &cli.out {
                if let Err(e) = std::fs::write(path, rendered + "\n") {
                    emit_error("io", &format!("cannot write {}: {e}", path.display()));
                    std::process::exit(EXIT_IO);
                }
            } else {
                println!("{rendered}");
            }
            if out.validation_failed {
                std::process::exit(EXIT_VALIDATION);
            }
        }
        Err(e) => {
            let (kind, code) = match &e {
                CoreError::SpecParse(_) => ("spec_parse", EXIT_SPEC_PARSE),
                CoreError::InvalidArg(_) => ("invalid_arg", EXIT_INVALID_ARG),
                CoreError::CapExceeded { .. } => ("cap_exceeded", EXIT_CAP),
                CoreError::UniverseMismatch { .. } => ("universe_mismatch", EXIT_UNIVERSE),
                CoreError::InternalInvariant(_) => ("internal_invariant", EXIT_INTERNAL),
            };
            emit_error(kind, &e.to_string());
            std::process::exit(code);
        }
    }
}

fn emit_error(kind: &str, message: &str) {
    let obj = json!({"error": {"kind": kind, "message": message}});
    eprintln!("{obj}");
}

struct RunOutput {
    name: String,
    config: Value,
    payload: Value,
    /// Spec-pinned CSV rendering, when the payload has one.
    custom_csv: Option<String>,
    validation_failed: bool,
}

impl RunOutput {
    fn new(name: &str, config: Value, payload: Value) -> RunOutput {
        RunOutput {
            name: name.into(),
            config,
            payload,
            custom_csv: None,
            validation_failed: false,
        }
    }
}

fn run(cmd: &Cmd, threads: usize) -> Result<RunOutput, CoreError> {
    match cmd {
        Cmd::GroupInfo(a) => group_info(a),
        Cmd::Energy(a) => energy_cmd(a),
        Cmd::ExactExpectation(a) => exact_expectation(a),
        Cmd::McEstimate(a) => mc_estimate(a, threads),
        Cmd::BruteForce(a) => brute_force(a),
        Cmd::BallDensities(a) => ball_densities(a),
        Cmd::Dominance(a) => dominance(a, threads),
        Cmd::BasisSearch(a) => basis(a),
        Cmd::PowerCover(a) => power(a),
        Cmd::ThinBasis(a) => thin(a),
        Cmd::LocallyFinite(a) => locally_finite(a),
        Cmd::Validate(a) => validate(a),
    }
}

fn parse_members(arg: &str) -> Result<Vec<u32>, CoreError> {
    let text = if let Some(path) = arg.strip_prefix('@') {
        std::fs::read_to_string(path)
            .map_err(|e| CoreError::InvalidArg(format!("cannot read {path}: {e}")))?
    } else {
        arg.to_string()
    };
    text.split([',', ' ', '\n', '\t'])
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| CoreError::InvalidArg(format!("bad element index `{t}`")))
        })
        .collect()
}

fn q_counts_json(counts: &genergy_core::QPartitionCounts) -> Value {
    let mut map = serde_json::Map::new();
    for (name, v) in counts.named() {
        map.insert(name.to_string(), json!(v));
    }
    Value::Object(map)
}

fn group_info(a: &GroupInfoArgs) -> Result<RunOutput, CoreError> {
    let g = build_group_str(&a.group)?;
    let inv = compute_invariants(&g)?;
    let aa = q_partition_closed_form(&g, &inv, QVariant::Aa);
    let aainv = q_partition_closed_form(&g, &inv, QVariant::AaInv);
    let payload = json!({
        "group": g.family(),
        "order": g.order(),
        "abelian": g.is_abelian(),
        "kappa": inv.kappa,
        "epsilon": inv.epsilon,
        "iota": inv.iota,
        "cp": rat_to_string(&inv.cp),
        "sq": rat_to_string(&inv.sq),
        "max_centralizer": inv.max_centralizer_nontrivial,
        "q_counts_AA": q_counts_json(&aa),
        "q_counts_AAinv": q_counts_json(&aainv),
    });
    Ok(RunOutput::new(
        "group-info",
        json!({"group": a.group}),
        payload,
    ))
}

fn energy_cmd(a: &EnergyArgs) -> Result<RunOutput, CoreError> {
    let g = build_group_str(&a.group)?;
    let members = parse_members(&a.a)?;
    let subset = Subset::new(g.order(), members)?;
    let (b_subset, pair) = match a.pair.to_uppercase().as_str() {
        "AA" => (subset.clone(), "AA"),
        "AAINV" => (subset.inverse_image(&g)?, "AAINV"),
        "CUSTOM" => {
            let b =
                a.b.as_ref()
                    .ok_or_else(|| CoreError::InvalidArg("--pair custom requires --B".into()))?;
            (Subset::new(g.order(), parse_members(b)?)?, "custom")
        }
        other => return Err(CoreError::InvalidArg(format!("unknown pair `{other}`"))),
    };
    let report = multiplicative_energy(&subset, &b_subset, &g)?;
    let act = GroupAction::regular(g.clone());
    let global = normalized_energy(&subset, &b_subset, &act, DenominatorMode::Global)?;
    let local = if subset.is_empty() || b_subset.is_empty() {
        None
    } else {
        Some(normalized_energy(
            &subset,
            &b_subset,
            &act,
            DenominatorMode::Local,
        )?)
    };
    let growth = if report.energy > 0 {
        Some(cs_growth_bound(&report)?)
    } else {
        None
    };
    let product = product_set(&subset, &b_subset, &g)?;
    let payload = json!({
        "group": g.family(),
        "pair": pair,
        "report": report,
        "product_set_size": product.len(),
        "normalized_global": rat_to_string(&global),
        "normalized_local": local.map(|r| rat_to_string(&r)),
        "cs_growth_bound": growth.map(|r| rat_to_string(&r)),
    });
    let config = json!({"group": a.group, "A": a.a, "B": a.b, "pair": a.pair});
    Ok(RunOutput::new("energy", config, payload))
}

fn exact_expectation(a: &ExactArgs) -> Result<RunOutput, CoreError> {
    let variant: QVariant = a.variant.into();
    let mut methods = serde_json::Map::new();
    let mut discrepancy = None;
    let universe;
    if let Some(model) = &a.model {
        let spec = parse_model_spec(model)?;
        let radius = a.radius.unwrap();
        let value =
            genergy_core::cayley::model_filtration_expectation(&spec, radius, a.k, variant)?;
        universe = format!("{} ball radius {radius}", spec.canonical());
        methods.insert("BINOMIAL_Q".into(), json!(rat_to_string(&value)));
    } else {
        let group = a
            .group
            .as_ref()
            .ok_or_else(|| CoreError::InvalidArg("need --group or --model".into()))?;
        let g = build_group_str(group)?;
        universe = g.family().to_string();
        let want = |name: &str| a.method == "all" || a.method == name;
        let mut binomial = None;
        if want("binomial-q") {
            let v = expected_energy(&g, None, a.k, variant)?.value;
            methods.insert("BINOMIAL_Q".into(), json!(rat_to_string(&v)));
            binomial = Some(v);
        }
        if want("closed-corrected") || want("closed-uncorrected") {
            let inv = compute_invariants(&g)?;
            if want("closed-corrected") {
                let v = closed_form_expectation(
                    &g,
                    &inv,
                    a.k,
                    variant,
                    ExpectationMethod::ClosedFormCorrected,
                )?
                .value;
                methods.insert("CLOSED_FORM_CORRECTED".into(), json!(rat_to_string(&v)));
            }
            if want("closed-uncorrected") {
                let v = closed_form_expectation(
                    &g,
                    &inv,
                    a.k,
                    variant,
                    ExpectationMethod::ClosedFormUncorrected,
                )?
                .value;
                if let Some(b) = &binomial {
                    discrepancy = Some(rat_to_string(&(&v - b)));
                }
                methods.insert("CLOSED_FORM_UNCORRECTED".into(), json!(rat_to_string(&v)));
            }
        }
        if methods.is_empty() {
            return Err(CoreError::InvalidArg(format!(
                "unknown method `{}`",
                a.method
            )));
        }
    }
    let payload = json!({
        "universe": universe,
        "k": a.k,
        "variant": variant_name(variant),
        "methods": Value::Object(methods),
        "discrepancy": discrepancy,
    });
    let config = json!({
        "group": a.group, "model": a.model, "radius": a.radius,
        "k": a.k, "variant": variant_name(variant), "method": a.method,
    });
    Ok(RunOutput::new("exact-expectation", config, payload))
}

fn parse_statistic(name: &str) -> Result<Statistic, CoreError> {
    Statistic::parse(name)
}

fn mc_estimate(a: &McArgs, threads: usize) -> Result<RunOutput, CoreError> {
    let mut cfg = SamplingConfig::new(a.seed, a.trials, a.k).with_threads(threads);
    cfg.keep_histogram = a.histogram;
    let (universe_desc, estimate) = if let Some(model) = &a.model {
        let spec = parse_model_spec(model)?;
        let radius = a.radius.unwrap();
        let desc = format!("{} ball radius {radius}", spec.canonical());
        let est = match a.statistic.as_str() {
            "ENERGY_AA" => model_ball_energy_mc(&spec, radius, QVariant::Aa, &cfg)?,
            "ENERGY_AAINV" => model_ball_energy_mc(&spec, radius, QVariant::AaInv, &cfg)?,
            other => model_ball_mc_statistic(&spec, radius, &parse_statistic(other)?, &cfg)?,
        };
        (desc, est)
    } else {
        let group = a
            .group
            .as_ref()
            .ok_or_else(|| CoreError::InvalidArg("need --group or --model".into()))?;
        let g = build_group_str(group)?;
        let est = if a.statistic == "ENERGY_ACTION" {
            let h =
                a.h.ok_or_else(|| CoreError::InvalidArg("ENERGY_ACTION requires --h".into()))?;
            let act = GroupAction::regular(g.clone());
            let full = Subset::full(g.order());
            mc_action_expected(&act, &full, &full, a.k, h, &cfg)?
        } else {
            let stat = parse_statistic(&a.statistic)?;
            mc_expected(g.as_ref(), &cfg, |u, m| stat.evaluate(u, m))?
        };
        (g.family().to_string(), est)
    };
    let payload = json!({
        "universe": universe_desc,
        "statistic": a.statistic,
        "k": a.k,
        "h": a.h,
        "trials": a.trials,
        "seed": a.seed,
        "estimate": estimate,
    });
    let config = json!({
        "group": a.group, "model": a.model, "radius": a.radius, "k": a.k,
        "statistic": a.statistic, "trials": a.trials, "seed": a.seed, "h": a.h,
        "histogram": a.histogram,
    });
    Ok(RunOutput::new("mc-estimate", config, payload))
}

fn brute_force(a: &BruteArgs) -> Result<RunOutput, CoreError> {
    let stat = parse_statistic(&a.statistic)?;
    let (universe_desc, value) = if let Some(model) = &a.model {
        let spec = parse_model_spec(model)?;
        let radius = a.radius.unwrap();
        let value = brute_force_model(&spec, radius, a.k, &stat)?;
        (format!("{} ball radius {radius}", spec.canonical()), value)
    } else {
        let group = a
            .group
            .as_ref()
            .ok_or_else(|| CoreError::InvalidArg("need --group or --model".into()))?;
        let g = build_group_str(group)?;
        let value = brute_force_expected(g.as_ref(), a.k, |u, m| stat.evaluate(u, m))?;
        (g.family().to_string(), value)
    };
    let payload = json!({
        "universe": universe_desc,
        "statistic": a.statistic,
        "k": a.k,
        "value": rat_to_string(&value),
    });
    let config = json!({
        "group": a.group, "model": a.model, "radius": a.radius,
        "k": a.k, "statistic": a.statistic,
    });
    Ok(RunOutput::new("brute-force", config, payload))
}

fn brute_force_model(
    spec: &ModelSpec,
    radius: usize,
    k: usize,
    stat: &Statistic,
) -> Result<Rat, CoreError> {
    use genergy_core::cayley::{
        ball, BallUniverse, FreeModel, GroupModel, HeisenbergModel, LamplighterModel, LatticeModel,
    };
    fn run<M: GroupModel>(
        m: &M,
        radius: usize,
        k: usize,
        stat: &Statistic,
    ) -> Result<Rat, CoreError> {
        let b = ball(m, radius)?;
        let u = BallUniverse {
            model: m,
            elems: &b.elems,
        };
        brute_force_expected(&u, k, |u, mem| stat.evaluate(u, mem))
    }
    match spec {
        ModelSpec::Free(r) => run(&FreeModel { rank: *r }, radius, k, stat),
        ModelSpec::Lattice(d) => run(&LatticeModel { dim: *d }, radius, k, stat),
        ModelSpec::Heisenberg => run(&HeisenbergModel, radius, k, stat),
        ModelSpec::Lamplighter => run(&LamplighterModel, radius, k, stat),
    }
}

fn ball_densities(a: &BallDensArgs) -> Result<RunOutput, CoreError> {
    let spec = parse_model_spec(&a.model)?;
    let profile = model_density_profile(&spec, a.nmax, a.pair_cap, a.seed)?;
    let mut csv = String::from("n,ball,cp,cp_exactness,sq,iota,growth_ratio\n");
    for r in &profile.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.radius,
            r.ball_size,
            r.cp,
            if r.cp_exact { "exact" } else { "sampled" },
            r.sq,
            r.iota,
            r.growth_ratio
        ));
    }
    let payload = serde_json::to_value(&profile).expect("profile serializes");
    let config = json!({
        "model": a.model, "nmax": a.nmax, "pair_cap": a.pair_cap, "seed": a.seed,
    });
    let mut out = RunOutput::new("ball-densities", config, payload);
    out.custom_csv = Some(csv);
    Ok(out)
}

fn dominance(a: &DominanceArgs, threads: usize) -> Result<RunOutput, CoreError> {
    let cfg = SamplingConfig::new(a.seed, a.trials, a.k).with_threads(threads);
    let mut thresholds: Vec<DominanceThreshold> = Vec::new();
    let report = if let Some(model) = &a.model {
        let spec = parse_model_spec(model)?;
        thresholds.extend(default_dominance_thresholds(None));
        extend_thresholds(&mut thresholds, &a.thresholds)?;
        dominance_model(&spec, a.radius.unwrap(), &thresholds, &cfg)?
    } else {
        let group = a
            .group
            .as_ref()
            .ok_or_else(|| CoreError::InvalidArg("need --group or --model".into()))?;
        let g = build_group_str(group)?;
        // Group-aware thresholds need the invariants; skip them for orders
        // where the conjugation scan would dominate the run.
        let inv = if g.order() <= 20_000 || g.is_abelian() {
            Some(compute_invariants(&g)?)
        } else {
            None
        };
        thresholds.extend(default_dominance_thresholds(inv.as_ref()));
        extend_thresholds(&mut thresholds, &a.thresholds)?;
        dominance_experiment(g.as_ref(), &thresholds, &cfg)?
    };
    let payload = serde_json::to_value(&report).expect("report serializes");
    let config = json!({
        "group": a.group, "model": a.model, "radius": a.radius, "k": a.k,
        "trials": a.trials, "seed": a.seed, "thresholds": a.thresholds,
    });
    Ok(RunOutput::new("dominance", config, payload))
}

fn extend_thresholds(
    thresholds: &mut Vec<DominanceThreshold>,
    extra: &[String],
) -> Result<(), CoreError> {
    for t in extra {
        let r = rat_parse(t)
            .ok_or_else(|| CoreError::InvalidArg(format!("bad threshold rational `{t}`")))?;
        thresholds.push(DominanceThreshold::new(r, None, format!("user:{t}")));
    }
    Ok(())
}

fn dominance_model(
    spec: &ModelSpec,
    radius: usize,
    thresholds: &[DominanceThreshold],
    cfg: &SamplingConfig,
) -> Result<genergy_core::experiments::DominanceReport, CoreError> {
    use genergy_core::cayley::{
        ball, BallUniverse, FreeModel, GroupModel, HeisenbergModel, LamplighterModel, LatticeModel,
    };
    fn run<M: GroupModel>(
        m: &M,
        radius: usize,
        thresholds: &[DominanceThreshold],
        cfg: &SamplingConfig,
    ) -> Result<genergy_core::experiments::DominanceReport, CoreError> {
        let b = ball(m, radius)?;
        let u = BallUniverse {
            model: m,
            elems: &b.elems,
        };
        dominance_experiment(&u, thresholds, cfg)
    }
    match spec {
        ModelSpec::Free(r) => run(&FreeModel { rank: *r }, radius, thresholds, cfg),
        ModelSpec::Lattice(d) => run(&LatticeModel { dim: *d }, radius, thresholds, cfg),
        ModelSpec::Heisenberg => run(&HeisenbergModel, radius, thresholds, cfg),
        ModelSpec::Lamplighter => run(&LamplighterModel, radius, thresholds, cfg),
    }
}

fn basis(a: &BasisArgs) -> Result<RunOutput, CoreError> {
    let g = build_group_str(&a.group)?;
    let h = HFun::parse(&a.h)?;
    let result = basis_search(&g, &h, a.epsilon, a.budget, a.seed, a.prefilter)?;
    let payload = serde_json::to_value(&result).expect("result serializes");
    let config = json!({
        "group": a.group, "h": a.h, "epsilon": a.epsilon,
        "budget": a.budget, "seed": a.seed, "prefilter": a.prefilter,
    });
    Ok(RunOutput::new("basis-search", config, payload))
}

fn power(a: &PowerArgs) -> Result<RunOutput, CoreError> {
    let g = build_group_str(&a.group)?;
    let subset = Subset::new(g.order(), parse_members(&a.a)?)?;
    let profile = power_cover(&g, &subset, a.power)?;
    let payload = serde_json::to_value(&profile).expect("profile serializes");
    let config = json!({"group": a.group, "A": a.a, "power": a.power});
    Ok(RunOutput::new("power-cover", config, payload))
}

fn thin(a: &ThinArgs) -> Result<RunOutput, CoreError> {
    let report = thin_basis_demo(a.n)?;
    let payload = serde_json::to_value(&report).expect("report serializes");
    Ok(RunOutput::new("thin-basis", json!({"n": a.n}), payload))
}

fn locally_finite(a: &LocallyFiniteArgs) -> Result<RunOutput, CoreError> {
    let chain = ChainSpec::parse(&a.chain)?;
    let cfg = ChainConfig {
        h: HFun::parse(&a.h)?,
        seed: a.seed,
        budget_per_stage: a.budget,
        alpha: 1.0,
    };
    let stages = locally_finite_thin_set(&chain, &cfg)?;
    let payload = json!({
        "chain": chain.canonical(),
        "h": a.h,
        "stages": stages,
    });
    let config = json!({"chain": a.chain, "h": a.h, "seed": a.seed, "budget": a.budget});
    Ok(RunOutput::new("locally-finite", config, payload))
}

const VALIDATE_BATTERY: &[&str] = &[
    "cyclic:2",
    "cyclic:3",
    "cyclic:4",
    "cyclic:5",
    "cyclic:6",
    "cyclic:7",
    "cyclic:8",
    "ea2:2",
    "ea2:3",
    "ea2:4",
    "sym:3",
    "sym:4",
    "dihedral:4",
    "dihedral:5",
    "gl2:2",
    "gl2:3",
];

fn validate(a: &ValidateArgs) -> Result<RunOutput, CoreError> {
    let mut checks: Vec<Value> = Vec::new();
    let mut failures = 0u32;
    let mut record = |name: String, ok: bool, detail: String, checks: &mut Vec<Value>| {
        if !ok {
            failures += 1;
        }
        checks.push(
            json!({"name": name, "status": if ok { "pass" } else { "FAIL" }, "detail": detail}),
        );
    };

    let groups: Vec<Arc<FiniteGroup>> = VALIDATE_BATTERY
        .iter()
        .map(|s| build_group_str(s))
        .collect::<Result<_, _>>()?;

    for g in &groups {
        let name = g.family().to_string();
        let ok = g.validate().is_ok();
        record(
            format!("structure {name}"),
            ok,
            format!("order {}", g.order()),
            &mut checks,
        );

        let inv = compute_invariants(g)?;
        let n = g.order() as u64;
        let identities = inv.r_profile.iter().sum::<u64>() == n
            && inv.r_profile.iter().map(|r| r * r).sum::<u64>() == inv.epsilon * n
            && inv.centralizer_sizes.iter().sum::<u64>() == inv.kappa * n
            && inv.iota == inv.r_profile[g.identity() as usize]
            && 1 <= inv.epsilon
            && inv.epsilon <= inv.kappa
            && inv.kappa <= n;
        record(
            format!("invariant identities {name}"),
            identities,
            format!(
                "kappa={} epsilon={} iota={}",
                inv.kappa, inv.epsilon, inv.iota
            ),
            &mut checks,
        );

        let full = Subset::full(g.order());
        for variant in [QVariant::Aa, QVariant::AaInv] {
            let enumerated = genergy_core::q_partition(g, &full, variant)?;
            let closed = q_partition_closed_form(g, &inv, variant);
            record(
                format!("q-partition {name} {}", variant_name(variant)),
                enumerated == closed && enumerated.total() == n * n * n,
                format!("classes {:?}", enumerated.named()),
                &mut checks,
            );
        }

        for k in 1..=g.order().min(a.max_k) {
            if genergy_core::rat::binomial_exceeds(n, k as u64, caps::brute_force_cap()) {
                continue;
            }
            for variant in [QVariant::Aa, QVariant::AaInv] {
                let exact = expected_energy(g, None, k, variant)?.value;
                let brute = brute_force_expected(g.as_ref(), k, |u, m| match variant {
                    QVariant::Aa => u.energy_aa(m),
                    QVariant::AaInv => u.energy_aainv(m),
                })?;
                record(
                    format!("oracle {name} k={k} {}", variant_name(variant)),
                    exact == brute,
                    format!("value {}", rat_to_string(&exact)),
                    &mut checks,
                );
            }
            if g.order() >= 4 {
                let corrected = closed_form_expectation(
                    g,
                    &inv,
                    k,
                    QVariant::Aa,
                    ExpectationMethod::ClosedFormCorrected,
                )?
                .value;
                let bq = expected_energy(g, None, k, QVariant::Aa)?.value;
                let uncorrected = closed_form_expectation(
                    g,
                    &inv,
                    k,
                    QVariant::Aa,
                    ExpectationMethod::ClosedFormUncorrected,
                )?
                .value;
                record(
                    format!("closed forms {name} k={k}"),
                    corrected == bq && (&uncorrected - &corrected) == closed_form_discrepancy(n, k),
                    format!(
                        "corrected {} uncorrected {}",
                        rat_to_string(&corrected),
                        rat_to_string(&uncorrected)
                    ),
                    &mut checks,
                );
                let inv_cf = closed_form_expectation(
                    g,
                    &inv,
                    k,
                    QVariant::AaInv,
                    ExpectationMethod::ClosedFormCorrected,
                )?
                .value;
                let inv_bq = expected_energy(g, None, k, QVariant::AaInv)?.value;
                record(
                    format!("inverse closed form {name} k={k}"),
                    inv_cf == inv_bq,
                    format!("value {}", rat_to_string(&inv_cf)),
                    &mut checks,
                );
            }
        }

        // Overlap identity on seeded random symmetric subsets.
        let mut rng = genergy_core::SplitMix64::new(0x5eed ^ n);
        let mut overlap_ok = true;
        for _ in 0..20 {
            let k = 1 + rng.below(n) as usize;
            let base = genergy_core::sample_k_subset(g.order(), k, &mut rng)?;
            let mut sym: Vec<u32> = base.iter().map(|&x| g.inv(x)).collect();
            sym.extend(base);
            let f = Subset::new(g.order(), sym)?;
            overlap_ok &= genergy_core::fn_overlap_sum(g, &f)? == (f.len() * f.len()) as u64;
        }
        record(
            format!("overlap identity {name}"),
            overlap_ok,
            "20 random symmetric subsets".into(),
            &mut checks,
        );
    }

    // gl2 closed forms.
    for (q, expected) in [
        (2u32, (3u64, 3u64, 4u64)),
        (3, (8, 6, 14)),
        (5, (24, 8, 32)),
    ] {
        let g = build_group_str(&format!("gl2:{q}"))?;
        let inv = compute_invariants(&g)?;
        record(
            format!("gl2:{q} invariants"),
            (inv.kappa, inv.epsilon, inv.iota) == expected,
            format!("({}, {}, {})", inv.kappa, inv.epsilon, inv.iota),
            &mut checks,
        );
    }

    // Independent-pair equality case on C6.
    let c6 = build_group_str("cyclic:6")?;
    let act = GroupAction::regular(c6.clone());
    let full6 = Subset::full(6);
    let exact = action_independent_expectation(&act, &full6, &full6, 2, 2)?;
    let ordered = action_expectation_bounds(2, 2, 6, ConstantMode::Ordered)?;
    record(
        "independent-pair equality case".into(),
        exact == genergy_core::rat::rat(24, 5) && exact == ordered.upper,
        format!("value {}", rat_to_string(&exact)),
        &mut checks,
    );

    // Interval closed-form weights against generic enumeration.
    {
        use genergy_core::cayley::{ball, interval_q_weights, LatticeModel};
        use std::collections::HashSet;
        let m = LatticeModel { dim: 1 };
        let mut ok = true;
        for r in 1..=4usize {
            let b = ball(&m, r)?;
            let membership: HashSet<&Vec<i32>> = b.elems.iter().collect();
            for variant in [QVariant::Aa, QVariant::AaInv] {
                let generic = genergy_core::expectation::q_weight_counts(
                    &b.elems,
                    |x, y| genergy_core::cayley::GroupModel::mul(&m, x, y),
                    |x| genergy_core::cayley::GroupModel::inv(&m, x),
                    |d| membership.contains(d),
                    variant,
                )?;
                ok &= generic == interval_q_weights(r as u64, variant);
            }
        }
        record(
            "interval closed-form weights".into(),
            ok,
            "radii 1..=4".into(),
            &mut checks,
        );
    }

    let passed = checks.iter().filter(|c| c["status"] == "pass").count();
    let payload = json!({
        "checks": checks,
        "passed": passed,
        "failed": failures,
    });
    let mut out = RunOutput::new("validate", json!({"max_k": a.max_k}), payload);
    out.validation_failed = failures > 0;
    Ok(out)
}

/// Renders a payload as CSV: a single array-of-objects field becomes a
/// table; anything else becomes key,value rows with nested values JSON
/// encoded.
fn payload_to_csv(payload: &Value) -> String {
    fn scalar(v: &Value) -> String {
        match v {
            Value::String(s) => {
                if s.contains(',') || s.contains('"') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
    // Find a rows-like field: the unique array of objects.
    if let Value::Object(map) = payload {
        let arrays: Vec<(&String, &Vec<Value>)> = map
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Array(a) if !a.is_empty() && a.iter().all(|x| x.is_object()) => Some((k, a)),
                _ => None,
            })
            .collect();
        if arrays.len() == 1 {
            let rows = arrays[0].1;
            let mut headers: Vec<String> = Vec::new();
            for row in rows {
                if let Value::Object(obj) = row {
                    for key in obj.keys() {
                        if !headers.contains(key) {
                            headers.push(key.clone());
                        }
                    }
                }
            }
            let mut out = headers.join(",");
            out.push('\n');
            for row in rows {
                let cells: Vec<String> = headers
                    .iter()
                    .map(|h| row.get(h).map(scalar).unwrap_or_default())
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            return out;
        }
    }
    let mut out = String::from("key,value\n");
    if let Value::Object(map) = payload {
        for (k, v) in map {
            out.push_str(&format!("{k},{}\n", scalar(v)));
        }
    } else {
        out.push_str(&format!("payload,{}\n", scalar(payload)));
    }
    out
}
