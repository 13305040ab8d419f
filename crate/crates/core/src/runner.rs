//! Command implementations behind the `apce` binary.
//!
//! A run is described by a flat `key = value` configuration (file keys and
//! command-line flags share names; flags win). Models are always fitted on
//! every case; `subset` only selects the cases effects are averaged over
//! (or, for the model-free commands, the cases analyzed).
//!
//! Keys:
//!
//! ```text
//! input, schema, recipe, draws, xi, out        paths
//! outcome = fta, nca                           default: every outcome
//! seed                                         required by stochastic commands
//! rho, chains, iters, burn, latent-sweeps, mixing-moves,
//! prior-precision-decision, prior-precision-risk, cutpoint-prior-sd
//! bootstrap, threshold, max-draws, subset = field=v1|v2
//! c0-grid, c1-grid, arm
//! replicates, reps, omega-grid, level          spillover test and power
//! n, k, covariates, beta, alpha, theta0, theta1, delta,
//! attribute-labels, attribute-covariate, dates, dmf-threshold   simulate
//! threads
//! ```

use crate::bayes::{
    gibbs_run, np_sensitivity, posterior_apce, read_draws, sensitivity_grid, unconfounded_plugin, write_draws,
    GibbsConfig, PosteriorDraws, StratumDecisionTable, XiTable,
};
use crate::data::kv::{split_list, KeyValues};
use crate::data::{encode_design, ingest_csv, io::write_to, Dataset, Design, Recipe, Schema};
use crate::error::{Error, Result};
use crate::fairness::{fairness_csv, fairness_delta, fairness_delta_diff};
use crate::models::{fit_ordinal, fit_outcome_probit, Link, OrdinalFit};
use crate::nonparam::{apce_sign_table, diff_in_means_itt, potential_outcome_bounds, IttTarget};
use crate::policy::{optimal_provision, optimal_rule, optimal_share_grid, over_draws, utility_difference, UtilitySpec};
use crate::report::{config_hash, digest_file, Manifest, OutputDir};
use crate::spillover::{crt_power, crt_test};
use crate::synth::{oracle_apce, synth_generate, AttributeLaw, CovariateLaw, DgpSpec};
use crate::weights::{estimates_csv, hajek_table, principal_scores, PrincipalScoreTable};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

macro_rules! commands {
    ($($variant:ident => $name:literal, $stochastic:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum Command { $($variant),* }

        impl Command {
            pub const ALL: &'static [Command] = &[$(Command::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Command::$variant => $name),* }
            }

            /// Whether the command draws random numbers (and so needs a seed).
            pub fn stochastic(self) -> bool {
                match self { $(Command::$variant => $stochastic),* }
            }
        }

        impl FromStr for Command {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Command::$variant),)*
                    _ => Err(Error::Config(format!("unknown command `{s}`"))),
                }
            }
        }
    };
}

commands! {
    Ingest => "ingest", false;
    Itt => "itt", false;
    Signs => "signs", true;
    Bounds => "bounds", false;
    Scores => "scores", false;
    ApceHajek => "apce-hajek", true;
    Gibbs => "gibbs", true;
    ApceBayes => "apce-bayes", true;
    Fairness => "fairness", true;
    PolicyRule => "policy-rule", false;
    PolicySurface => "policy-surface", false;
    UtilityCompare => "utility-compare", false;
    Provision => "provision", false;
    Sensitivity => "sensitivity", true;
    NpSensitivity => "np-sensitivity", false;
    Crt => "crt", true;
    CrtPower => "crt-power", true;
    Simulate => "simulate", true;
}

const KNOWN_KEYS: &[&str] = &[
    "input", "schema", "recipe", "draws", "xi", "out", "outcome", "seed", "rho", "chains", "iters", "burn",
    "latent-sweeps", "mixing-moves", "prior-precision-decision", "prior-precision-risk", "cutpoint-prior-sd",
    "bootstrap", "threshold", "max-draws", "subset", "c0-grid", "c1-grid", "arm", "replicates", "reps", "omega-grid",
    "level", "n", "k", "covariates", "beta", "alpha", "theta0", "theta1", "delta", "attribute-labels",
    "attribute-covariate", "dates", "dmf-threshold", "threads",
];

/// Case filter `field=v1|v2`; field is `attribute`, `z`, `d`, `dmf`, a factor
/// or a numeric covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub field: String,
    pub values: Vec<String>,
}

impl FromStr for Subset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (field, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("subset `{s}` must be `field=value[|value]`")))?;
        let values: Vec<String> = vals.split('|').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if field.trim().is_empty() || values.is_empty() {
            return Err(Error::Config(format!("subset `{s}` must be `field=value[|value]`")));
        }
        Ok(Self {
            field: field.trim().to_string(),
            values,
        })
    }
}

impl Subset {
    pub fn label(&self) -> String {
        format!("{}={}", self.field, self.values.join("|"))
    }

    pub fn mask(&self, ds: &Dataset) -> Result<Vec<bool>> {
        let hit = |v: String| self.values.contains(&v);
        let f = self.field.as_str();
        let mask: Vec<bool> = if let Some(j) = ds.factor_names().iter().position(|n| n == f) {
            ds.records().iter().map(|r| hit(r.factors[j].clone())).collect()
        } else if let Some(j) = ds.covariate_names().iter().position(|n| n == f) {
            let vals: Vec<f64> = self
                .values
                .iter()
                .map(|v| v.parse().map_err(|_| Error::Config(format!("subset value `{v}` is not numeric"))))
                .collect::<Result<_>>()?;
            ds.records().iter().map(|r| vals.contains(&r.covariates[j])).collect()
        } else {
            match f {
                "attribute" => ds.records().iter().map(|r| hit(r.attribute.clone())).collect(),
                "z" => ds.records().iter().map(|r| hit(r.z.to_string())).collect(),
                "d" => ds.records().iter().map(|r| hit(r.d.to_string())).collect(),
                "dmf" => ds.records().iter().map(|r| r.dmf.is_some_and(|m| hit(m.to_string()))).collect(),
                _ => return Err(Error::Config(format!("subset field `{f}` is not a dataset column"))),
            }
        };
        if !mask.iter().any(|&b| b) {
            return Err(Error::EmptySubset);
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub recipe: Option<PathBuf>,
    pub draws: Option<PathBuf>,
    pub xi: Option<PathBuf>,
    pub out: PathBuf,
    pub outcomes: Vec<String>,
    pub seed: Option<u64>,
    pub gibbs: GibbsConfig,
    pub rho_grid: Vec<f64>,
    pub bootstrap: usize,
    pub threshold: usize,
    pub max_draws: usize,
    pub subset: Option<Subset>,
    pub c0_grid: Vec<f64>,
    pub c1_grid: Vec<f64>,
    pub arm: Option<u8>,
    pub replicates: usize,
    pub reps: usize,
    pub omega_grid: Vec<f64>,
    pub level: f64,
    pub dgp: Option<DgpSpec>,
    /// Canonical key-value form, hashed into the manifest.
    pub kv: KeyValues,
}

fn parse_list<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<Vec<T>>> {
    kv.get(key)
        .map(|v| {
            split_list(v)
                .iter()
                .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{s}`"))))
                .collect()
        })
        .transpose()
}

fn parse_or<T: FromStr>(kv: &KeyValues, key: &str, default: T) -> Result<T> {
    Ok(kv.parse_as(key)?.unwrap_or(default))
}

impl RunConfig {
    pub fn from_kv(command: Command, kv: KeyValues) -> Result<Self> {
        if let Some((k, _)) = kv.iter().find(|(k, _)| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let path = |key: &str| kv.get(key).map(PathBuf::from);
        let out = path("out").ok_or_else(|| Error::Config("missing required key `out`".into()))?;
        let seed: Option<u64> = kv.parse_as("seed")?;
        if command.stochastic() && seed.is_none() {
            return Err(Error::Config(format!("command `{}` needs an explicit `seed`", command.name())));
        }
        let rho_grid: Vec<f64> = parse_list(&kv, "rho")?.unwrap_or_else(|| vec![0.0]);
        if rho_grid.is_empty() {
            return Err(Error::Config("key `rho` is empty".into()));
        }
        if command != Command::Sensitivity && rho_grid.len() != 1 {
            return Err(Error::Config("a list of `rho` values is only accepted by `sensitivity`".into()));
        }
        let d = GibbsConfig::default();
        let gibbs = GibbsConfig {
            rho: rho_grid[0],
            chains: parse_or(&kv, "chains", d.chains)?,
            iterations: parse_or(&kv, "iters", d.iterations)?,
            burn_fraction: parse_or(&kv, "burn", d.burn_fraction)?,
            prior_precision_decision: parse_or(&kv, "prior-precision-decision", d.prior_precision_decision)?,
            prior_precision_risk: parse_or(&kv, "prior-precision-risk", d.prior_precision_risk)?,
            cutpoint_prior_sd: parse_or(&kv, "cutpoint-prior-sd", d.cutpoint_prior_sd)?,
            seed: seed.unwrap_or(0),
            latent_sweeps: parse_or(&kv, "latent-sweeps", d.latent_sweeps)?,
            mixing_moves: parse_or(&kv, "mixing-moves", d.mixing_moves)?,
        };
        gibbs.validate()?;
        let arm: Option<u8> = kv.parse_as("arm")?;
        if arm.is_some_and(|a| a > 1) {
            return Err(Error::Config("key `arm` must be 0 or 1".into()));
        }
        let cfg = Self {
            command,
            input: path("input"),
            schema: path("schema"),
            recipe: path("recipe"),
            draws: path("draws"),
            xi: path("xi"),
            out,
            outcomes: kv.list("outcome"),
            seed,
            gibbs,
            rho_grid,
            bootstrap: parse_or(&kv, "bootstrap", 1000)?,
            threshold: parse_or(&kv, "threshold", 1)?,
            max_draws: parse_or(&kv, "max-draws", 1000)?,
            subset: kv.get("subset").map(Subset::from_str).transpose()?,
            c0_grid: parse_list(&kv, "c0-grid")?.unwrap_or_else(|| (0..=10).map(|i| i as f64 * 0.5).collect()),
            c1_grid: parse_list(&kv, "c1-grid")?.unwrap_or_else(|| (0..=10).map(|i| i as f64 * 0.1).collect()),
            arm,
            replicates: parse_or(&kv, "replicates", 1000)?,
            reps: parse_or(&kv, "reps", 1000)?,
            omega_grid: parse_list(&kv, "omega-grid")?.unwrap_or_else(|| vec![-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5]),
            level: parse_or(&kv, "level", 0.05)?,
            dgp: if command == Command::Simulate {
                Some(dgp_from_kv(&kv, seed.unwrap_or(0))?)
            } else {
                None
            },
            kv,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let needs_input = !matches!(self.command, Command::Simulate);
        if needs_input && self.input.is_none() {
            return Err(Error::Config(format!("command `{}` needs `input`", self.command.name())));
        }
        for p in [&self.input, &self.schema, &self.recipe, &self.draws, &self.xi].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

fn dgp_from_kv(kv: &KeyValues, seed: u64) -> Result<DgpSpec> {
    let req_list = |key: &str| -> Result<Vec<f64>> {
        parse_list(kv, key)?.ok_or_else(|| Error::Config(format!("simulate needs `{key}`")))
    };
    let covariates = kv
        .list("covariates")
        .iter()
        .map(|c| match c.as_str() {
            "normal" => Ok(CovariateLaw::Normal),
            "coin" => Ok(CovariateLaw::Coin),
            o => Err(Error::Config(format!("covariate law `{o}` must be `normal` or `coin`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = {
        let l = kv.list("attribute-labels");
        if l.is_empty() {
            vec!["a".to_string(), "b".to_string()]
        } else {
            l
        }
    };
    let attribute = match kv.parse_as::<usize>("attribute-covariate")? {
        Some(j) => {
            if j == 0 || labels.len() != 2 {
                return Err(Error::Config(
                    "attribute-covariate is 1-based and needs exactly two attribute-labels".into(),
                ));
            }
            AttributeLaw::FromCovariate {
                covariate: j - 1,
                labels: [labels[0].clone(), labels[1].clone()],
            }
        }
        None => AttributeLaw::Uniform(labels),
    };
    let spec = DgpSpec {
        n: kv.parse_as("n")?.ok_or_else(|| Error::Config("simulate needs `n`".into()))?,
        k: kv.parse_as("k")?.ok_or_else(|| Error::Config("simulate needs `k`".into()))?,
        covariates,
        beta: req_list("beta")?,
        alpha: req_list("alpha")?,
        theta: [req_list("theta0")?, req_list("theta1")?],
        delta: req_list("delta")?,
        rho: parse_or(kv, "rho", 0.0)?,
        attribute,
        hearing_dates: kv.parse_as("dates")?,
        dmf_threshold: kv.parse_as("dmf-threshold")?,
        seed,
    };
    spec.validate().map_err(|e| Error::Config(format!("simulate: {e}")))?;
    Ok(spec)
}

/// Everything a command needs about its input data.
struct Loaded {
    ds: Dataset,
    design: Design,
    outcomes: Vec<String>,
    keep: Option<Vec<bool>>,
}

impl Loaded {
    fn keep(&self) -> Option<&[bool]> {
        self.keep.as_deref()
    }

    fn subset_label(&self, cfg: &RunConfig) -> String {
        cfg.subset.as_ref().map_or_else(|| "all".to_string(), Subset::label)
    }
}

fn load(cfg: &RunConfig, inputs: &mut Vec<PathBuf>) -> Result<Loaded> {
    let input = cfg.input.as_ref().ok_or_else(|| Error::Config("missing `input`".into()))?;
    let schema_path = match &cfg.schema {
        Some(p) => p.clone(),
        None => {
            let sibling = input.with_file_name("schema.txt");
            if !sibling.exists() {
                return Err(Error::Config("no `schema` given and no schema.txt next to the input".into()));
            }
            sibling
        }
    };
    inputs.push(input.clone());
    inputs.push(schema_path.clone());
    let ds = ingest_csv(input, &Schema::read(&schema_path)?)?;
    let recipe = match &cfg.recipe {
        Some(p) => {
            inputs.push(p.clone());
            Recipe::read(p)?
        }
        None => Recipe::default_for(&ds),
    };
    let design = encode_design(&ds, &recipe)?;
    let outcomes = if cfg.outcomes.is_empty() {
        ds.outcome_names().to_vec()
    } else {
        for o in &cfg.outcomes {
            ds.outcome_index(o)?;
        }
        cfg.outcomes.clone()
    };
    let keep = cfg.subset.as_ref().map(|s| s.mask(&ds)).transpose()?;
    Ok(Loaded {
        ds,
        design,
        outcomes,
        keep,
    })
}

fn restricted(l: &Loaded) -> Dataset {
    match l.keep() {
        Some(m) => l.ds.subset(&(0..m.len()).filter(|&i| m[i]).collect::<Vec<_>>()),
        None => l.ds.clone(),
    }
}

fn ordinal_per_arm(ds: &Dataset, design: &Design) -> Result<[OrdinalFit; 2]> {
    let fit = |z: u8| {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.records()[i].z == z).collect();
        let d: Vec<usize> = idx.iter().map(|&i| ds.records()[i].d).collect();
        fit_ordinal(&d, &design.select_rows(&idx), ds.k(), Link::Probit)
    };
    Ok([fit(0)?, fit(1)?])
}

fn scores_for(l: &Loaded, outcome: &str) -> Result<PrincipalScoreTable> {
    let fit = fit_outcome_probit(&l.ds, outcome, &l.design)?;
    principal_scores(&fit, &l.design)
}

/// Posterior draws per outcome: from the archive in `draws`, or fresh runs.
fn draws_for(cfg: &RunConfig, l: &Loaded, out: &mut OutputDir, inputs: &mut Vec<PathBuf>) -> Result<Vec<PosteriorDraws>> {
    if let Some(dir) = &cfg.draws {
        inputs.push(dir.join("manifest.json"));
        let d = read_draws(dir)?;
        if d.covariate_names != l.design.names {
            return Err(Error::DimensionMismatch(format!(
                "draw archive covariates {:?} do not match the design {:?}",
                d.covariate_names, l.design.names
            )));
        }
        return Ok(vec![d]);
    }
    l.outcomes
        .iter()
        .map(|o| {
            let d = gibbs_run(&l.ds, o, &l.design, &cfg.gibbs)?;
            save_draws(&d, out, o)?;
            Ok(d)
        })
        .collect()
}

fn save_draws(d: &PosteriorDraws, out: &mut OutputDir, outcome: &str) -> Result<()> {
    let sub = format!("draws_{outcome}");
    write_draws(d, &out.path().join(&sub))?;
    for c in 0..d.chains.len() {
        out.record(&format!("{sub}/chain_{c}.csv"))?;
    }
    out.record(&format!("{sub}/manifest.json"))
}

fn decision_table_csv(s: &mut String, outcome: &str, kind: &str, t: &StratumDecisionTable) {
    for z in 0..2 {
        for (r, row) in t.prob[z].iter().enumerate() {
            for (d, p) in row.iter().enumerate() {
                let _ = writeln!(s, "{outcome},{kind},{z},{r},{d},{p}");
            }
        }
    }
}

fn xi_from_file(path: &Path, k: usize) -> Result<XiTable> {
    // Rows `xi.z<z>.r<r> = ξ(d=0), …, ξ(d=k)`; absent rows are all ones.
    let kv = KeyValues::read(path)?;
    let mut raw = [vec![vec![1.0; k + 1]; k + 1], vec![vec![1.0; k + 1]; k + 1]];
    for (key, value) in kv.iter() {
        let bad = || Error::Config(format!("xi key `{key}` must look like xi.z0.r1"));
        let rest = key.strip_prefix("xi.z").ok_or_else(bad)?;
        let (z, r) = rest.split_once(".r").ok_or_else(bad)?;
        let (z, r): (usize, usize) = (z.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?);
        if z > 1 || r > k {
            return Err(bad());
        }
        let row = split_list(value)
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("xi value `{v}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        raw[z][r] = row;
    }
    XiTable::new(k, raw)
}

/// Execute one command; returns the manifest written into `out`.
pub fn run(cfg: &RunConfig) -> Result<Manifest> {
    let mut out = OutputDir::create(&cfg.out)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut seeds: BTreeMap<String, u64> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let seed = cfg.seed();
    if cfg.command.stochastic() {
        seeds.insert(cfg.command.name().to_string(), seed);
    }

    match cfg.command {
        Command::Simulate => {
            let spec = cfg.dgp.as_ref().expect("simulate config carries a DGP");
            let (ds, truth) = synth_generate(spec)?;
            let mut buf = Vec::new();
            let schema = write_to(&ds, &mut buf)?;
            out.write_text("dataset.csv", &String::from_utf8(buf).expect("CSV output is UTF-8"))?;
            out.write_text("schema.txt", &schema.to_kv().to_text())?;
            out.write_text("oracle.csv", &truth.to_csv())?;
            let oracle = oracle_apce(&truth);
            out.write_json("truth.json", &serde_json::json!({ "spec": spec, "oracle": oracle }))?;
        }
        Command::Ingest => {
            let l = load(cfg, &mut inputs)?;
            let mut buf = Vec::new();
            let schema = write_to(&l.ds, &mut buf)?;
            out.write_text("dataset.csv", &String::from_utf8(buf).expect("CSV output is UTF-8"))?;
            out.write_text("schema.txt", &schema.to_kv().to_text())?;
            let (n0, n1) = l.ds.arm_sizes();
            out.write_json(
                "summary.json",
                &serde_json::json!({ "cases": l.ds.len(), "arm_sizes": [n0, n1], "k": l.ds.k(),
                                     "outcomes": l.ds.outcome_names(), "design_columns": l.design.names }),
            )?;
        }
        Command::Itt => {
            let l = load(cfg, &mut inputs)?;
            let ds = restricted(&l);
            let mut targets: Vec<IttTarget> = (0..=ds.k()).map(IttTarget::Decision).collect();
            targets.extend(l.outcomes.iter().cloned().map(IttTarget::Outcome));
            let rows = targets.iter().map(|t| diff_in_means_itt(&ds, t)).collect::<Result<Vec<_>>>()?;
            let mut s = String::from("target,diff,lo,hi,n1,n0\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{},{},{}", r.target, r.diff, r.ci_low, r.ci_high, r.n1, r.n0);
            }
            out.write_text("itt.csv", &s)?;
            out.write_json("itt.json", &rows)?;
        }
        Command::Signs => {
            let l = load(cfg, &mut inputs)?;
            let ds = restricted(&l);
            let mut s = String::from("outcome,effect,numerator,sign,lo,hi\n");
            for o in &l.outcomes {
                for e in apce_sign_table(&ds, o, cfg.threshold, cfg.bootstrap, seed)? {
                    let _ = writeln!(s, "{o},{},{},{},{},{}", e.effect, e.numerator, e.sign, e.ci_low, e.ci_high);
                }
            }
            out.write_text("signs.csv", &s)?;
        }
        Command::Bounds => {
            let l = load(cfg, &mut inputs)?;
            let ds = restricted(&l);
            let mut s = String::from("outcome,target,lower,upper\n");
            for o in &l.outcomes {
                for b in potential_outcome_bounds(&ds, o, cfg.threshold)? {
                    let _ = writeln!(s, "{o},{},{},{}", b.target, b.lower, b.upper);
                }
            }
            out.write_text("bounds.csv", &s)?;
        }
        Command::Scores => {
            let l = load(cfg, &mut inputs)?;
            for o in &l.outcomes {
                let fit = fit_outcome_probit(&l.ds, o, &l.design)?;
                let sc = principal_scores(&fit, &l.design)?;
                let m = sc.strata();
                let mut s = String::from("case_id");
                for r in 0..m {
                    let _ = write!(s, ",e{r}");
                }
                s.push('\n');
                for (c, row) in l.ds.records().iter().zip(&sc.scores) {
                    s.push_str(&c.case_id);
                    for v in row {
                        let _ = write!(s, ",{v}");
                    }
                    s.push('\n');
                }
                out.write_text(&format!("scores_{o}.csv"), &s)?;
                out.write_json(&format!("fit_{o}.json"), &fit)?;
                if sc.negative_raw > 0 {
                    warnings.push(format!(
                        "{o}: {} raw scores below zero (min {:.4}), {:.1}% of cases flagged",
                        sc.negative_raw,
                        sc.min_raw,
                        100.0 * sc.flagged_fraction
                    ));
                }
            }
        }
        Command::ApceHajek => {
            let l = load(cfg, &mut inputs)?;
            let mut rows = Vec::new();
            for o in &l.outcomes {
                rows.extend(hajek_table(&l.ds, o, &l.design, l.keep(), cfg.bootstrap, seed)?);
            }
            out.write_text("estimates.csv", &estimates_csv(&rows))?;
            out.write_json("estimates.json", &rows)?;
        }
        Command::Gibbs => {
            let l = load(cfg, &mut inputs)?;
            let mut s = String::from("outcome,parameter,mean,lo,hi,rhat\n");
            for o in &l.outcomes {
                let d = gibbs_run(&l.ds, o, &l.design, &cfg.gibbs)?;
                save_draws(&d, &mut out, o)?;
                let rhat: BTreeMap<String, f64> = d.rhat().into_iter().collect();
                for p in d.parameter_summary() {
                    let r = rhat.get(&p.name).copied().unwrap_or(f64::NAN);
                    let _ = writeln!(s, "{o},{},{},{},{},{r}", p.name, p.mean, p.lo, p.hi);
                }
                warnings.extend(d.warnings.iter().map(|w| format!("{o}: {w}")));
            }
            out.write_text("parameters.csv", &s)?;
        }
        Command::ApceBayes => {
            let l = load(cfg, &mut inputs)?;
            let mut rows = Vec::new();
            let mut props = String::from("outcome,stratum,mean,lo,hi\n");
            for d in draws_for(cfg, &l, &mut out, &mut inputs)? {
                let pa = posterior_apce(&d, &l.design, l.keep(), cfg.max_draws)?;
                for (r, p) in pa.proportions.iter().enumerate() {
                    let _ = writeln!(props, "{},{r},{},{},{}", d.outcome, p.mean, p.lo, p.hi);
                }
                rows.extend(pa.estimates);
                warnings.extend(d.warnings.iter().map(|w| format!("{}: {w}", d.outcome)));
            }
            out.write_text("estimates.csv", &estimates_csv(&rows))?;
            out.write_text("proportions.csv", &props)?;
            out.write_json("estimates.json", &rows)?;
        }
        Command::Fairness => {
            let l = load(cfg, &mut inputs)?;
            let idx: Vec<usize> = match l.keep() {
                Some(m) => (0..m.len()).filter(|&i| m[i]).collect(),
                None => (0..l.ds.len()).collect(),
            };
            let design = l.design.select_rows(&idx);
            let all = l.ds.attributes();
            let attributes: Vec<String> = idx.iter().map(|&i| all[i].clone()).collect();
            let mut rows = Vec::new();
            let mut diff = String::from("outcome,stratum,mean,lo,hi\n");
            for d in draws_for(cfg, &l, &mut out, &mut inputs)? {
                for r in 0..=d.k + 1 {
                    for z in 0..2 {
                        rows.push(fairness_delta(&d, &design, &attributes, r, z, cfg.max_draws)?);
                    }
                    let f = fairness_delta_diff(&d, &design, &attributes, r, cfg.max_draws)?;
                    let _ = writeln!(diff, "{},{r},{},{},{}", d.outcome, f.mean, f.ci_low, f.ci_high);
                }
            }
            out.write_text("fairness.csv", &fairness_csv(&rows))?;
            out.write_text("fairness_diff.csv", &diff)?;
        }
        Command::PolicyRule => {
            let l = load(cfg, &mut inputs)?;
            for o in &l.outcomes {
                let sc = scores_for(&l, o)?;
                let k = l.ds.k();
                let mut s = String::from("case_id,c0,c1,decision");
                for d in 0..=k {
                    let _ = write!(s, ",g{d}");
                }
                s.push('\n');
                for &c0 in &cfg.c0_grid {
                    for &c1 in &cfg.c1_grid {
                        let rule = optimal_rule(&sc, &UtilitySpec::new(c0, c1)?);
                        for (i, c) in l.ds.records().iter().enumerate() {
                            if l.keep().is_some_and(|m| !m[i]) {
                                continue;
                            }
                            let _ = write!(s, "{},{c0},{c1},{}", c.case_id, rule.decisions[i]);
                            for g in &rule.g[i] {
                                let _ = write!(s, ",{g}");
                            }
                            s.push('\n');
                        }
                    }
                }
                out.write_text(&format!("rule_{o}.csv"), &s)?;
            }
        }
        Command::PolicySurface => {
            let l = load(cfg, &mut inputs)?;
            for o in &l.outcomes {
                let sc = scores_for(&l, o)?;
                let surface = optimal_share_grid(&sc, &cfg.c0_grid, &cfg.c1_grid, l.keep(), &l.subset_label(cfg))?;
                out.write_text(&format!("surface_{o}.csv"), &surface.to_csv())?;
            }
        }
        Command::UtilityCompare => {
            let l = load(cfg, &mut inputs)?;
            let arms: Vec<u8> = cfg.arm.map_or_else(|| vec![0, 1], |a| vec![a]);
            let ds = restricted(&l);
            let idx: Vec<usize> = match l.keep() {
                Some(m) => (0..m.len()).filter(|&i| m[i]).collect(),
                None => (0..l.ds.len()).collect(),
            };
            // Posterior mode when an archive is supplied, plug-in MLE otherwise.
            let jobs: Vec<(String, Option<PosteriorDraws>)> = if cfg.draws.is_some() {
                draws_for(cfg, &l, &mut out, &mut inputs)?
                    .into_iter()
                    .map(|d| (d.outcome.clone(), Some(d)))
                    .collect()
            } else {
                l.outcomes.iter().map(|o| (o.clone(), None)).collect()
            };
            let select = |t: &PrincipalScoreTable| {
                let t = t.collapsed(cfg.threshold);
                PrincipalScoreTable::from_rows(&t.outcome, t.source, idx.iter().map(|&i| t.scores[i].clone()).collect())
            };
            for (o, draws) in &jobs {
                let mut s = String::from("arm,c0,c1,value,lo,hi\n");
                let point = match draws {
                    None => Some(select(&scores_for(&l, o)?)),
                    Some(_) => None,
                };
                for &z in &arms {
                    for &c0 in &cfg.c0_grid {
                        for &c1 in &cfg.c1_grid {
                            let spec = UtilitySpec::new(c0, c1)?;
                            let (v, lo, hi) = match (&point, draws) {
                                (Some(sc), _) => {
                                    let v = utility_difference(&ds, sc, z, &spec)?;
                                    (v, v, v)
                                }
                                (None, Some(d)) => {
                                    let (sum, _) = over_draws(d, &l.design, cfg.max_draws, "utility", |t| {
                                        utility_difference(&ds, &select(t), z, &spec)
                                    })?;
                                    (sum.mean, sum.lo, sum.hi)
                                }
                                (None, None) => unreachable!("either scores or draws are present"),
                            };
                            let _ = writeln!(s, "{z},{c0},{c1},{v},{lo},{hi}");
                        }
                    }
                }
                out.write_text(&format!("utility_{o}.csv"), &s)?;
            }
        }
        Command::Provision => {
            let l = load(cfg, &mut inputs)?;
            let decision = ordinal_per_arm(&l.ds, &l.design)?;
            let mut summary = BTreeMap::new();
            for o in &l.outcomes {
                let sc = scores_for(&l, o)?;
                let rule = optimal_provision(&sc, &decision, &l.design)?;
                let mut s = String::from("case_id,h0,h1,xi\n");
                let mut provided = (0usize, 0usize);
                for (i, c) in l.ds.records().iter().enumerate() {
                    if l.keep().is_some_and(|m| !m[i]) {
                        continue;
                    }
                    provided.0 += rule.xi[i] as usize;
                    provided.1 += 1;
                    let _ = writeln!(s, "{},{},{},{}", c.case_id, rule.h[0][i], rule.h[1][i], rule.xi[i]);
                }
                out.write_text(&format!("provision_{o}.csv"), &s)?;
                summary.insert(o.clone(), provided.0 as f64 / provided.1 as f64);
            }
            out.write_json("provision_share.json", &summary)?;
        }
        Command::Sensitivity => {
            let l = load(cfg, &mut inputs)?;
            let mut s = String::from("outcome,rho,stratum,decision,point,lo,hi,max_rhat\n");
            for o in &l.outcomes {
                for e in sensitivity_grid(&l.ds, o, &l.design, &cfg.rho_grid, &cfg.gibbs, cfg.max_draws)? {
                    for a in &e.apce.estimates {
                        let _ = writeln!(
                            s,
                            "{o},{},{},{},{},{},{},{}",
                            e.rho, a.stratum, a.decision, a.point, a.ci_low, a.ci_high, e.max_rhat
                        );
                    }
                    warnings.extend(e.warnings.iter().map(|w| format!("{o} rho={}: {w}", e.rho)));
                }
            }
            out.write_text("sensitivity.csv", &s)?;
        }
        Command::NpSensitivity => {
            let l = load(cfg, &mut inputs)?;
            let k = l.ds.k();
            let xi = match &cfg.xi {
                Some(p) => {
                    inputs.push(p.clone());
                    xi_from_file(p, k)?
                }
                None => XiTable::ones(k),
            };
            let decision = ordinal_per_arm(&l.ds, &l.design)?;
            let design = match l.keep() {
                Some(m) => l.design.select_rows(&(0..m.len()).filter(|&i| m[i]).collect::<Vec<_>>()),
                None => l.design.clone(),
            };
            let mut s = String::from("outcome,kind,z,stratum,d,prob\n");
            let mut eff = String::from("outcome,kind,effect,stratum,value\n");
            for o in &l.outcomes {
                let fit = fit_outcome_probit(&l.ds, o, &l.design)?;
                let tables = [
                    ("xi", np_sensitivity(&fit, &decision, &design, &xi)?),
                    ("unconfounded", unconfounded_plugin(&fit, &decision, &design, k)?),
                ];
                for (kind, t) in &tables {
                    decision_table_csv(&mut s, o, kind, t);
                    for r in 1..=k {
                        let _ = writeln!(eff, "{o},{kind},APCEp,{r},{}", t.apce_p(r));
                    }
                    let _ = writeln!(eff, "{o},{kind},APCEs,0,{}", t.apce_s());
                }
            }
            out.write_text("np_sensitivity.csv", &s)?;
            out.write_text("np_effects.csv", &eff)?;
        }
        Command::Crt => {
            let l = load(cfg, &mut inputs)?;
            let res = crt_test(&l.ds, cfg.replicates, seed)?;
            out.write_json(
                "crt.json",
                &serde_json::json!({ "t_obs": res.t_obs, "p_value": res.p_value, "s": res.s, "redraws": res.redraws }),
            )?;
            out.write_text("null_draws.csv", &res.null_csv())?;
        }
        Command::CrtPower => {
            let l = load(cfg, &mut inputs)?;
            let curve = crt_power(&l.ds, &cfg.omega_grid, cfg.reps, cfg.replicates, cfg.level, seed)?;
            out.write_text("power.csv", &curve.to_csv())?;
            out.write_json(
                "power_model.json",
                &serde_json::json!({ "coefficients": { "z": curve.fitted[0], "ztilde": curve.fitted[1] },
                                     "cutpoints": curve.cutpoints }),
            )?;
        }
    }

    let upstream = cfg
        .input
        .as_ref()
        .map(|p| p.with_file_name("manifest.json"))
        .filter(|p| p.exists())
        .map(|p| -> Result<serde_json::Value> {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
            Ok(serde_json::json!({ "command": v["command"], "seeds": v["seeds"], "config_hash": v["config_hash"] }))
        })
        .transpose()?;
    let inputs = inputs.iter().map(|p| digest_file(p)).collect::<Result<Vec<_>>>()?;
    out.finish(Manifest {
        tool: "apce",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name().to_string(),
        config_hash: config_hash(&cfg.kv),
        config: cfg.kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        seeds,
        inputs,
        artifacts: Vec::new(),
        upstream,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> KeyValues {
        let mut kv = KeyValues::default();
        for (k, v) in pairs {
            kv.insert(*k, *v);
        }
        kv
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(Command::from_str(c.name()).unwrap(), *c);
        }
        assert!(Command::from_str("nope").is_err());
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let err = RunConfig::from_kv(Command::Crt, kv(&[("out", out), ("input", out)])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(RunConfig::from_kv(Command::Itt, kv(&[("out", out), ("input", out)])).is_ok());
    }

    #[test]
    fn unknown_keys_and_missing_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert!(RunConfig::from_kv(Command::Itt, kv(&[("out", out), ("input", out), ("typo", "1")])).is_err());
        assert!(RunConfig::from_kv(Command::Itt, kv(&[("out", out), ("input", "/no/such/file.csv")])).is_err());
        assert!(RunConfig::from_kv(Command::Gibbs, kv(&[("out", out), ("input", out), ("seed", "1"), ("rho", "0,0.1")])).is_err());
    }

    #[test]
    fn subset_parsing() {
        let s: Subset = "attribute=white_male|nonwhite_male".parse().unwrap();
        assert_eq!(s.values, ["white_male", "nonwhite_male"]);
        assert!("attribute".parse::<Subset>().is_err());
        assert!("=x".parse::<Subset>().is_err());
    }
}
