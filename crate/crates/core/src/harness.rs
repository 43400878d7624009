//! Monte-Carlo experiment orchestration.
//!
//! A grid is a list of cells (pilot pattern × sweep value). For each cell the
//! phase-noise statistics are computed once; each trial then draws one
//! deployment and `realizations` small-scale draws (channels, phase noise,
//! data, noise) that are shared by every estimator. Trials run in parallel,
//! each on its own RNG stream, and are reduced in trial order so the output
//! does not depend on scheduling.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gen_block_channels, gen_large_scale, LargeScale};
use crate::config::{LoMode, PilotPattern, ScenarioConfig};
use crate::dl::{self, DlHyperparams, DlNetwork};
use crate::estimators::{
    alternating_centralized, effective_from_iterate, lmmse_joint_distributed, lmmse_single_carrier,
    mmse_pn_unaware, pilot_residual, CpeConstraint, EffectiveEstimate, EstContext, EstimatorKind,
    Init,
};
use crate::metrics::{ici_lambda_table, mmse_combiner, Dcc, ExpectationBank, SeReport};
use crate::ofdm::{effective_channels, synthesize_pilots, SignalModel, TxFrame};
use crate::phase_noise::{PnConfig, PnStatistics, PnTrace};
use crate::{rng, Complex64, Error, Result};

/// Sweep axis of an experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    /// Both oscillator quality constants together.
    Gamma,
    GammaAp,
    GammaUe,
    NumAps,
    NumUes,
    Power,
    /// One row per OFDM symbol of the block; the value list is ignored.
    Symbol,
}

impl SweepVar {
    pub const ALL: [SweepVar; 7] = [
        SweepVar::Gamma,
        SweepVar::GammaAp,
        SweepVar::GammaUe,
        SweepVar::NumAps,
        SweepVar::NumUes,
        SweepVar::Power,
        SweepVar::Symbol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Gamma => "gamma",
            SweepVar::GammaAp => "gamma-ap",
            SweepVar::GammaUe => "gamma-ue",
            SweepVar::NumAps => "num-aps",
            SweepVar::NumUes => "num-ues",
            SweepVar::Power => "power",
            SweepVar::Symbol => "symbol",
        }
    }

    /// The scenario of one sweep cell.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(Error::config(format!(
                    "sweep value {v} is not a positive integer"
                )))
            }
        };
        match self {
            SweepVar::Gamma => {
                c.gamma_ap = value;
                c.gamma_ue = value;
            }
            SweepVar::GammaAp => c.gamma_ap = value,
            SweepVar::GammaUe => c.gamma_ue = value,
            SweepVar::NumAps => c.num_aps = count(value)?,
            SweepVar::NumUes => c.num_ues = count(value)?,
            SweepVar::Power => c.power_w = value,
            SweepVar::Symbol => {}
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::fmt::Display for SweepVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('_', "-");
        SweepVar::ALL
            .into_iter()
            .find(|v| {
                v.name() == s
                    || (s == "l" && *v == SweepVar::NumAps)
                    || (s == "k" && *v == SweepVar::NumUes)
            })
            .ok_or_else(|| Error::config(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub base: ScenarioConfig,
    /// Free-form label written to every row.
    pub scenario: String,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub patterns: Vec<PilotPattern>,
    /// Rounds of the alternating centralized estimator.
    pub n_iter: usize,
    /// Amplitude constraint for the centralized CPE estimates.
    pub constraint: Option<CpeConstraint>,
    /// Serve each UE by its m strongest APs instead of all of them.
    pub dcc_strongest: Option<usize>,
    /// Also report every intermediate iterate of the centralized estimators.
    pub per_iteration: bool,
    pub dl: DlHyperparams,
    /// Pre-trained network for the DL-initialised estimator; trained on demand otherwise.
    #[serde(skip)]
    pub dl_model: Option<Arc<DlNetwork>>,
    pub output: Option<PathBuf>,
}

impl ExperimentGrid {
    pub fn new(
        base: ScenarioConfig,
        sweep: SweepVar,
        values: Vec<f64>,
        estimators: Vec<EstimatorKind>,
    ) -> Self {
        let patterns = vec![base.pattern];
        let constraint = Some(CpeConstraint::for_scenario(&base));
        ExperimentGrid {
            base,
            scenario: "custom".into(),
            sweep,
            values,
            estimators,
            patterns,
            n_iter: 3,
            constraint,
            dcc_strongest: None,
            per_iteration: false,
            dl: DlHyperparams::default(),
            dl_model: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.values.is_empty() && self.sweep != SweepVar::Symbol {
            return Err(Error::config("sweep has no values"));
        }
        if self.estimators.is_empty() || self.patterns.is_empty() {
            return Err(Error::config(
                "need at least one estimator and one pilot pattern",
            ));
        }
        if self.base.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.n_iter == 0 && self.estimators.iter().any(|e| e.is_centralized()) {
            return Err(Error::config(
                "centralized estimators need at least one iteration",
            ));
        }
        if let Some(0) = self.dcc_strongest {
            return Err(Error::config("each UE needs at least one serving AP"));
        }
        self.dl.validate()
    }

    /// Scenario of every cell, pattern-major.
    pub fn cells(&self) -> Result<Vec<(PilotPattern, f64, ScenarioConfig)>> {
        let values = if self.sweep == SweepVar::Symbol {
            vec![f64::NAN]
        } else {
            self.values.clone()
        };
        let mut out = Vec::new();
        for &p in &self.patterns {
            for &v in &values {
                let mut base = self.base.clone();
                base.pattern = p;
                out.push((p, v, self.sweep.apply(&base, v)?));
            }
        }
        Ok(out)
    }
}

/// Estimator output reported separately: the final estimate, or one iterate
/// of a centralized estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    pub kind: EstimatorKind,
    pub iteration: Option<usize>,
}

impl Label {
    fn list(estimators: &[EstimatorKind], n_iter: usize, per_iteration: bool) -> Vec<Label> {
        let mut out = Vec::new();
        for &kind in estimators {
            if kind.is_centralized() && per_iteration {
                out.extend((0..=n_iter).map(|i| Label {
                    kind,
                    iteration: Some(i),
                }));
            } else {
                out.push(Label {
                    kind,
                    iteration: kind.is_centralized().then_some(n_iter),
                });
            }
        }
        out
    }
}

/// Error sums of one label over the realizations of a trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MseAccum {
    /// Σ |J_0 h − ĝ|² over (k, l, τ).
    pub eff_err: f64,
    /// Σ β over (k, l, τ).
    pub eff_norm: f64,
    /// Σ |h − ĥ|² over (k, l); centralized estimators only.
    pub ch_err: f64,
    pub ch_norm: f64,
    /// Σ |J_0 − Ĵ|² over (k, l, τ), after and before the constraint.
    pub cpe_err: f64,
    pub cpe_err_raw: f64,
    pub cpe_count: f64,
    /// Σ ‖y − model(ĥ, Ĵ)‖² over APs.
    pub residual: f64,
    pub count: usize,
}

impl MseAccum {
    pub fn merge(&mut self, o: &MseAccum) {
        self.eff_err += o.eff_err;
        self.eff_norm += o.eff_norm;
        self.ch_err += o.ch_err;
        self.ch_norm += o.ch_norm;
        self.cpe_err += o.cpe_err;
        self.cpe_err_raw += o.cpe_err_raw;
        self.cpe_count += o.cpe_count;
        self.residual += o.residual;
        self.count += o.count;
    }

    pub fn eff_nmse(&self) -> f64 {
        self.eff_err / self.eff_norm
    }

    pub fn channel_nmse(&self) -> Option<f64> {
        (self.ch_norm > 0.0).then(|| self.ch_err / self.ch_norm)
    }

    pub fn cpe_mse(&self) -> Option<f64> {
        (self.cpe_count > 0.0).then(|| self.cpe_err / self.cpe_count)
    }

    pub fn cpe_mse_raw(&self) -> Option<f64> {
        (self.cpe_count > 0.0).then(|| self.cpe_err_raw / self.cpe_count)
    }

    pub fn mean_residual(&self) -> Option<f64> {
        (self.cpe_count > 0.0 && self.count > 0).then(|| self.residual / self.count as f64)
    }
}

/// What to compute per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialMode {
    pub se: bool,
    pub mse: bool,
}

/// Shared, read-only inputs of every trial in one cell.
pub struct CellSetup<'a> {
    pub cfg: &'a ScenarioConfig,
    pub stats: &'a PnStatistics,
    pub labels: &'a [Label],
    pub n_iter: usize,
    pub constraint: Option<CpeConstraint>,
    pub dcc_strongest: Option<usize>,
    pub net: Option<&'a DlNetwork>,
    pub mode: TrialMode,
}

/// Per-label results of one trial (one deployment).
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub ls: LargeScale,
    pub banks: Vec<ExpectationBank>,
    pub se: Vec<Option<SeReport>>,
    pub mse: Vec<MseAccum>,
}

fn add_eff_mse(acc: &mut MseAccum, est: &EffectiveEstimate, truth: &[Complex64], ls: &LargeScale) {
    for (i, (g, t)) in est.h.iter().zip(truth).enumerate() {
        let kl = i / est.tau_c;
        acc.eff_err += (t - g).norm_sqr();
        acc.eff_norm += ls.beta(kl / est.num_aps, kl % est.num_aps);
    }
}

/// Runs one trial: one deployment and `cfg.realizations` small-scale draws.
/// RNG order per realization: channels, phase noise, data, exact-model pilot
/// noise, single-carrier-model pilot noise.
pub fn run_trial(setup: &CellSetup, trial: usize) -> Result<TrialOutput> {
    let cfg = setup.cfg;
    let mut r = rng::stream(cfg.seed, trial as u64);
    let ls = gen_large_scale(cfg, &mut r)?;
    let dcc = match setup.dcc_strongest {
        Some(m) => Dcc::strongest(&ls, m),
        None => Dcc::all(cfg.num_ues, cfg.num_aps),
    };
    let ctx = EstContext::new(cfg, setup.stats, &ls);
    let plan = &setup.stats.plan;
    let pn = PnConfig::from_scenario(cfg);
    let m = cfg.eval_subcarrier;
    let lambda = ici_lambda_table(setup.stats, cfg, &ls);
    let no_ici = vec![0.0; lambda.len()];
    let nl = setup.labels.len();
    let mut banks: Vec<ExpectationBank> = (0..nl)
        .map(|_| ExpectationBank::new(cfg.num_ues, cfg.coherence.tau_c))
        .collect();
    let mut mse = vec![MseAccum::default(); nl];
    let needs = |k: EstimatorKind| setup.labels.iter().any(|l| l.kind == k);

    for _ in 0..cfg.realizations {
        let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
        let trace = PnTrace::generate(&pn, cfg.num_ues, cfg.num_aps, &mut r);
        let tx = TxFrame::generate(cfg, plan, &mut r);
        let y = synthesize_pilots(cfg, plan, &tx, &ch, &trace, SignalModel::Exact, &mut r);
        let y_sc = synthesize_pilots(cfg, plan, &tx, &ch, &trace, SignalModel::Mismatched, &mut r);
        let g = effective_channels(cfg, &ch, &trace, SignalModel::Exact, m);
        let g_sc = effective_channels(cfg, &ch, &trace, SignalModel::Mismatched, m);

        let mut central: HashMap<EstimatorKind, Vec<crate::estimators::Iterate>> = HashMap::new();
        for kind in [
            EstimatorKind::ProposedCentralizedLmmse,
            EstimatorKind::ProposedCentralizedDl,
        ] {
            if !needs(kind) {
                continue;
            }
            let init = match kind {
                EstimatorKind::ProposedCentralizedDl => Init::Dl(setup.net.ok_or_else(|| {
                    Error::config("DL-initialised estimator needs a trained network")
                })?),
                _ => Init::Lmmse,
            };
            let res = alternating_centralized(&ctx, &y, init, setup.n_iter, setup.constraint)?;
            central.insert(kind, res.iterates);
        }
        let mut plain: HashMap<EstimatorKind, EffectiveEstimate> = HashMap::new();
        for (i, label) in setup.labels.iter().enumerate() {
            let (truth, lam) = if label.kind == EstimatorKind::SingleCarrier {
                (&g_sc, &no_ici)
            } else {
                (&g, &lambda)
            };
            let est = match label.kind {
                k if k.is_centralized() => {
                    let it = &central[&k][label.iteration.unwrap_or(setup.n_iter)];
                    if setup.mode.mse {
                        let a = &mut mse[i];
                        for k2 in 0..cfg.num_ues {
                            for l in 0..cfg.num_aps {
                                a.ch_err += (ch.get(k2, l, 0) - it.h.get(k2, l)).norm_sqr();
                                a.ch_norm += ls.beta(k2, l);
                                for tau in 0..cfg.coherence.tau_c {
                                    let j = trace.cpe(k2, l, tau);
                                    let idx = it.cpe.idx(k2, l, tau);
                                    a.cpe_err += (j - it.cpe.j[idx]).norm_sqr();
                                    a.cpe_err_raw += (j - it.cpe.raw[idx]).norm_sqr();
                                    a.cpe_count += 1.0;
                                }
                            }
                        }
                        a.residual += pilot_residual(&ctx, &y, it);
                    }
                    effective_from_iterate(&ctx, it)
                }
                k => {
                    if !plain.contains_key(&k) {
                        let e = match k {
                            EstimatorKind::Unaware => mmse_pn_unaware(&ctx, &y)?,
                            EstimatorKind::Mismatched => lmmse_single_carrier(&ctx, &y, m)?,
                            EstimatorKind::ProposedDistributed => {
                                lmmse_joint_distributed(&ctx, &y)?
                            }
                            EstimatorKind::SingleCarrier => lmmse_single_carrier(&ctx, &y_sc, m)?,
                            _ => unreachable!(),
                        };
                        plain.insert(k, e);
                    }
                    plain[&k].clone()
                }
            };
            if setup.mode.mse {
                add_eff_mse(&mut mse[i], &est, truth, &ls);
                mse[i].count += 1;
            }
            if setup.mode.se {
                let w = mmse_combiner(&est, &dcc, cfg)?;
                banks[i].accumulate(&w, &dcc, truth, lam)?;
            }
        }
    }
    let se = banks
        .iter()
        .map(|b| {
            if setup.mode.se {
                SeReport::from_bank(b, cfg).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialOutput { ls, banks, se, mse })
}

/// One aggregated output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub sweep: String,
    pub value: f64,
    pub estimator: String,
    pub iteration: Option<usize>,
    pub pattern: String,
    pub gamma_ap: f64,
    pub gamma_ue: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub power_w: f64,
    /// Set for per-symbol rows.
    pub tau: Option<usize>,
    pub trials: usize,
    /// Mean over trials of the UE-averaged SE (bit/s/Hz).
    pub mean_se: Option<f64>,
    /// 95% confidence half-width of `mean_se` from the per-trial samples.
    pub ci_se: Option<f64>,
    pub eff_nmse: Option<f64>,
    pub channel_nmse: Option<f64>,
    pub cpe_mse: Option<f64>,
    pub cpe_mse_unconstrained: Option<f64>,
    pub residual: Option<f64>,
}

/// Per-UE, per-symbol row, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailRow {
    pub estimator: String,
    pub scenario: String,
    pub gamma_ap: f64,
    pub gamma_ue: f64,
    pub pattern: String,
    pub tau: usize,
    pub ue: usize,
    pub sinr: f64,
    pub se: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub power_w: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub detail: Vec<DetailRow>,
}

/// Mean and 95% normal-approximation half-width; the half-width is NaN for
/// fewer than two samples.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Trains (or fetches) one network per training class.
#[derive(Default)]
pub struct NetworkCache {
    nets: HashMap<String, Arc<DlNetwork>>,
}

impl NetworkCache {
    pub fn insert(&mut self, net: Arc<DlNetwork>) {
        self.nets.insert(net.class_hash.clone(), net);
    }

    pub fn get_or_train(
        &mut self,
        cfg: &ScenarioConfig,
        hyper: &DlHyperparams,
    ) -> Result<Arc<DlNetwork>> {
        let hash = DlNetwork::class_hash(cfg);
        if let Some(n) = self.nets.get(&hash) {
            return Ok(n.clone());
        }
        log::info!("training channel network for class {}", &hash[..12]);
        let net = Arc::new(train_network(cfg, hyper)?.0);
        self.nets.insert(hash, net.clone());
        Ok(net)
    }
}

/// Draws a training set for the scenario and trains a network on it.
pub fn train_network(
    cfg: &ScenarioConfig,
    hyper: &DlHyperparams,
) -> Result<(DlNetwork, dl::TrainReport)> {
    let mut r = rng::stream(hyper.seed, 0);
    let data = dl::gen_training_set(cfg, hyper.n_train, &mut r)?;
    dl::train(
        &cfg.pilot_plan()?,
        &data,
        hyper,
        DlNetwork::class_hash(cfg),
        &mut r,
    )
}

struct Sinks {
    summary: csv::Writer<std::fs::File>,
    detail: Option<csv::Writer<std::fs::File>>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn open_sinks(grid: &ExperimentGrid, detail: bool) -> Result<Option<Sinks>> {
    let Some(path) = &grid.output else {
        return Ok(None);
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let sidecar = serde_json::json!({
        "config": grid.base,
        "config_hash": grid.base.hash(),
        "grid": grid,
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        sibling(path, ".json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    let summary = csv::Writer::from_path(path)?;
    let detail = if detail {
        Some(csv::Writer::from_path(sibling(path, ".detail.csv"))?)
    } else {
        None
    };
    Ok(Some(Sinks { summary, detail }))
}

/// Writes a gnuplot script stub plotting mean SE (or NMSE) against the sweep
/// value, one curve per estimator.
pub fn write_gnuplot_stub(grid: &ExperimentGrid, column: &str) -> Result<PathBuf> {
    let path = grid
        .output
        .as_ref()
        .ok_or_else(|| Error::config("--gnuplot needs an output path"))?;
    let gp = sibling(path, ".gp");
    let mut f = std::fs::File::create(&gp)?;
    writeln!(f, "# columns: see header of {}", path.display())?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead")?;
    writeln!(f, "set xlabel '{}'", grid.sweep)?;
    writeln!(f, "set ylabel '{column}'")?;
    if matches!(
        grid.sweep,
        SweepVar::Gamma | SweepVar::GammaAp | SweepVar::GammaUe
    ) {
        writeln!(f, "set logscale x")?;
    }
    let plots: Vec<String> = grid
        .estimators
        .iter()
        .map(|e| {
            format!(
                "'{}' using (strcol('estimator') eq '{e}' ? column('value') : 1/0):(column('{column}')) with linespoints title '{e}'",
                path.display()
            )
        })
        .collect();
    writeln!(f, "plot {}", plots.join(", \\\n     "))?;
    Ok(gp)
}

fn run_cells(grid: &ExperimentGrid, mode: TrialMode) -> Result<ExperimentResult> {
    grid.validate()?;
    if grid.base.lo_mode == LoMode::Separate && grid.estimators.iter().any(|e| e.is_centralized()) {
        log::warn!("centralized estimators with separate oscillators: the joint CPE model has no common phase to exploit");
    }
    let labels = Label::list(&grid.estimators, grid.n_iter, grid.per_iteration);
    let mut nets = NetworkCache::default();
    if let Some(n) = &grid.dl_model {
        nets.insert(n.clone());
    }
    let mut sinks = open_sinks(grid, mode.se)?;
    let mut result = ExperimentResult::default();
    for (pattern, value, cfg) in grid.cells()? {
        let stats = PnStatistics::from_scenario(&cfg)?;
        let net = if grid
            .estimators
            .contains(&EstimatorKind::ProposedCentralizedDl)
        {
            let n = match &grid.dl_model {
                Some(n) => n.clone(),
                None => nets.get_or_train(&cfg, &grid.dl)?,
            };
            Some(n)
        } else {
            None
        };
        let setup = CellSetup {
            cfg: &cfg,
            stats: &stats,
            labels: &labels,
            n_iter: grid.n_iter,
            constraint: grid.constraint,
            dcc_strongest: grid.dcc_strongest,
            net: net.as_deref(),
            mode,
        };
        log::info!(
            "cell {pattern} {}={value}: {} trials",
            grid.sweep,
            cfg.trials
        );
        let trials: Vec<TrialOutput> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(&setup, t))
            .collect::<Result<Vec<_>>>()?;
        let (rows, detail) = aggregate(grid, pattern, value, &cfg, &labels, &trials, mode);
        if let Some(s) = sinks.as_mut() {
            for r in &rows {
                s.summary.serialize(r)?;
            }
            s.summary.flush()?;
            if let Some(d) = s.detail.as_mut() {
                for r in &detail {
                    d.serialize(r)?;
                }
                d.flush()?;
            }
        }
        result.rows.extend(rows);
        result.detail.extend(detail);
    }
    Ok(result)
}

fn aggregate(
    grid: &ExperimentGrid,
    pattern: PilotPattern,
    value: f64,
    cfg: &ScenarioConfig,
    labels: &[Label],
    trials: &[TrialOutput],
    mode: TrialMode,
) -> (Vec<ResultRow>, Vec<DetailRow>) {
    let (k_n, tc) = (cfg.num_ues, cfg.coherence.tau_c);
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    let row = |label: &Label, value: f64, tau: Option<usize>| ResultRow {
        scenario: grid.scenario.clone(),
        sweep: grid.sweep.to_string(),
        value,
        estimator: label.kind.to_string(),
        iteration: label.iteration,
        pattern: pattern.to_string(),
        gamma_ap: cfg.gamma_ap,
        gamma_ue: cfg.gamma_ue,
        num_aps: cfg.num_aps,
        num_ues: cfg.num_ues,
        power_w: cfg.power_w,
        tau,
        trials: trials.len(),
        mean_se: None,
        ci_se: None,
        eff_nmse: None,
        channel_nmse: None,
        cpe_mse: None,
        cpe_mse_unconstrained: None,
        residual: None,
    };
    for (i, label) in labels.iter().enumerate() {
        let mut base = row(label, value, None);
        if mode.mse {
            let mut acc = MseAccum::default();
            trials.iter().for_each(|t| acc.merge(&t.mse[i]));
            base.eff_nmse = Some(acc.eff_nmse());
            base.channel_nmse = acc.channel_nmse();
            base.cpe_mse = acc.cpe_mse();
            base.cpe_mse_unconstrained = acc.cpe_mse_raw();
            base.residual = acc.mean_residual();
        }
        if !mode.se {
            rows.push(base);
            continue;
        }
        let reports: Vec<&SeReport> = trials.iter().filter_map(|t| t.se[i].as_ref()).collect();
        if grid.sweep == SweepVar::Symbol {
            for tau in 0..tc {
                let samples: Vec<f64> = reports
                    .iter()
                    .map(|r| (0..k_n).map(|k| r.se_at(k, tau)).sum::<f64>() / k_n as f64)
                    .collect();
                let (m, ci) = mean_ci(&samples);
                let mut r = row(label, tau as f64, Some(tau));
                r.mean_se = Some(m);
                r.ci_se = Some(ci);
                rows.push(r);
            }
        } else {
            let samples: Vec<f64> = reports
                .iter()
                .map(|r| r.se.iter().sum::<f64>() / k_n as f64)
                .collect();
            let (m, ci) = mean_ci(&samples);
            base.mean_se = Some(m);
            base.ci_se = Some(ci);
            rows.push(base);
        }
        let name = match label.iteration {
            Some(it) if grid.per_iteration => format!("{}@{it}", label.kind),
            _ => label.kind.to_string(),
        };
        for tau in 0..tc {
            for k in 0..k_n {
                let n = reports.len() as f64;
                detail.push(DetailRow {
                    estimator: name.clone(),
                    scenario: grid.scenario.clone(),
                    gamma_ap: cfg.gamma_ap,
                    gamma_ue: cfg.gamma_ue,
                    pattern: pattern.to_string(),
                    tau,
                    ue: k,
                    sinr: reports.iter().map(|r| r.sinr[k][tau]).sum::<f64>() / n,
                    se: reports.iter().map(|r| r.se_at(k, tau)).sum::<f64>() / n,
                    num_aps: cfg.num_aps,
                    num_ues: cfg.num_ues,
                    power_w: cfg.power_w,
                });
            }
        }
    }
    (rows, detail)
}

/// SE experiment over the grid.
pub fn run_experiment(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    run_cells(
        grid,
        TrialMode {
            se: true,
            mse: false,
        },
    )
}

/// Channel/CPE estimation-error experiment over the grid.
pub fn mse_experiment(grid: &ExperimentGrid) -> Result<ExperimentResult> {
    run_cells(
        grid,
        TrialMode {
            se: false,
            mse: true,
        },
    )
}
