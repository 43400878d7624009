use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use cfpn_core::channel::gen_large_scale;
use cfpn_core::config::{BetaModel, LoMode, PilotPattern, Preset, ScenarioConfig};
use cfpn_core::dl::{DlHyperparams, DlNetwork};
use cfpn_core::estimators::{CpeConstraint, EstimatorKind};
use cfpn_core::harness::{self, ExperimentGrid, ExperimentResult, SweepVar};
use cfpn_core::metrics::{complexity_report, ComplexityParams, Dcc, COMPLEXITY_ROWS};
use cfpn_core::phase_noise::{increment_variance, PnStatistics};
use cfpn_core::{rng, Error, Result};

#[derive(Parser)]
#[command(
    name = "cfpn",
    version,
    about = "Uplink cell-free massive MIMO OFDM simulator with phase noise"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Spectral-efficiency sweep.
    Simulate(ExperimentArgs),
    /// Channel and CPE estimation-error sweep.
    Mse(ExperimentArgs),
    /// Train the neural channel estimator and save it.
    TrainDl(TrainArgs),
    /// Print phase-noise statistics as JSON.
    PnStats(ScenarioArgs),
    /// Operation and fronthaul counts per estimator as CSV.
    Complexity(ComplexityArgs),
    /// Draw one deployment and print the large-scale gains as CSV.
    Channels(ChannelArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// TOML scenario file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "scenario1")]
    preset: String,
    /// Full-size preset instead of the desk-scale one.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_cp: Option<usize>,
    #[arg(long)]
    n_c: Option<usize>,
    #[arg(long)]
    tau_c: Option<usize>,
    #[arg(long)]
    tau_p: Option<usize>,
    #[arg(long)]
    pattern: Option<PilotPattern>,
    #[arg(short = 'L', long)]
    num_aps: Option<usize>,
    #[arg(short = 'K', long)]
    num_ues: Option<usize>,
    #[arg(long)]
    lo_mode: Option<LoMode>,
    /// Sets both oscillator constants.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_ap: Option<f64>,
    #[arg(long)]
    gamma_ue: Option<f64>,
    /// Transmit power in watts.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    noise_figure: Option<f64>,
    /// Noise power per sample in watts (overrides the thermal model).
    #[arg(long)]
    noise_power: Option<f64>,
    /// "paper" or "uniform:<gain>".
    #[arg(long)]
    beta: Option<BetaModel>,
    #[arg(long)]
    eval_subcarrier: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::from_toml_file(p)?,
            None => {
                let p: Preset = self.preset.parse()?;
                if self.full {
                    ScenarioConfig::preset(p)
                } else {
                    ScenarioConfig::desk(p)
                }
            }
        };
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.grid.n, self.n);
        set(&mut c.grid.n_cp, self.n_cp);
        set(&mut c.coherence.n_c, self.n_c);
        set(&mut c.coherence.tau_c, self.tau_c);
        set(&mut c.coherence.tau_p, self.tau_p);
        set(&mut c.num_aps, self.num_aps);
        set(&mut c.num_ues, self.num_ues);
        set(&mut c.eval_subcarrier, self.eval_subcarrier);
        set(&mut c.trials, self.trials);
        set(&mut c.realizations, self.realizations);
        if let Some(p) = self.pattern {
            c.pattern = p;
        }
        if let Some(m) = self.lo_mode {
            c.lo_mode = m;
        }
        if let Some(g) = self.gamma {
            c.gamma_ap = g;
            c.gamma_ue = g;
        }
        if let Some(g) = self.gamma_ap {
            c.gamma_ap = g;
        }
        if let Some(g) = self.gamma_ue {
            c.gamma_ue = g;
        }
        if let Some(p) = self.power {
            c.power_w = p;
        }
        if let Some(f) = self.noise_figure {
            c.noise_figure_db = f;
        }
        if self.noise_power.is_some() {
            c.noise_power = self.noise_power;
        }
        if let Some(b) = &self.beta {
            c.beta_model = *b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "gamma")]
    sweep: SweepVar,
    /// Comma-separated sweep values; defaults to the scenario's own value.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "proposed-distributed,mismatched,unaware"
    )]
    estimators: Vec<EstimatorKind>,
    /// Comma-separated pilot patterns; defaults to the scenario's own pattern.
    #[arg(long, value_delimiter = ',')]
    patterns: Vec<PilotPattern>,
    #[arg(long, default_value_t = 3)]
    n_iter: usize,
    /// Disable the CPE amplitude constraint.
    #[arg(long)]
    no_constraint: bool,
    #[arg(long, requires = "kappa_max")]
    kappa_min: Option<f64>,
    #[arg(long, requires = "kappa_min")]
    kappa_max: Option<f64>,
    /// Serve each UE by its m strongest APs.
    #[arg(long)]
    dcc_strongest: Option<usize>,
    /// Report every iterate of the centralized estimators.
    #[arg(long)]
    per_iteration: bool,
    /// Pre-trained network for the DL-initialised estimator.
    #[arg(long)]
    dl_model: Option<PathBuf>,
    #[arg(long, default_value = "custom")]
    label: String,
    /// Output CSV; a JSON sidecar and per-UE detail CSV are written next to it.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write a gnuplot script stub next to the CSV.
    #[arg(long)]
    gnuplot: bool,
    #[command(flatten)]
    dl: DlArgs,
}

#[derive(Args, Clone)]
struct DlArgs {
    #[arg(long, default_value_t = 100)]
    m1: usize,
    #[arg(long, default_value_t = 100)]
    m2: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 3000)]
    n_train: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 7)]
    dl_seed: u64,
}

impl DlArgs {
    fn hyper(&self) -> DlHyperparams {
        DlHyperparams {
            m1: self.m1,
            m2: self.m2,
            epochs: self.epochs,
            n_train: self.n_train,
            batch: self.batch,
            lr0: self.lr,
            seed: self.dl_seed,
            ..DlHyperparams::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    dl: DlArgs,
    /// Where to save the trained network.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ComplexityArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Estimator or table-row names; all rows by default.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long)]
    dcc_strongest: Option<usize>,
    #[arg(long, default_value_t = 3)]
    n_iter: usize,
    #[arg(long, default_value_t = 100)]
    m1: usize,
    #[arg(long, default_value_t = 100)]
    m2: usize,
    /// Report for this UE and AP.
    #[arg(long, default_value_t = 0)]
    ue: usize,
    #[arg(long, default_value_t = 0)]
    ap: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChannelArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trial index whose deployment is drawn.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn grid_from(a: &ExperimentArgs) -> Result<ExperimentGrid> {
    let base = a.scenario.resolve()?;
    let values = if a.values.is_empty() {
        vec![match a.sweep {
            SweepVar::Gamma | SweepVar::GammaAp => base.gamma_ap,
            SweepVar::GammaUe => base.gamma_ue,
            SweepVar::NumAps => base.num_aps as f64,
            SweepVar::NumUes => base.num_ues as f64,
            SweepVar::Power => base.power_w,
            SweepVar::Symbol => f64::NAN,
        }]
    } else {
        a.values.clone()
    };
    let mut g = ExperimentGrid::new(base, a.sweep, values, a.estimators.clone());
    if !a.patterns.is_empty() {
        g.patterns = a.patterns.clone();
    }
    g.scenario = a.label.clone();
    g.n_iter = a.n_iter;
    g.constraint = match (a.no_constraint, a.kappa_min, a.kappa_max) {
        (true, _, _) => None,
        (false, Some(lo), Some(hi)) => Some(CpeConstraint::new(lo, hi)?),
        _ => g.constraint,
    };
    g.dcc_strongest = a.dcc_strongest;
    g.per_iteration = a.per_iteration;
    g.dl = a.dl.hyper();
    if let Some(p) = &a.dl_model {
        g.dl_model = Some(Arc::new(DlNetwork::load(p)?));
    }
    g.output = a.out.clone();
    Ok(g)
}

fn print_rows(res: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in &res.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: &ExperimentArgs, mse: bool) -> Result<()> {
    let g = grid_from(a)?;
    let res = if mse {
        harness::mse_experiment(&g)?
    } else {
        harness::run_experiment(&g)?
    };
    if a.gnuplot {
        let gp = harness::write_gnuplot_stub(&g, if mse { "eff_nmse" } else { "mean_se" })?;
        log::info!("wrote {}", gp.display());
    }
    if g.output.is_none() {
        print_rows(&res)?;
    }
    Ok(())
}

fn train_dl(a: &TrainArgs) -> Result<()> {
    let cfg = a.scenario.resolve()?;
    let (net, report) = harness::train_network(&cfg, &a.dl.hyper())?;
    net.save(&a.out)?;
    let summary = serde_json::json!({
        "model": a.out,
        "class_hash": net.class_hash,
        "epochs": report.epoch_loss.len(),
        "steps": report.steps,
        "first_loss": report.epoch_loss.first(),
        "final_loss": report.epoch_loss.last(),
    });
    writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(&summary)?
    )?;
    Ok(())
}

fn pn_stats(a: &ScenarioArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let st = PnStatistics::from_scenario(&cfg)?;
    let ts = cfg.grid.sample_time();
    let tc = cfg.coherence.tau_c as i64;
    let out = serde_json::json!({
        "config_hash": cfg.hash(),
        "sigma2_ap": increment_variance(cfg.gamma_ap, cfg.grid.f_c, ts),
        "sigma2_ue": increment_variance(cfg.gamma_ue, cfg.grid.f_c, ts),
        "b00": st.b00_at(0).re,
        "ici_fraction": st.ici_fraction(),
        "b00_lags": (-(tc - 1)..tc).map(|d| [st.b00_at(d).re, st.b00_at(d).im]).collect::<Vec<_>>(),
        "cpe_mean": st.mean0.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "drift_power": st.diag,
    });
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

fn complexity(a: &ComplexityArgs) -> Result<()> {
    let cfg = a.scenario.resolve()?;
    if a.ue >= cfg.num_ues || a.ap >= cfg.num_aps {
        return Err(Error::Config("--ue/--ap out of range".into()));
    }
    let dcc = match a.dcc_strongest {
        Some(m) => Dcc::strongest(&gen_large_scale(&cfg, &mut rng::stream(cfg.seed, 0))?, m),
        None => Dcc::all(cfg.num_ues, cfg.num_aps),
    };
    let p = ComplexityParams::from_scenario(&cfg, &dcc, a.ue, a.ap, a.m1, a.m2, a.n_iter);
    let names: Vec<String> = if a.estimators.is_empty() {
        COMPLEXITY_ROWS.iter().map(|s| s.to_string()).collect()
    } else {
        a.estimators.clone()
    };
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for n in &names {
        for row in complexity_report(&p, n)? {
            w.serialize(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn channels(a: &ChannelArgs) -> Result<()> {
    let cfg = a.scenario.resolve()?;
    let ls = gen_large_scale(&cfg, &mut rng::stream(cfg.seed, a.trial))?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["ue", "ap", "ue_x", "ue_y", "ap_x", "ap_y", "beta_db"])?;
    for k in 0..cfg.num_ues {
        for l in 0..cfg.num_aps {
            let (u, p) = (ls.ue_pos[k], ls.ap_pos[l]);
            w.write_record(&[
                k.to_string(),
                l.to_string(),
                u.x.to_string(),
                u.y.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                format!("{:.4}", 10.0 * ls.beta(k, l).log10()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn is_broken_pipe(e: &Error) -> bool {
    let io = match e {
        Error::Io(io) => Some(io),
        Error::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Simulate(a) => experiment(a, false),
        Cmd::Mse(a) => experiment(a, true),
        Cmd::TrainDl(a) => train_dl(a),
        Cmd::PnStats(a) => pn_stats(a),
        Cmd::Complexity(a) => complexity(a),
        Cmd::Channels(a) => channels(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not a failure.
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
