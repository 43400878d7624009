//! End-to-end checks of the signal chain, receiver and experiment harness.

use std::path::PathBuf;

use cfpn_core::channel::{gen_block_channels, LargeScale};
use cfpn_core::config::{BetaModel, DataModulation, PilotPattern, Preset, ScenarioConfig};
use cfpn_core::estimators::{lmmse_joint_distributed, EstContext, EstimatorKind};
use cfpn_core::harness::{run_experiment, write_gnuplot_stub, ExperimentGrid, SweepVar};
use cfpn_core::metrics::{demodulate, mmse_combiner, Dcc};
use cfpn_core::ofdm::{
    dft, stack_pilots, synthesize_freq, synthesize_pilots, synthesize_time, ConvPath, SignalModel,
    TxFrame,
};
use cfpn_core::phase_noise::{PnConfig, PnStatistics, PnTrace};
use cfpn_core::{rng, Complex64, Error};

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::desk(Preset::Scenario1);
    c.grid.n = 32;
    c.coherence.n_c = 8;
    c.coherence.tau_c = 4;
    c.coherence.tau_p = 4;
    c.num_ues = 2;
    c.num_aps = 3;
    c.beta_model = BetaModel::Uniform { value: 1.0 };
    c.power_w = 1.0;
    c.noise_power = Some(0.01);
    c.eval_subcarrier = 2;
    c.gamma_ap = 2e-16;
    c.gamma_ue = 2e-16;
    c
}

fn scratch_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cfpn-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn frequency_model_is_the_dft_of_the_time_model() {
    let cfg = small();
    let plan = cfg.pilot_plan().unwrap();
    let ls = LargeScale::uniform(cfg.num_ues, cfg.num_aps, 1.0);
    let mut r = rng::stream(5, 0);
    let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
    let tr = PnTrace::generate(
        &PnConfig::from_scenario(&cfg),
        cfg.num_ues,
        cfg.num_aps,
        &mut r,
    );
    let tx = TxFrame::generate(&cfg, &plan, &mut r);
    let time = synthesize_time(&cfg, &tx, &ch, &tr, &mut r.clone());
    for path in [ConvPath::Direct, ConvPath::Fft] {
        let freq = synthesize_freq(&cfg, &tx, &ch, &tr, path, &mut r.clone());
        for l in 0..cfg.num_aps {
            for t in 0..cfg.coherence.tau_c {
                let mut x = time.row(l, t).to_vec();
                dft(&mut x);
                for (a, b) in x.iter().zip(freq.y.row(l, t)) {
                    assert!((a - b).norm() < 1e-10, "{path:?}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn pilot_synthesis_matches_the_full_frame() {
    let mut cfg = small();
    cfg.noise_power = Some(1e-300);
    for pattern in [PilotPattern::Pp1, PilotPattern::Pp2] {
        cfg.pattern = pattern;
        let plan = cfg.pilot_plan().unwrap();
        let ls = LargeScale::uniform(cfg.num_ues, cfg.num_aps, 1.0);
        let mut r = rng::stream(6, 0);
        let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
        let tr = PnTrace::generate(
            &PnConfig::from_scenario(&cfg),
            cfg.num_ues,
            cfg.num_aps,
            &mut r,
        );
        let tx = TxFrame::generate(&cfg, &plan, &mut r);
        let full = stack_pilots(
            &synthesize_freq(&cfg, &tx, &ch, &tr, ConvPath::Auto, &mut r.clone()),
            &plan,
        );
        let fast = synthesize_pilots(&cfg, &plan, &tx, &ch, &tr, SignalModel::Exact, &mut r);
        for (a, b) in full.y.iter().zip(&fast.y) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

#[test]
fn frame_parts_add_up() {
    let cfg = small();
    let plan = cfg.pilot_plan().unwrap();
    let ls = LargeScale::uniform(cfg.num_ues, cfg.num_aps, 1.0);
    let mut r = rng::stream(7, 0);
    let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
    let tr = PnTrace::generate(
        &PnConfig::from_scenario(&cfg),
        cfg.num_ues,
        cfg.num_aps,
        &mut r,
    );
    let tx = TxFrame::generate(&cfg, &plan, &mut r);
    let rx = synthesize_freq(&cfg, &tx, &ch, &tr, ConvPath::Auto, &mut r);
    let l_n = cfg.num_aps;
    for l in 0..l_n {
        for t in 0..cfg.coherence.tau_c {
            for n in 0..cfg.grid.n {
                let mut s = rx.parts.noise.get(l, t, n);
                for k in 0..cfg.num_ues {
                    s += rx.parts.eff.get(k * l_n + l, t, n) + rx.parts.ici.get(k * l_n + l, t, n);
                    // The CPE term is J_0·h·s at the same cell.
                    let want =
                        tr.cpe(k, l, t) * ch.get(k, l, n / cfg.coherence.n_c) * tx.get(k, t, n);
                    assert!((rx.parts.eff.get(k * l_n + l, t, n) - want).norm() < 1e-12);
                }
                assert!((s - rx.y.get(l, t, n)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn qpsk_is_recovered_without_phase_noise_at_high_snr() {
    let mut cfg = small();
    cfg.gamma_ap = 0.0;
    cfg.gamma_ue = 0.0;
    cfg.noise_power = Some(1e-4);
    cfg.data_modulation = DataModulation::Qpsk;
    let stats = PnStatistics::from_scenario(&cfg).unwrap();
    let plan = &stats.plan;
    let ls = LargeScale::uniform(cfg.num_ues, cfg.num_aps, 1.0);
    let ctx = EstContext::new(&cfg, &stats, &ls);
    let dcc = Dcc::all(cfg.num_ues, cfg.num_aps);
    let mut errors = 0;
    let mut total = 0;
    for trial in 0..20 {
        let mut r = rng::stream(8, trial);
        let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
        let tr = PnTrace::generate(
            &PnConfig::from_scenario(&cfg),
            cfg.num_ues,
            cfg.num_aps,
            &mut r,
        );
        let tx = TxFrame::generate(&cfg, plan, &mut r);
        let rx = synthesize_freq(&cfg, &tx, &ch, &tr, ConvPath::Auto, &mut r);
        // Only block 0 shares the channel that the pilots see.
        let y = stack_pilots(&rx, plan);
        let est = lmmse_joint_distributed(&ctx, &y).unwrap();
        let w = mmse_combiner(&est, &dcc, &cfg).unwrap();
        for k in 0..cfg.num_ues {
            for (t, n, d) in demodulate(&rx, &w, &dcc, plan, k) {
                if n != cfg.eval_subcarrier {
                    continue;
                }
                let s = tx.get(k, t, n);
                total += 1;
                if d.s_hat.re.signum() != s.re.signum() || d.s_hat.im.signum() != s.im.signum() {
                    errors += 1;
                }
            }
        }
    }
    assert!(total > 0);
    assert_eq!(errors, 0, "{errors} of {total} symbols wrong");
}

#[test]
fn demodulation_split_is_exact() {
    let cfg = small();
    let stats = PnStatistics::from_scenario(&cfg).unwrap();
    let plan = &stats.plan;
    let ls = LargeScale::uniform(cfg.num_ues, cfg.num_aps, 1.0);
    let ctx = EstContext::new(&cfg, &stats, &ls);
    let dcc = Dcc::all(cfg.num_ues, cfg.num_aps);
    let mut r = rng::stream(9, 0);
    let ch = gen_block_channels(&ls, cfg.num_blocks(), &mut r);
    let tr = PnTrace::generate(
        &PnConfig::from_scenario(&cfg),
        cfg.num_ues,
        cfg.num_aps,
        &mut r,
    );
    let tx = TxFrame::generate(&cfg, plan, &mut r);
    let rx = synthesize_freq(&cfg, &tx, &ch, &tr, ConvPath::Auto, &mut r);
    let est = lmmse_joint_distributed(&ctx, &stack_pilots(&rx, plan)).unwrap();
    let w = mmse_combiner(&est, &dcc, &cfg).unwrap();
    for (_, _, d) in demodulate(&rx, &w, &dcc, plan, 0) {
        let sum = d.desired + d.inter_user + d.ici + d.noise;
        assert!((sum - d.s_hat).norm() <= 1e-12 * (1.0 + d.s_hat.norm()));
    }
}

fn tiny_grid(out: Option<PathBuf>) -> ExperimentGrid {
    let mut base = small();
    base.trials = 4;
    base.realizations = 2;
    let mut g = ExperimentGrid::new(
        base,
        SweepVar::Gamma,
        vec![0.0, 1e-16],
        vec![
            EstimatorKind::Unaware,
            EstimatorKind::ProposedDistributed,
            EstimatorKind::SingleCarrier,
        ],
    );
    g.output = out;
    g
}

#[test]
fn experiment_outputs_are_byte_identical_across_runs() {
    let dir = scratch_dir("determinism");
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    let ra = run_experiment(&tiny_grid(Some(a.clone()))).unwrap();
    let rb = run_experiment(&tiny_grid(Some(b.clone()))).unwrap();
    assert_eq!(ra.rows, rb.rows);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.join("a.detail.csv")).unwrap(),
        std::fs::read(dir.join("b.detail.csv")).unwrap()
    );
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("a.json")).unwrap()).unwrap();
    assert!(sidecar["config_hash"]
        .as_str()
        .is_some_and(|h| h.len() == 64));
    let header = std::fs::read_to_string(&a)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    for col in [
        "estimator",
        "gamma_ap",
        "gamma_ue",
        "pattern",
        "mean_se",
        "ci_se",
    ] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
    let detail = std::fs::read_to_string(dir.join("a.detail.csv")).unwrap();
    for col in [
        "estimator",
        "scenario",
        "gamma_ap",
        "gamma_ue",
        "pattern",
        "tau",
        "ue",
        "sinr",
        "se",
    ] {
        assert!(
            detail.lines().next().unwrap().split(',').any(|c| c == col),
            "missing detail column {col}"
        );
    }
    let gp = write_gnuplot_stub(&tiny_grid(Some(a)), "mean_se").unwrap();
    assert!(std::fs::read_to_string(gp).unwrap().contains("plot "));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn no_phase_noise_collapses_the_estimators() {
    let res = run_experiment(&tiny_grid(None)).unwrap();
    let at = |e: EstimatorKind, v: f64| {
        res.rows
            .iter()
            .find(|r| r.estimator == e.name() && r.value == v)
            .unwrap()
            .mean_se
            .unwrap()
    };
    let (u, p, s) = (
        at(EstimatorKind::Unaware, 0.0),
        at(EstimatorKind::ProposedDistributed, 0.0),
        at(EstimatorKind::SingleCarrier, 0.0),
    );
    assert!((u - p).abs() <= 1e-9 * p, "{u} {p}");
    // The single-carrier arm draws its own pilot noise, so it only agrees statistically.
    assert!((s - p).abs() <= 0.05 * p, "{s} {p}");
    assert!(at(EstimatorKind::ProposedDistributed, 1e-16) < p);
    assert!(at(EstimatorKind::Unaware, 1e-16) < at(EstimatorKind::ProposedDistributed, 1e-16));
}

#[test]
fn toml_configs_override_presets_and_reject_typos() {
    let c = ScenarioConfig::from_toml_str(
        r#"
        preset = "scenario2"
        [grid]
        n = 32
        [coherence]
        tau_c = 6
        tau_p = 4
        [pilots]
        pattern = "pp2"
        [scenario]
        num_aps = 7
        gamma_ue = 3e-17
        beta_model = { kind = "uniform", value = 0.5 }
        "#,
    )
    .unwrap();
    assert_eq!(
        (
            c.grid.n,
            c.coherence.tau_c,
            c.coherence.tau_p,
            c.num_aps,
            c.num_ues
        ),
        (32, 6, 4, 7, 2)
    );
    assert_eq!(c.pattern, PilotPattern::Pp2);
    assert_eq!(c.gamma_ue, 3e-17);
    assert_eq!(c.beta_model, BetaModel::Uniform { value: 0.5 });

    let typo = ScenarioConfig::from_toml_str("[scenario]\nnum_apps = 3\n").unwrap_err();
    assert_eq!(typo.exit_code(), 2);
    let bad = ScenarioConfig::from_toml_str("[coherence]\ntau_p = 500\n").unwrap_err();
    assert!(matches!(bad, Error::Config(_)));
}

#[test]
fn invalid_scenarios_are_rejected() {
    let base = ScenarioConfig::desk(Preset::Scenario1);
    let cases: Vec<Box<dyn Fn(&mut ScenarioConfig)>> = vec![
        Box::new(|c| c.num_aps = 0),
        Box::new(|c| c.gamma_ap = -1.0),
        Box::new(|c| c.power_w = 0.0),
        Box::new(|c| c.eval_subcarrier = c.coherence.n_c),
        Box::new(|c| c.coherence.n_c = c.grid.n + 1),
        Box::new(|c| {
            c.pattern = PilotPattern::Pp1;
            c.coherence.tau_p = c.coherence.tau_c + 1;
        }),
        Box::new(|c| c.noise_power = Some(f64::NAN)),
        Box::new(|c| c.trials = 0),
    ];
    for (i, f) in cases.iter().enumerate() {
        let mut c = base.clone();
        f(&mut c);
        assert!(
            matches!(c.validate(), Err(Error::Config(_))),
            "case {i} accepted"
        );
    }
    assert!(base.validate().is_ok());
    let _ = Complex64::new(0.0, 0.0);
}
