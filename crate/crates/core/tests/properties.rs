//! Invariants checked over random inputs.

use proptest::prelude::*;

use cfpn_core::channel::LargeScale;
use cfpn_core::config::{
    CoherenceGeometry, LagConvention, LoMode, PilotPattern, Preset, ScenarioConfig,
};
use cfpn_core::estimators::{CpeConstraint, EffectiveEstimate};
use cfpn_core::harness::mean_ci;
use cfpn_core::linalg::HermitianSolver;
use cfpn_core::metrics::{mmse_combiner, sinr_uatf, Dcc, ExpectationBank};
use cfpn_core::ofdm::{dft, idft};
use cfpn_core::phase_noise::{
    corr_dft, corr_dft_naive, drift_corr_same, mean_phase_drift, pn_crosscorr, LinkPair, PnConfig,
    PnTrace,
};
use cfpn_core::rng;
use cfpn_core::Complex64;

type CMat = nalgebra::DMatrix<Complex64>;

fn pn(n: usize, s_ap: f64, s_ue: f64, shared: bool) -> PnConfig {
    PnConfig {
        sigma2_ap: s_ap,
        sigma2_ue: s_ue,
        lo_mode: if shared {
            LoMode::Shared
        } else {
            LoMode::Separate
        },
        n,
        n_cp: 0,
        tau_c: 4,
        lag: LagConvention::PerEquation,
    }
}

fn cplx() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corr_dft_fast_paths_match_double_sum(
        n in 2usize..40,
        a in 0.0..0.02f64,
        b1 in 0.0..0.01f64,
        b2 in 0.0..0.01f64,
        sel in 0usize..4,
        mult in 1i64..4,
        i1 in 0usize..64,
        i2 in 0usize..64,
    ) {
        let nn = n as i64;
        let d = match sel {
            0 => 0,
            1 => (nn - 1) * mult,
            2 => -(nn - 1) * mult,
            _ => mult - 2,
        };
        let fast = corr_dft(n, a, b1, b2, d, i1 % n, i2 % n);
        let slow = corr_dft_naive(n, a, b1, b2, d, i1 % n, i2 % n);
        prop_assert!((fast - slow).norm() <= 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn drift_powers_are_a_distribution(n in 1usize..80, s2 in 0.0..1e-2f64) {
        let cfg = pn(n, s2, s2, false);
        let p: Vec<f64> = (0..n).map(|i| drift_corr_same(&cfg, i, i, 0).re).collect();
        prop_assert!(p.iter().all(|&x| x >= -1e-15));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn phase_correlations_are_bounded(
        n in 2usize..64,
        s_ap in 0.0..1e-2f64,
        s_ue in 0.0..1e-2f64,
        shared: bool,
        pair in 0usize..4,
        t1 in 0usize..4, n1 in 0usize..64, t2 in 0usize..4, n2 in 0usize..64,
    ) {
        let cfg = pn(n, s_ap, s_ue, shared);
        let p = LinkPair::ALL[pair];
        let r = pn_crosscorr(&cfg, p, t1, n1 % n, t2, n2 % n);
        prop_assert!(r > 0.0 && r <= 1.0);
        prop_assert!((r - pn_crosscorr(&cfg, p, t2, n2 % n, t1, n1 % n)).abs() <= 1e-15);
        prop_assert_eq!(pn_crosscorr(&cfg, LinkPair::SAME, t1, n1 % n, t1, n1 % n), 1.0);
        prop_assert!(mean_phase_drift(&cfg, t1, n1).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn trace_drift_is_unitary_and_starts_with_the_cpe(
        n in 1usize..48,
        s2 in 0.0..5e-2f64,
        shared: bool,
        seed in any::<u64>(),
    ) {
        let cfg = pn(n, s2, s2, shared);
        let tr = PnTrace::generate(&cfg, 2, 3, &mut rng::stream(seed, 0));
        for (k, l, t) in [(0, 0, 0), (1, 2, 3), (0, 1, 2)] {
            prop_assert!(tr.phasor(k, l, t).iter().all(|z| (z.norm() - 1.0).abs() <= 1e-12));
            let j = tr.phase_drift_dft(k, l, t);
            prop_assert!((j[0] - tr.cpe(k, l, t)).norm() <= 1e-12);
            prop_assert!((j.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert_eq!(tr.theta(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn unitary_dft_round_trips(v in prop::collection::vec(cplx(), 1..64)) {
        let mut x = v.clone();
        dft(&mut x);
        let e0: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let e1: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((e0 - e1).abs() <= 1e-10 * e0.max(1.0));
        idft(&mut x);
        prop_assert!(x.iter().zip(&v).all(|(a, b)| (a - b).norm() <= 1e-12 * (1.0 + b.norm())));
    }

    #[test]
    fn constraint_bounds_amplitude_and_keeps_phase(x in cplx(), lo in 0.5..1.0f64, width in 0.0..0.5f64) {
        let c = CpeConstraint::new(lo, lo + width).unwrap();
        let y = c.apply(x);
        prop_assert!(y.norm() >= lo - 1e-12 && y.norm() <= lo + width + 1e-12);
        if x.norm() > 1e-9 {
            prop_assert!((y.arg() - x.arg()).abs() <= 1e-9 || (y.arg() - x.arg()).abs() >= 2.0 * std::f64::consts::PI - 1e-9);
        }
        if x.norm() >= lo && x.norm() <= lo + width {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn pilot_plans_are_well_formed(
        n_c in 1usize..16,
        tau_c in 1usize..24,
        frac in 0.0..1.0f64,
        pp2: bool,
        k in 1usize..6,
    ) {
        let tau_p = 1 + ((tau_c * n_c - 1) as f64 * frac) as usize;
        let geom = CoherenceGeometry::new(n_c, tau_c, tau_p).unwrap();
        let pattern = if pp2 { PilotPattern::Pp2 } else { PilotPattern::Pp1 };
        let Ok(plan) = cfpn_core::config::PilotPlan::build(&geom, pattern, k) else {
            prop_assert!(!pp2 && tau_p > tau_c);
            return Ok(());
        };
        prop_assert_eq!(plan.cells.len(), tau_p);
        let mut seen = plan.cells.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), tau_p);
        prop_assert!(plan.cells.iter().all(|c| c.symbol < tau_c && c.subcarrier < n_c));
        prop_assert!(plan.cells.windows(2).all(|w| w[0].symbol <= w[1].symbol));
        for t in 0..tau_p {
            for u in 0..tau_p {
                let ip: Complex64 = plan.book[t].iter().zip(&plan.book[u]).map(|(a, b)| a * b.conj()).sum();
                let want = if t == u { tau_p as f64 } else { 0.0 };
                prop_assert!((ip - Complex64::new(want, 0.0)).norm() <= 1e-9);
            }
        }
        prop_assert!(plan.assignment.iter().all(|&t| t < tau_p));
    }

    #[test]
    fn hermitian_solver_solves(n in 1usize..8, entries in prop::collection::vec(cplx(), 64), rhs in prop::collection::vec(cplx(), 8)) {
        let a = CMat::from_fn(n, n, |i, j| entries[i * 8 + j]);
        let m = &a * a.adjoint() + CMat::identity(n, n);
        let b = nalgebra::DVector::from_column_slice(&rhs[..n]);
        let s = HermitianSolver::new(m.clone()).unwrap();
        let x = s.solve(&b);
        prop_assert!((&m * &x - &b).norm() <= 1e-9 * (1.0 + b.norm()));
        prop_assert!(s.quad_form(&b) >= 0.0);
    }

    #[test]
    fn mean_ci_is_sane(xs in prop::collection::vec(-10.0..10.0f64, 2..50)) {
        let (m, ci) = mean_ci(&xs);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        prop_assert!(ci >= 0.0);
    }

    #[test]
    fn strongest_cluster_sizes(k in 1usize..5, l in 1usize..12, m in 1usize..12, seed in any::<u64>()) {
        let mut r = rng::stream(seed, 0);
        let beta: Vec<Vec<f64>> = (0..k).map(|_| (0..l).map(|_| rng::normal(&mut r).exp()).collect()).collect();
        let mut ls = LargeScale::uniform(k, l, 1.0);
        ls.beta = beta.clone();
        let dcc = Dcc::strongest(&ls, m);
        for ue in 0..k {
            let s = dcc.serving(ue);
            prop_assert_eq!(s.len(), m.min(l));
            let weakest_in = s.iter().map(|&a| beta[ue][a]).fold(f64::INFINITY, f64::min);
            prop_assert!((0..l).filter(|a| !s.contains(a)).all(|a| beta[ue][a] <= weakest_in));
        }
        for ap in 0..l {
            prop_assert!(dcc.served_by(ap).iter().all(|&ue| dcc.serving(ue).contains(&ap)));
        }
    }

    #[test]
    fn uatf_sinr_is_nonnegative_and_falls_with_noise(seed in any::<u64>(), k in 1usize..4, l in 1usize..5) {
        let mut cfg = ScenarioConfig::desk(Preset::Scenario1);
        cfg.num_ues = k;
        cfg.num_aps = l;
        cfg.coherence.tau_c = 2;
        cfg.coherence.tau_p = 2;
        cfg.noise_power = Some(0.1);
        cfg.power_w = 1.0;
        let mut r = rng::stream(seed, 0);
        let n = k * l * 2;
        let h: Vec<Complex64> = (0..n).map(|_| rng::cn(&mut r, 1.0)).collect();
        let est = EffectiveEstimate { num_ues: k, num_aps: l, tau_c: 2, h: h.clone(), err: vec![0.2; n] };
        let dcc = Dcc::all(k, l);
        let w = mmse_combiner(&est, &dcc, &cfg).unwrap();
        let mut bank = ExpectationBank::new(k, 2);
        for _ in 0..5 {
            let g: Vec<Complex64> = h.iter().map(|x| x + rng::cn(&mut r, 0.2)).collect();
            bank.accumulate(&w, &dcc, &g, &vec![0.01; k * l]).unwrap();
        }
        let mut noisier = cfg.clone();
        noisier.noise_power = Some(1.0);
        for ue in 0..k {
            let a = sinr_uatf(&bank, &cfg, ue, 1).unwrap();
            let b = sinr_uatf(&bank, &noisier, ue, 1).unwrap();
            prop_assert!(a >= 0.0 && b >= 0.0 && b <= a);
        }
        let mut merged = bank.clone();
        merged.merge(&bank).unwrap();
        for ue in 0..k {
            let a = sinr_uatf(&bank, &cfg, ue, 0).unwrap();
            let b = sinr_uatf(&merged, &cfg, ue, 0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
        }
    }
}
