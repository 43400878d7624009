//! Receiver side: cooperation clusters, MMSE combining, symbol estimates,
//! use-and-then-forget SINR/SE, and operation/fronthaul counts.
//!
//! Combiners are computed at one representative data subcarrier per symbol;
//! the estimates are block-constant, so the SINR only varies with the OFDM
//! symbol index τ.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::channel::LargeScale;
use crate::config::{CoherenceGeometry, PilotPlan, ScenarioConfig};
use crate::estimators::{EffectiveEstimate, EstimatorKind};
use crate::linalg::{CMat, CVec, HermitianSolver};
use crate::ofdm::RxFrame;
use crate::phase_noise::PnStatistics;
use crate::{Complex64, Error, Result};

/// Binary serve matrix d[k][l].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dcc {
    pub d: Vec<Vec<bool>>,
}

impl Dcc {
    /// Every AP serves every UE.
    pub fn all(num_ues: usize, num_aps: usize) -> Self {
        Dcc {
            d: vec![vec![true; num_aps]; num_ues],
        }
    }

    /// Each UE is served by its `m` strongest APs.
    pub fn strongest(ls: &LargeScale, m: usize) -> Self {
        let d = ls
            .beta
            .iter()
            .map(|row| {
                let mut idx: Vec<usize> = (0..row.len()).collect();
                idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let mut sel = vec![false; row.len()];
                idx.iter().take(m).for_each(|&l| sel[l] = true);
                sel
            })
            .collect();
        Dcc { d }
    }

    pub fn num_ues(&self) -> usize {
        self.d.len()
    }

    pub fn num_aps(&self) -> usize {
        self.d.first().map_or(0, |r| r.len())
    }

    pub fn serves(&self, k: usize, l: usize) -> bool {
        self.d[k][l]
    }

    /// M_k: APs serving UE k.
    pub fn serving(&self, k: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&l| self.d[k][l]).collect()
    }

    /// D_l: UEs served by AP l.
    pub fn served_by(&self, l: usize) -> Vec<usize> {
        (0..self.num_ues()).filter(|&k| self.d[k][l]).collect()
    }

    fn check(&self, num_ues: usize, num_aps: usize) -> Result<()> {
        if self.num_ues() != num_ues || self.d.iter().any(|r| r.len() != num_aps) {
            return Err(Error::config(
                "cooperation cluster does not match the scenario",
            ));
        }
        Ok(())
    }
}

/// Combining vectors per UE and symbol, indexed (k·τ_c + τ)·L + l. Entries of
/// APs outside M_k are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerWeights {
    pub num_ues: usize,
    pub num_aps: usize,
    pub tau_c: usize,
    pub v: Vec<Complex64>,
}

impl CombinerWeights {
    pub fn get(&self, k: usize, tau: usize) -> &[Complex64] {
        let s = (k * self.tau_c + tau) * self.num_aps;
        &self.v[s..s + self.num_aps]
    }

    fn get_mut(&mut self, k: usize, tau: usize) -> &mut [Complex64] {
        let s = (k * self.tau_c + tau) * self.num_aps;
        &mut self.v[s..s + self.num_aps]
    }

    fn zeros(k: usize, l: usize, tc: usize) -> Self {
        CombinerWeights {
            num_ues: k,
            num_aps: l,
            tau_c: tc,
            v: vec![Complex64::new(0.0, 0.0); k * l * tc],
        }
    }
}

/// v_k = p_k (Σ_i p_i D ĝ_i ĝ_iᴴ D + D(Σ_i p_i C_i + σ²I)D)^† D ĝ_k. The
/// pseudo-inverse of the masked matrix is the inverse of its M_k block, so
/// the solve is done on that block; one factorisation is shared by all UEs
/// with the same serving set.
pub fn mmse_combiner(
    est: &EffectiveEstimate,
    dcc: &Dcc,
    cfg: &ScenarioConfig,
) -> Result<CombinerWeights> {
    let (k_n, l_n, tc) = (est.num_ues, est.num_aps, est.tau_c);
    dcc.check(k_n, l_n)?;
    let s2 = cfg.sigma2();
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for k in 0..k_n {
        groups.entry(dcc.serving(k)).or_default().push(k);
    }
    let mut out = CombinerWeights::zeros(k_n, l_n, tc);
    for tau in 0..tc {
        for (set, ues) in &groups {
            if set.is_empty() {
                continue;
            }
            let m = set.len();
            let mut a = CMat::zeros(m, m);
            for i in 0..k_n {
                let p = cfg.power(i);
                let g = CVec::from_iterator(m, set.iter().map(|&l| est.get(i, l, tau)));
                a += &g * g.adjoint() * Complex64::from(p);
                for (r, &l) in set.iter().enumerate() {
                    a[(r, r)] += p * est.err(i, l, tau);
                }
            }
            for r in 0..m {
                a[(r, r)] += s2;
            }
            let solver = HermitianSolver::new(a)?;
            for &k in ues {
                let g = CVec::from_iterator(m, set.iter().map(|&l| est.get(k, l, tau)));
                let v = solver.solve(&g) * Complex64::from(cfg.power(k));
                let dst = out.get_mut(k, tau);
                for (r, &l) in set.iter().enumerate() {
                    dst[l] = v[r];
                }
            }
        }
    }
    Ok(out)
}

/// Maximum-ratio combining v_k = D ĝ_k; used as a reference point.
pub fn mr_combiner(est: &EffectiveEstimate, dcc: &Dcc) -> Result<CombinerWeights> {
    let (k_n, l_n, tc) = (est.num_ues, est.num_aps, est.tau_c);
    dcc.check(k_n, l_n)?;
    let mut out = CombinerWeights::zeros(k_n, l_n, tc);
    for k in 0..k_n {
        for tau in 0..tc {
            let dst = out.get_mut(k, tau);
            for l in dcc.serving(k) {
                dst[l] = est.get(k, l, tau);
            }
        }
    }
    Ok(out)
}

/// Inter-carrier interference power λ = p β (1 − B_{0,0}^{(0)}) that UE k
/// leaks into any data subcarrier at AP l.
pub fn ici_power_lambda(
    stats: &PnStatistics,
    cfg: &ScenarioConfig,
    ls: &LargeScale,
    k: usize,
    l: usize,
) -> f64 {
    let b00 = stats.b00_at(0).re.clamp(0.0, 1.0);
    cfg.power(k) * ls.beta(k, l) * (1.0 - b00)
}

/// λ for every link, indexed k·L + l.
pub fn ici_lambda_table(stats: &PnStatistics, cfg: &ScenarioConfig, ls: &LargeScale) -> Vec<f64> {
    (0..cfg.num_ues)
        .flat_map(|k| (0..cfg.num_aps).map(move |l| (k, l)))
        .map(|(k, l)| ici_power_lambda(stats, cfg, ls, k, l))
        .collect()
}

/// Running sums of the expectations in the use-and-then-forget SINR. Banks
/// from independent trials combine with [`ExpectationBank::merge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationBank {
    pub num_ues: usize,
    pub tau_c: usize,
    /// Σ vᴴ D_k g_k, per (k, τ).
    pub gain: Vec<Complex64>,
    /// Σ |vᴴ D_k g_i|², per (k, τ, i).
    pub cross: Vec<f64>,
    /// Σ Σ_l d_{k,l} |v_l|² Σ_i λ_{i,l}, per (k, τ).
    pub ici: Vec<f64>,
    /// Σ ‖D_k v‖², per (k, τ).
    pub norm: Vec<f64>,
    pub count: usize,
}

impl ExpectationBank {
    pub fn new(num_ues: usize, tau_c: usize) -> Self {
        let n = num_ues * tau_c;
        ExpectationBank {
            num_ues,
            tau_c,
            gain: vec![Complex64::new(0.0, 0.0); n],
            cross: vec![0.0; n * num_ues],
            ici: vec![0.0; n],
            norm: vec![0.0; n],
            count: 0,
        }
    }

    /// Adds one channel realisation. `g` holds the true effective channels
    /// indexed (i·L + l)·τ_c + τ and `lambda` the ICI powers indexed i·L + l
    /// (all zero when the generative model has no ICI).
    pub fn accumulate(
        &mut self,
        w: &CombinerWeights,
        dcc: &Dcc,
        g: &[Complex64],
        lambda: &[f64],
    ) -> Result<()> {
        let (k_n, l_n, tc) = (self.num_ues, w.num_aps, self.tau_c);
        if w.num_ues != k_n
            || w.tau_c != tc
            || g.len() != k_n * l_n * tc
            || lambda.len() != k_n * l_n
        {
            return Err(Error::config("expectation bank dimensions do not match"));
        }
        dcc.check(k_n, l_n)?;
        let lam_ap: Vec<f64> = (0..l_n)
            .map(|l| (0..k_n).map(|i| lambda[i * l_n + l]).sum())
            .collect();
        for k in 0..k_n {
            let set = dcc.serving(k);
            for tau in 0..tc {
                let v = w.get(k, tau);
                let idx = k * tc + tau;
                for i in 0..k_n {
                    let z: Complex64 = set
                        .iter()
                        .map(|&l| v[l].conj() * g[(i * l_n + l) * tc + tau])
                        .sum();
                    self.cross[idx * k_n + i] += z.norm_sqr();
                    if i == k {
                        self.gain[idx] += z;
                    }
                }
                self.ici[idx] += set
                    .iter()
                    .map(|&l| v[l].norm_sqr() * lam_ap[l])
                    .sum::<f64>();
                self.norm[idx] += set.iter().map(|&l| v[l].norm_sqr()).sum::<f64>();
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ExpectationBank) -> Result<()> {
        if self.num_ues != other.num_ues || self.tau_c != other.tau_c {
            return Err(Error::config("cannot merge banks of different shapes"));
        }
        self.gain
            .iter_mut()
            .zip(&other.gain)
            .for_each(|(a, b)| *a += b);
        self.cross
            .iter_mut()
            .zip(&other.cross)
            .for_each(|(a, b)| *a += b);
        self.ici
            .iter_mut()
            .zip(&other.ici)
            .for_each(|(a, b)| *a += b);
        self.norm
            .iter_mut()
            .zip(&other.norm)
            .for_each(|(a, b)| *a += b);
        self.count += other.count;
        Ok(())
    }

    /// ρ^{ICI} = E{Σ_l d_{k,l}|v_l|² Σ_i λ_{i,l}}.
    pub fn rho(&self, k: usize, tau: usize) -> f64 {
        self.ici[k * self.tau_c + tau] / self.count.max(1) as f64
    }
}

/// Use-and-then-forget SINR of UE k at symbol τ:
/// p_k|E{vᴴDg_k}|² / (Σ_i p_i E{|vᴴDg_i|²} − p_k|E{vᴴDg_k}|² + ρ + σ²E{‖Dv‖²}).
pub fn sinr_uatf(
    bank: &ExpectationBank,
    cfg: &ScenarioConfig,
    k: usize,
    tau: usize,
) -> Result<f64> {
    if bank.count == 0 {
        return Err(Error::config("empty expectation bank"));
    }
    let c = bank.count as f64;
    let idx = k * bank.tau_c + tau;
    let desired = cfg.power(k) * (bank.gain[idx] / c).norm_sqr();
    let total: f64 = (0..bank.num_ues)
        .map(|i| cfg.power(i) * bank.cross[idx * bank.num_ues + i] / c)
        .sum();
    let den = total - desired + bank.rho(k, tau) + cfg.sigma2() * bank.norm[idx] / c;
    if desired == 0.0 && den >= 0.0 {
        return Ok(0.0);
    }
    if !(den > 0.0) || !desired.is_finite() {
        return Err(Error::numerical(format!(
            "non-positive SINR denominator {den:e} for UE {k}, symbol {tau}"
        )));
    }
    Ok(desired / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeReport {
    /// sinr[k][τ]
    pub sinr: Vec<Vec<f64>>,
    /// rho[k][τ]
    pub rho: Vec<Vec<f64>>,
    /// se[k], bit/s/Hz
    pub se: Vec<f64>,
    pub prelog: f64,
}

impl SeReport {
    pub fn from_bank(bank: &ExpectationBank, cfg: &ScenarioConfig) -> Result<Self> {
        let mut sinr = Vec::with_capacity(bank.num_ues);
        let mut rho = Vec::with_capacity(bank.num_ues);
        for k in 0..bank.num_ues {
            sinr.push(
                (0..bank.tau_c)
                    .map(|t| sinr_uatf(bank, cfg, k, t))
                    .collect::<Result<Vec<_>>>()?,
            );
            rho.push((0..bank.tau_c).map(|t| bank.rho(k, t)).collect());
        }
        let se = se_per_ue(&sinr, &cfg.coherence);
        Ok(SeReport {
            sinr,
            rho,
            se,
            prelog: cfg.coherence.prelog(),
        })
    }

    /// Per-symbol SE contribution prelog·log2(1 + SINR) of UE k.
    pub fn se_at(&self, k: usize, tau: usize) -> f64 {
        self.prelog * (1.0 + self.sinr[k][tau]).log2()
    }
}

/// prelog × mean over the block's symbols of log2(1 + SINR).
pub fn se_per_ue(sinr: &[Vec<f64>], geom: &CoherenceGeometry) -> Vec<f64> {
    let prelog = geom.prelog();
    sinr.iter()
        .map(|row| {
            prelog * row.iter().map(|s| (1.0 + s.max(0.0)).log2()).sum::<f64>()
                / row.len().max(1) as f64
        })
        .collect()
}

/// ŝ = vᴴ D y at one cell and its split into desired signal, inter-user
/// interference, ICI and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demodulated {
    pub s_hat: Complex64,
    pub desired: Complex64,
    pub inter_user: Complex64,
    pub ici: Complex64,
    pub noise: Complex64,
}

pub fn demodulate_cell(
    rx: &RxFrame,
    w: &CombinerWeights,
    dcc: &Dcc,
    k: usize,
    tau: usize,
    n: usize,
) -> Demodulated {
    let l_n = w.num_aps;
    let k_n = rx.parts.eff.d0 / l_n.max(1);
    let v = w.get(k, tau);
    let zero = Complex64::new(0.0, 0.0);
    let mut d = Demodulated {
        s_hat: zero,
        desired: zero,
        inter_user: zero,
        ici: zero,
        noise: zero,
    };
    for l in dcc.serving(k) {
        let vc = v[l].conj();
        d.s_hat += vc * rx.y.get(l, tau, n);
        d.noise += vc * rx.parts.noise.get(l, tau, n);
        for i in 0..k_n {
            let e = vc * rx.parts.eff.get(i * l_n + l, tau, n);
            if i == k {
                d.desired += e;
            } else {
                d.inter_user += e;
            }
            d.ici += vc * rx.parts.ici.get(i * l_n + l, tau, n);
        }
    }
    d
}

/// Symbol estimates of UE k at every data cell of block 0, as (τ, n, ŝ).
pub fn demodulate(
    rx: &RxFrame,
    w: &CombinerWeights,
    dcc: &Dcc,
    plan: &PilotPlan,
    k: usize,
) -> Vec<(usize, usize, Demodulated)> {
    let mut out = Vec::new();
    for tau in 0..w.tau_c {
        for n in plan.data_subcarriers(tau) {
            out.push((tau, n, demodulate_cell(rx, w, dcc, k, tau, n)));
        }
    }
    out
}

/// Inputs of the operation and fronthaul counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityParams {
    pub tau_p: usize,
    pub tau_c: usize,
    pub n_c: usize,
    pub num_ues: usize,
    pub num_aps: usize,
    /// |M_k| of the UE being reported.
    pub m_k: usize,
    /// |D_l| of the AP being reported.
    pub d_l: usize,
    pub m1: usize,
    pub m2: usize,
    pub n_iter: usize,
}

impl ComplexityParams {
    pub fn from_scenario(
        cfg: &ScenarioConfig,
        dcc: &Dcc,
        k: usize,
        l: usize,
        m1: usize,
        m2: usize,
        n_iter: usize,
    ) -> Self {
        ComplexityParams {
            tau_p: cfg.coherence.tau_p,
            tau_c: cfg.coherence.tau_c,
            n_c: cfg.coherence.n_c,
            num_ues: cfg.num_ues,
            num_aps: cfg.num_aps,
            m_k: dcc.serving(k).len(),
            d_l: dcc.served_by(l).len(),
            m1,
            m2,
            n_iter,
        }
    }
}

/// One row of the complexity/fronthaul tables. Multiplication counts are per
/// coherence block for one UE; fronthaul counts are complex scalars per
/// coherence block for one AP, either forwarding raw pilots or local
/// estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub row: String,
    pub channel_mults: Option<f64>,
    pub pn_mults: Option<f64>,
    /// Set when channel and phase are estimated jointly and the count is not split.
    pub joint_mults: Option<f64>,
    pub fronthaul_pilots: f64,
    pub fronthaul_estimates: f64,
    pub fronthaul_data: f64,
}

impl ComplexityRow {
    pub fn total_mults(&self) -> f64 {
        self.joint_mults.unwrap_or(0.0)
            + self.channel_mults.unwrap_or(0.0)
            + self.pn_mults.unwrap_or(0.0)
    }
}

pub const COMPLEXITY_ROWS: [&str; 6] = [
    "pn-unaware-channel-mmse",
    "distributed-joint-channel-pn-lmmse",
    "distributed-joint-channel-cpe-lmmse",
    "centralized-dl-channel",
    "centralized-lmmse-channel",
    "centralized-cpe-lmmse",
];

/// Evaluates one row by name.
pub fn complexity_row(p: &ComplexityParams, name: &str) -> Result<ComplexityRow> {
    let f = |x: usize| x as f64;
    let (tp, tc, k, l, mk, dl, it) = (
        f(p.tau_p),
        f(p.tau_c),
        f(p.num_ues),
        f(p.num_aps),
        f(p.m_k),
        f(p.d_l),
        f(p.n_iter),
    );
    let data = tc * f(p.n_c) - tp;
    let row = |channel: Option<f64>, pn: Option<f64>, joint: Option<f64>, est: f64| ComplexityRow {
        row: name.to_string(),
        channel_mults: channel,
        pn_mults: pn,
        joint_mults: joint,
        fronthaul_pilots: tp,
        fronthaul_estimates: est,
        fronthaul_data: data,
    };
    Ok(match name {
        "pn-unaware-channel-mmse" => row(Some((tp + 3.0) * k * mk), None, None, dl),
        "distributed-joint-channel-pn-lmmse" => row(
            None,
            None,
            Some((tp * tp + 3.0 * tp) * data * k * mk),
            dl * data,
        ),
        "distributed-joint-channel-cpe-lmmse" => row(
            None,
            None,
            Some((tp * tp + 3.0 * tp) * tc * k * mk),
            dl * tc,
        ),
        "centralized-dl-channel" => {
            let (m1, m2) = (f(p.m1), f(p.m2));
            row(
                Some((2.0 * tp * m1 + m1 * m2 + 2.0 * m2 * k) / 4.0 * mk),
                None,
                None,
                dl,
            )
        }
        "centralized-lmmse-channel" => row(
            Some((tp * tp + 3.0 * tp) * k * mk * it),
            None,
            None,
            (dl + dl * tp) * it,
        ),
        "centralized-cpe-lmmse" => row(
            None,
            Some(((l * l * tp * tp + l * tp) + l * tp * k * tc * mk) * it),
            None,
            tp,
        ),
        _ => return Err(Error::config(format!("unknown complexity row '{name}'"))),
    })
}

/// Rows that make up an estimator's cost. Accepts estimator names as well as
/// the individual row names.
pub fn complexity_report(p: &ComplexityParams, estimator: &str) -> Result<Vec<ComplexityRow>> {
    if COMPLEXITY_ROWS.contains(&estimator) {
        return Ok(vec![complexity_row(p, estimator)?]);
    }
    let rows: &[&str] = match estimator.parse::<EstimatorKind>()? {
        EstimatorKind::Unaware => &["pn-unaware-channel-mmse"],
        EstimatorKind::Mismatched | EstimatorKind::SingleCarrier => {
            &["distributed-joint-channel-pn-lmmse"]
        }
        EstimatorKind::ProposedDistributed => &["distributed-joint-channel-cpe-lmmse"],
        EstimatorKind::ProposedCentralizedLmmse => {
            &["centralized-lmmse-channel", "centralized-cpe-lmmse"]
        }
        EstimatorKind::ProposedCentralizedDl => &[
            "centralized-dl-channel",
            "centralized-lmmse-channel",
            "centralized-cpe-lmmse",
        ],
    };
    rows.iter().map(|r| complexity_row(p, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn est1(h: Complex64, err: f64, tc: usize) -> EffectiveEstimate {
        EffectiveEstimate {
            num_ues: 1,
            num_aps: 1,
            tau_c: tc,
            h: vec![h; tc],
            err: vec![err; tc],
        }
    }

    fn cfg1() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk(Preset::Scenario1);
        c.num_aps = 1;
        c.num_ues = 1;
        c.power_w = 2.0;
        c.noise_power = Some(0.5);
        c
    }

    #[test]
    fn scalar_combiner_is_wiener_weight() {
        let c = cfg1();
        let h = Complex64::new(0.6, -0.8);
        let w = mmse_combiner(&est1(h, 0.0, 2), &Dcc::all(1, 1), &c).unwrap();
        // p h / (p |h|² + σ²)
        let want = h * 2.0 / (2.0 * 1.0 + 0.5);
        assert!((w.get(0, 1)[0] - want).norm() < 1e-12);
    }

    #[test]
    fn masked_ap_has_zero_weight() {
        let mut c = cfg1();
        c.num_aps = 3;
        c.num_ues = 2;
        let est = EffectiveEstimate {
            num_ues: 2,
            num_aps: 3,
            tau_c: 1,
            h: (0..6)
                .map(|i| Complex64::new(1.0 + i as f64, 0.5))
                .collect(),
            err: vec![0.1; 6],
        };
        let mut dcc = Dcc::all(2, 3);
        dcc.d[0][1] = false;
        let w = mmse_combiner(&est, &dcc, &c).unwrap();
        assert_eq!(w.get(0, 0)[1], Complex64::new(0.0, 0.0));
        assert!(w.get(1, 0).iter().all(|z| z.norm() > 0.0));
    }

    #[test]
    fn strongest_picks_largest_gains() {
        let mut ls = LargeScale::uniform(2, 4, 1.0);
        ls.beta = vec![vec![0.1, 0.4, 0.3, 0.2], vec![5.0, 1.0, 3.0, 4.0]];
        let d = Dcc::strongest(&ls, 2);
        assert_eq!(d.serving(0), vec![1, 2]);
        assert_eq!(d.serving(1), vec![0, 3]);
        assert_eq!(d.served_by(0), vec![1]);
    }

    #[test]
    fn deterministic_single_user_sinr() {
        let c = cfg1();
        let h = Complex64::new(0.3, 0.4);
        let est = est1(h, 0.0, 1);
        let dcc = Dcc::all(1, 1);
        let w = mr_combiner(&est, &dcc).unwrap();
        let mut bank = ExpectationBank::new(1, 1);
        bank.accumulate(&w, &dcc, &[h], &[0.0]).unwrap();
        let s = sinr_uatf(&bank, &c, 0, 0).unwrap();
        assert!((s - 2.0 * 0.25 / 0.5).abs() < 1e-12);
    }

    #[test]
    fn merge_equals_sequential_accumulation() {
        let c = cfg1();
        let dcc = Dcc::all(1, 1);
        let hs = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.2, -0.7),
            Complex64::new(-0.4, 0.1),
        ];
        let mut all = ExpectationBank::new(1, 1);
        let mut a = ExpectationBank::new(1, 1);
        let mut b = ExpectationBank::new(1, 1);
        for (i, h) in hs.iter().enumerate() {
            let w = mmse_combiner(&est1(*h * 0.9, 0.05, 1), &dcc, &c).unwrap();
            all.accumulate(&w, &dcc, &[*h], &[0.01]).unwrap();
            let part = if i < 2 { &mut a } else { &mut b };
            part.accumulate(&w, &dcc, &[*h], &[0.01]).unwrap();
        }
        b.merge(&a).unwrap();
        assert_eq!(b.count, all.count);
        let (x, y) = (
            sinr_uatf(&all, &c, 0, 0).unwrap(),
            sinr_uatf(&b, &c, 0, 0).unwrap(),
        );
        assert!((x - y).abs() < 1e-12 * x);
    }

    #[test]
    fn prelog_of_table_defaults() {
        let g = CoherenceGeometry::new(12, 20, 20).unwrap();
        let se = se_per_ue(&[vec![1.0; 20]], &g);
        assert!((se[0] - 220.0 / 240.0).abs() < 1e-15);
    }

    #[test]
    fn all_pilot_block_has_zero_se() {
        let g = CoherenceGeometry::new(1, 4, 4).unwrap();
        assert_eq!(se_per_ue(&[vec![1e6; 4]], &g), vec![0.0]);
    }

    #[test]
    fn unaware_estimator_cost_and_unknown_name() {
        let c = ScenarioConfig::preset(Preset::Scenario1);
        let p =
            ComplexityParams::from_scenario(&c, &Dcc::all(c.num_ues, c.num_aps), 0, 0, 100, 100, 3);
        let r = complexity_report(&p, "unaware").unwrap();
        assert_eq!(r[0].channel_mults, Some(23.0 * 5.0 * 200.0));
        assert!(complexity_report(&p, "nope").is_err());
    }
}
