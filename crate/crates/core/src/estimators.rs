//! Channel and common-phase-error estimators.
//!
//! Distributed estimators work per AP on that AP's pilot observations.
//! The centralized estimator alternates between a joint CPE estimate over
//! all APs (given channel estimates) and per-AP channel estimates (given the
//! CPEs), optionally starting from the neural-network estimate.

use serde::{Deserialize, Serialize};

use crate::channel::LargeScale;
use crate::config::ScenarioConfig;
use crate::dl::DlNetwork;
use crate::linalg::{CMat, CVec, HermitianSolver};
use crate::ofdm::PilotObservation;
use crate::phase_noise::{LinkPair, PnStatistics};
use crate::{Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// Ignores phase noise entirely; one estimate per coherence block.
    Unaware,
    /// Treats the subcarrier index as a time index and the phase process as
    /// if each subcarrier were rotated independently (no ICI).
    Mismatched,
    /// Per-AP joint channel and CPE LMMSE with the exact ICI covariance.
    ProposedDistributed,
    /// Alternating CPE/channel estimation started from the LMMSE estimate.
    ProposedCentralizedLmmse,
    /// Alternating CPE/channel estimation started from the neural network.
    ProposedCentralizedDl,
    /// The mismatched estimator on data from the single-carrier model.
    SingleCarrier,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Unaware,
        EstimatorKind::Mismatched,
        EstimatorKind::ProposedDistributed,
        EstimatorKind::ProposedCentralizedLmmse,
        EstimatorKind::ProposedCentralizedDl,
        EstimatorKind::SingleCarrier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Unaware => "unaware",
            EstimatorKind::Mismatched => "mismatched",
            EstimatorKind::ProposedDistributed => "proposed-distributed",
            EstimatorKind::ProposedCentralizedLmmse => "proposed-centralized-lmmse",
            EstimatorKind::ProposedCentralizedDl => "proposed-centralized-dl",
            EstimatorKind::SingleCarrier => "single-carrier",
        }
    }

    pub fn is_centralized(self) -> bool {
        matches!(
            self,
            EstimatorKind::ProposedCentralizedLmmse | EstimatorKind::ProposedCentralizedDl
        )
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown estimator '{s}'")))
    }
}

/// Everything an estimator needs to know about the current setup.
#[derive(Clone, Copy)]
pub struct EstContext<'a> {
    pub cfg: &'a ScenarioConfig,
    pub stats: &'a PnStatistics,
    pub ls: &'a LargeScale,
}

impl<'a> EstContext<'a> {
    pub fn new(cfg: &'a ScenarioConfig, stats: &'a PnStatistics, ls: &'a LargeScale) -> Self {
        EstContext { cfg, stats, ls }
    }
    fn k_n(&self) -> usize {
        self.cfg.num_ues
    }
    fn l_n(&self) -> usize {
        self.cfg.num_aps
    }
    fn tc(&self) -> usize {
        self.cfg.coherence.tau_c
    }
    fn tp(&self) -> usize {
        self.stats.plan.tau_p()
    }
    fn p(&self, k: usize) -> f64 {
        self.cfg.power(k)
    }
    fn beta(&self, k: usize, l: usize) -> f64 {
        self.ls.beta(k, l)
    }
    fn seq(&self, k: usize) -> &[Complex64] {
        self.stats.plan.sequence(k)
    }
    fn t(&self, k: usize) -> usize {
        self.stats.plan.assignment[k]
    }
}

/// Estimates of the effective channel (CPE times block channel) at the
/// evaluation subcarrier for every symbol, with the error variance the
/// combiner should assume. Indexed (k·L + l)·τ_c + τ.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveEstimate {
    pub num_ues: usize,
    pub num_aps: usize,
    pub tau_c: usize,
    pub h: Vec<Complex64>,
    pub err: Vec<f64>,
}

impl EffectiveEstimate {
    fn zeros(k: usize, l: usize, tc: usize) -> Self {
        EffectiveEstimate {
            num_ues: k,
            num_aps: l,
            tau_c: tc,
            h: vec![Complex64::new(0.0, 0.0); k * l * tc],
            err: vec![0.0; k * l * tc],
        }
    }

    pub fn idx(&self, k: usize, l: usize, tau: usize) -> usize {
        (k * self.num_aps + l) * self.tau_c + tau
    }

    pub fn get(&self, k: usize, l: usize, tau: usize) -> Complex64 {
        self.h[self.idx(k, l, tau)]
    }

    pub fn err(&self, k: usize, l: usize, tau: usize) -> f64 {
        self.err[self.idx(k, l, tau)]
    }
}

/// Block-channel estimates, indexed k·L + l.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub num_ues: usize,
    pub num_aps: usize,
    pub h: Vec<Complex64>,
    /// Variance of the estimate (E|ĥ|²).
    pub eps: Vec<f64>,
    /// Error variance (β - eps).
    pub err: Vec<f64>,
}

impl ChannelEstimate {
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.h[k * self.num_aps + l]
    }
}

/// CPE estimates for every (k, l, τ), indexed (k·L + l)·τ_c + τ.
#[derive(Debug, Clone, PartialEq)]
pub struct CpeEstimate {
    pub num_ues: usize,
    pub num_aps: usize,
    pub tau_c: usize,
    /// After the amplitude constraint (equal to `raw` when unconstrained).
    pub j: Vec<Complex64>,
    /// Plain LMMSE estimate.
    pub raw: Vec<Complex64>,
    /// Error variance of the unconstrained estimate, when requested.
    pub var: Option<Vec<f64>>,
}

impl CpeEstimate {
    pub fn idx(&self, k: usize, l: usize, tau: usize) -> usize {
        (k * self.num_aps + l) * self.tau_c + tau
    }

    pub fn get(&self, k: usize, l: usize, tau: usize) -> Complex64 {
        self.j[self.idx(k, l, tau)]
    }

    /// The prior mean J̄ for every link.
    pub fn prior(ctx: &EstContext) -> Self {
        let (k_n, l_n, tc) = (ctx.k_n(), ctx.l_n(), ctx.tc());
        let mut j = Vec::with_capacity(k_n * l_n * tc);
        for _ in 0..k_n * l_n {
            j.extend_from_slice(&ctx.stats.mean0);
        }
        CpeEstimate {
            num_ues: k_n,
            num_aps: l_n,
            tau_c: tc,
            raw: j.clone(),
            j,
            var: None,
        }
    }
}

/// Amplitude constraint on CPE estimates: x ↦ x/|x| · clamp(|x|, κ_min, κ_max).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpeConstraint {
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl CpeConstraint {
    /// For good oscillators at early symbols.
    pub const GOOD_LO: CpeConstraint = CpeConstraint {
        kappa_min: 0.98,
        kappa_max: 1.0,
    };
    /// For poor oscillators or late symbols.
    pub const POOR_LO: CpeConstraint = CpeConstraint {
        kappa_min: 0.90,
        kappa_max: 1.0,
    };

    /// Picks one of the two presets from the oscillator quality.
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        if cfg.gamma_ap.max(cfg.gamma_ue) <= 1e-17 * (1.0 + 1e-9) {
            Self::GOOD_LO
        } else {
            Self::POOR_LO
        }
    }

    pub fn new(kappa_min: f64, kappa_max: f64) -> Result<Self> {
        if !(0.0 <= kappa_min && kappa_min <= kappa_max && kappa_max.is_finite()) {
            return Err(Error::config("need 0 <= kappa_min <= kappa_max"));
        }
        Ok(CpeConstraint {
            kappa_min,
            kappa_max,
        })
    }

    pub fn apply(&self, x: Complex64) -> Complex64 {
        let r = x.norm();
        if r == 0.0 {
            log::warn!("zero CPE estimate, returning kappa_min");
            return Complex64::new(self.kappa_min, 0.0);
        }
        x * (r.clamp(self.kappa_min, self.kappa_max) / r)
    }
}

fn lmmse_apply(solver: &HermitianSolver, y: &CVec, cross: &[CVec]) -> Vec<(Complex64, f64)> {
    let x = solver.solve(y);
    cross
        .iter()
        .map(|c| (c.dotc(&x), solver.quad_form(c)))
        .collect()
}

fn ap_obs(y: &PilotObservation, l: usize) -> CVec {
    CVec::from_column_slice(y.ap(l))
}

fn check_obs(ctx: &EstContext, y: &PilotObservation) -> Result<()> {
    if y.num_aps != ctx.l_n() || y.tau_p != ctx.tp() {
        return Err(Error::config(
            "pilot observation does not match the scenario",
        ));
    }
    if y.y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("non-finite pilot observation"));
    }
    Ok(())
}

/// ICI covariance at the pilot cells of AP l: Σ_k p_k β_{k,l} Z_{t_k}.
pub fn ici_cov_local(ctx: &EstContext, l: usize) -> CMat {
    let tp = ctx.tp();
    let mut z = CMat::zeros(tp, tp);
    for k in 0..ctx.k_n() {
        z += &ctx.stats.ici[ctx.t(k)] * Complex64::from(ctx.p(k) * ctx.beta(k, l));
    }
    z
}

/// Joint channel and CPE LMMSE per AP, accounting for the ICI at the pilot
/// cells. Estimates J_0^{(τ)} h for every symbol τ of the block.
pub fn lmmse_joint_distributed(
    ctx: &EstContext,
    y: &PilotObservation,
) -> Result<EffectiveEstimate> {
    check_obs(ctx, y)?;
    let (k_n, l_n, tc, tp) = (ctx.k_n(), ctx.l_n(), ctx.tc(), ctx.tp());
    let s2 = ctx.cfg.sigma2();
    let b0 = ctx.stats.b00_at(0).re;
    let mut out = EffectiveEstimate::zeros(k_n, l_n, tc);
    for l in 0..l_n {
        let mut psi = CMat::identity(tp, tp) * Complex64::from(s2);
        for k in 0..k_n {
            let w = Complex64::from(ctx.p(k) * ctx.beta(k, l));
            psi += (&ctx.stats.phi[ctx.t(k)] + &ctx.stats.ici[ctx.t(k)]) * w;
        }
        let solver = HermitianSolver::new(psi)?;
        let mut cross = Vec::with_capacity(k_n * tc);
        for k in 0..k_n {
            let sc = ctx.p(k).sqrt() * ctx.beta(k, l);
            for tau in 0..tc {
                cross.push(CVec::from_iterator(
                    tp,
                    ctx.stats.lmmse_cross[ctx.t(k)][tau].iter().map(|v| v * sc),
                ));
            }
        }
        let res = lmmse_apply(&solver, &ap_obs(y, l), &cross);
        for k in 0..k_n {
            for tau in 0..tc {
                let (h, eps) = res[k * tc + tau];
                let i = out.idx(k, l, tau);
                out.h[i] = h;
                out.err[i] = (ctx.beta(k, l) * b0 - eps).max(0.0);
            }
        }
    }
    Ok(out)
}

/// Channel MMSE estimate that ignores phase noise; the same value is used for
/// every symbol of the block.
pub fn mmse_pn_unaware(ctx: &EstContext, y: &PilotObservation) -> Result<EffectiveEstimate> {
    check_obs(ctx, y)?;
    let (k_n, l_n, tc, tp) = (ctx.k_n(), ctx.l_n(), ctx.tc(), ctx.tp());
    let s2 = ctx.cfg.sigma2();
    let mut out = EffectiveEstimate::zeros(k_n, l_n, tc);
    for l in 0..l_n {
        let mut psi = CMat::identity(tp, tp) * Complex64::from(s2);
        for k in 0..k_n {
            let s = CVec::from_column_slice(ctx.seq(k));
            psi += &s * s.adjoint() * Complex64::from(ctx.p(k) * ctx.beta(k, l));
        }
        let solver = HermitianSolver::new(psi)?;
        let cross: Vec<CVec> = (0..k_n)
            .map(|k| {
                CVec::from_column_slice(ctx.seq(k))
                    * Complex64::from(ctx.p(k).sqrt() * ctx.beta(k, l))
            })
            .collect();
        let res = lmmse_apply(&solver, &ap_obs(y, l), &cross);
        for (k, &(h, eps)) in res.iter().enumerate() {
            for tau in 0..tc {
                let i = out.idx(k, l, tau);
                out.h[i] = h;
                out.err[i] = (ctx.beta(k, l) - eps).max(0.0);
            }
        }
    }
    Ok(out)
}

/// LMMSE of e^{jθ(τ, m)} h that models every pilot as seeing its own phase
/// sample, with correlation exp(-σ²|Δg|/2) over the sample distance
/// Δg = Δτ·(N + N_cp) + Δn. Targets subcarrier `m` of every symbol.
pub fn lmmse_single_carrier(
    ctx: &EstContext,
    y: &PilotObservation,
    m: usize,
) -> Result<EffectiveEstimate> {
    check_obs(ctx, y)?;
    let (k_n, l_n, tc, tp) = (ctx.k_n(), ctx.l_n(), ctx.tc(), ctx.tp());
    let s2 = ctx.cfg.sigma2();
    let rate = ctx.stats.cfg.sigma2_total() / 2.0;
    let stride = ctx.cfg.grid.stride() as f64;
    let cells = &ctx.stats.plan.cells;
    let g = |tau: usize, n: usize| tau as f64 * stride + n as f64;
    let rho = |d: f64| (-rate * d.abs()).exp();
    let mut out = EffectiveEstimate::zeros(k_n, l_n, tc);
    for l in 0..l_n {
        let mut psi = CMat::identity(tp, tp) * Complex64::from(s2);
        for k in 0..k_n {
            let s = ctx.seq(k);
            let w = ctx.p(k) * ctx.beta(k, l);
            for a in 0..tp {
                for b in 0..tp {
                    let d = g(cells[a].symbol, cells[a].subcarrier)
                        - g(cells[b].symbol, cells[b].subcarrier);
                    psi[(a, b)] += s[a] * s[b].conj() * (w * rho(d));
                }
            }
        }
        let solver = HermitianSolver::new(psi)?;
        let mut cross = Vec::with_capacity(k_n * tc);
        for k in 0..k_n {
            let sc = ctx.p(k).sqrt() * ctx.beta(k, l);
            let s = ctx.seq(k);
            for tau in 0..tc {
                cross.push(CVec::from_iterator(
                    tp,
                    (0..tp).map(|a| {
                        s[a] * (sc * rho(g(cells[a].symbol, cells[a].subcarrier) - g(tau, m)))
                    }),
                ));
            }
        }
        let res = lmmse_apply(&solver, &ap_obs(y, l), &cross);
        for k in 0..k_n {
            for tau in 0..tc {
                let (h, eps) = res[k * tc + tau];
                let i = out.idx(k, l, tau);
                out.h[i] = h;
                out.err[i] = (ctx.beta(k, l) - eps).max(0.0);
            }
        }
    }
    Ok(out)
}

/// LMMSE of the block channel h given CPE estimates at the pilot symbols.
pub fn lmmse_channel_given_cpe(
    ctx: &EstContext,
    y: &PilotObservation,
    cpe: &CpeEstimate,
) -> Result<ChannelEstimate> {
    check_obs(ctx, y)?;
    let (k_n, l_n, tp) = (ctx.k_n(), ctx.l_n(), ctx.tp());
    let s2 = ctx.cfg.sigma2();
    let cells = &ctx.stats.plan.cells;
    let mut out = ChannelEstimate {
        num_ues: k_n,
        num_aps: l_n,
        h: vec![Complex64::new(0.0, 0.0); k_n * l_n],
        eps: vec![0.0; k_n * l_n],
        err: vec![0.0; k_n * l_n],
    };
    for l in 0..l_n {
        let mut psi = ici_cov_local(ctx, l) + CMat::identity(tp, tp) * Complex64::from(s2);
        let mut cross = Vec::with_capacity(k_n);
        for k in 0..k_n {
            let s = ctx.seq(k);
            let v = CVec::from_iterator(tp, (0..tp).map(|a| s[a] * cpe.get(k, l, cells[a].symbol)));
            psi += &v * v.adjoint() * Complex64::from(ctx.p(k) * ctx.beta(k, l));
            cross.push(v * Complex64::from(ctx.p(k).sqrt() * ctx.beta(k, l)));
        }
        let solver = HermitianSolver::new(psi)?;
        let res = lmmse_apply(&solver, &ap_obs(y, l), &cross);
        for (k, &(h, eps)) in res.iter().enumerate() {
            let i = k * l_n + l;
            out.h[i] = h;
            out.eps[i] = eps;
            out.err[i] = (ctx.beta(k, l) - eps).max(0.0);
        }
    }
    Ok(out)
}

/// Stacked pilot observations of all APs: mean and covariance conditioned on
/// channel estimates, as seen by the centralized CPE estimator.
pub struct CentralizedModel {
    pub mean: CVec,
    pub cov: CMat,
}

fn pilot_means(ctx: &EstContext, h: &ChannelEstimate) -> CVec {
    let (k_n, l_n, tp) = (ctx.k_n(), ctx.l_n(), ctx.tp());
    let mut m = CVec::zeros(l_n * tp);
    for l in 0..l_n {
        for k in 0..k_n {
            let w = h.get(k, l) * ctx.p(k).sqrt();
            for a in 0..tp {
                m[l * tp + a] += w * ctx.stats.mean_pilot[ctx.t(k)][a];
            }
        }
    }
    m
}

/// Mean and covariance of the stacked pilots treating the channel estimates
/// as the true block-0 channels.
pub fn cpe_cov_global(ctx: &EstContext, h: &ChannelEstimate) -> CentralizedModel {
    let (k_n, l_n, tp) = (ctx.k_n(), ctx.l_n(), ctx.tp());
    let st = ctx.stats;
    let mean = pilot_means(ctx, h);
    let dim = l_n * tp;
    let mut cov = CMat::zeros(dim, dim);
    // centred pilot-signal kernels per (pair, t1, t2)
    let centred = |pair: LinkPair, t1: usize, t2: usize| -> CMat {
        let mp1 = CVec::from_column_slice(&st.mean_pilot[t1]);
        let mp2 = CVec::from_column_slice(&st.mean_pilot[t2]);
        &st.pilot_sig[pair.index()][&(t1, t2)] - mp1 * mp2.adjoint()
    };
    let mut kern: std::collections::HashMap<(usize, usize, usize), CMat> = Default::default();
    for pair in LinkPair::ALL {
        for k1 in 0..k_n {
            for k2 in 0..k_n {
                let key = (pair.index(), ctx.t(k1), ctx.t(k2));
                kern.entry(key)
                    .or_insert_with(|| centred(pair, key.1, key.2));
            }
        }
    }
    for l1 in 0..l_n {
        for l2 in 0..l_n {
            let mut block = CMat::zeros(tp, tp);
            for k1 in 0..k_n {
                let w1 = h.get(k1, l1) * ctx.p(k1).sqrt();
                for k2 in 0..k_n {
                    let w = w1 * (h.get(k2, l2) * ctx.p(k2).sqrt()).conj();
                    let pair = ctx.stats.cfg.pair(k1, l1, k2, l2);
                    block += &kern[&(pair.index(), ctx.t(k1), ctx.t(k2))] * w;
                }
                // data-cell ICI (only within a symbol)
                let pair = ctx.stats.cfg.pair(k1, l1, k1, l2);
                let hh = w1 * (h.get(k1, l2) * ctx.p(k1).sqrt()).conj();
                block += &st.ici_in[pair.index()] * hh;
                if l1 == l2 {
                    block += &st.ici_out * Complex64::from(ctx.p(k1) * ctx.beta(k1, l1));
                }
            }
            cov.view_mut((l1 * tp, l2 * tp), (tp, tp)).copy_from(&block);
        }
    }
    let s2 = ctx.cfg.sigma2();
    for i in 0..dim {
        cov[(i, i)] += s2;
    }
    CentralizedModel { mean, cov }
}

/// Centralized LMMSE of every CPE J_{0,k,l}^{(τ)} from all APs' pilots given
/// channel estimates, optionally followed by the amplitude constraint.
pub fn cpe_centralized(
    ctx: &EstContext,
    y: &PilotObservation,
    h: &ChannelEstimate,
    constraint: Option<CpeConstraint>,
    with_variance: bool,
) -> Result<CpeEstimate> {
    check_obs(ctx, y)?;
    let (k_n, l_n, tc, tp) = (ctx.k_n(), ctx.l_n(), ctx.tc(), ctx.tp());
    let st = ctx.stats;
    let model = cpe_cov_global(ctx, h);
    let solver = HermitianSolver::new(model.cov)?;
    let yv = CVec::from_column_slice(&y.y);
    let z = solver.solve(&(yv - &model.mean));
    let dim = l_n * tp;
    // Conjugated channel weights per (k', l').
    let wts: Vec<Complex64> = (0..k_n * l_n)
        .map(|i| (h.h[i] * ctx.p(i / l_n).sqrt()).conj())
        .collect();
    let mut raw = vec![Complex64::new(0.0, 0.0); k_n * l_n * tc];
    let mut var = with_variance.then(|| vec![0.0; k_n * l_n * tc]);
    let mut b = CVec::zeros(dim);
    for k in 0..k_n {
        for l in 0..l_n {
            for tau in 0..tc {
                let jbar = st.mean0[tau];
                for l2 in 0..l_n {
                    for bb in 0..tp {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for k2 in 0..k_n {
                            let pair = st.cfg.pair(k, l, k2, l2);
                            let t2 = ctx.t(k2);
                            let c = st.cpe_cross[pair.index()][t2][tau][bb]
                                - jbar * st.mean_pilot[t2][bb].conj();
                            acc += wts[k2 * l_n + l2] * c;
                        }
                        b[l2 * tp + bb] = acc;
                    }
                }
                let i = (k * l_n + l) * tc + tau;
                // Ĵ = J̄ + b^T z, with b the row Cov(J, y).
                raw[i] = jbar
                    + b.iter()
                        .zip(z.iter())
                        .map(|(x, y)| x * y)
                        .sum::<Complex64>();
                if let Some(v) = var.as_mut() {
                    let bc = b.map(|x| x.conj());
                    let prior = st.cpe_corr[0][tau][tau].re - jbar.norm_sqr();
                    v[i] = (prior - solver.quad_form(&bc)).max(0.0);
                }
            }
        }
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("non-finite CPE estimate"));
    }
    let j = match constraint {
        Some(c) => raw.iter().map(|&x| c.apply(x)).collect(),
        None => raw.clone(),
    };
    Ok(CpeEstimate {
        num_ues: k_n,
        num_aps: l_n,
        tau_c: tc,
        j,
        raw,
        var,
    })
}

/// How the alternating estimator is started.
#[derive(Clone, Copy)]
pub enum Init<'a> {
    /// Channel LMMSE with the CPEs set to their prior mean.
    Lmmse,
    /// Neural-network channel estimate.
    Dl(&'a DlNetwork),
}

#[derive(Debug, Clone)]
pub struct Iterate {
    pub h: ChannelEstimate,
    pub cpe: CpeEstimate,
}

#[derive(Debug, Clone)]
pub struct AlternatingResult {
    /// `iterates[0]` is the initialisation; `iterates[i]` follows i rounds.
    pub iterates: Vec<Iterate>,
}

impl AlternatingResult {
    pub fn last(&self) -> &Iterate {
        self.iterates.last().expect("at least the initial iterate")
    }
}

/// Alternates the centralized CPE estimate and the per-AP channel estimate.
pub fn alternating_centralized(
    ctx: &EstContext,
    y: &PilotObservation,
    init: Init,
    n_iter: usize,
    constraint: Option<CpeConstraint>,
) -> Result<AlternatingResult> {
    check_obs(ctx, y)?;
    let prior = CpeEstimate::prior(ctx);
    let h0 = match init {
        Init::Lmmse => lmmse_channel_given_cpe(ctx, y, &prior)?,
        Init::Dl(net) => net.estimate(ctx, y)?,
    };
    let mut iterates = vec![Iterate { h: h0, cpe: prior }];
    for _ in 0..n_iter {
        let h_prev = &iterates.last().unwrap().h;
        let cpe = cpe_centralized(ctx, y, h_prev, constraint, false)?;
        let h = lmmse_channel_given_cpe(ctx, y, &cpe)?;
        iterates.push(Iterate { h, cpe });
    }
    Ok(AlternatingResult { iterates })
}

/// Effective-channel view of a centralized iterate. The assumed error
/// variance is β·B_{0,0}^{(0)} - |Ĵ|²·ε, floored at zero.
pub fn effective_from_iterate(ctx: &EstContext, it: &Iterate) -> EffectiveEstimate {
    let (k_n, l_n, tc) = (ctx.k_n(), ctx.l_n(), ctx.tc());
    let b0 = ctx.stats.b00_at(0).re;
    let mut out = EffectiveEstimate::zeros(k_n, l_n, tc);
    for k in 0..k_n {
        for l in 0..l_n {
            let h = it.h.get(k, l);
            let eps = it.h.eps[k * l_n + l];
            for tau in 0..tc {
                let j = it.cpe.get(k, l, tau);
                let i = out.idx(k, l, tau);
                out.h[i] = j * h;
                out.err[i] = (ctx.beta(k, l) * b0 - j.norm_sqr() * eps).max(0.0);
            }
        }
    }
    out
}

/// ‖y - Σ_k √p_k (s_k ⊙ Ĵ_{k,l}) ĥ_{k,l}‖² summed over APs.
pub fn pilot_residual(ctx: &EstContext, y: &PilotObservation, it: &Iterate) -> f64 {
    let (k_n, l_n, tp) = (ctx.k_n(), ctx.l_n(), ctx.tp());
    let cells = &ctx.stats.plan.cells;
    let mut r = 0.0;
    for l in 0..l_n {
        for a in 0..tp {
            let mut m = Complex64::new(0.0, 0.0);
            for k in 0..k_n {
                m += ctx.seq(k)[a]
                    * it.cpe.get(k, l, cells[a].symbol)
                    * it.h.get(k, l)
                    * ctx.p(k).sqrt();
            }
            r += (y.get(l, a) - m).norm_sqr();
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_clamps_amplitude_and_keeps_phase() {
        let c = CpeConstraint::POOR_LO;
        let x = Complex64::from_polar(0.5, 1.0);
        let y = c.apply(x);
        assert!((y.norm() - 0.9).abs() < 1e-15);
        assert!((y.arg() - 1.0).abs() < 1e-15);
        let x = Complex64::from_polar(1.3, -2.0);
        assert!((c.apply(x).norm() - 1.0).abs() < 1e-15);
        let x = Complex64::from_polar(0.95, 0.3);
        assert_eq!(c.apply(x), x);
        assert_eq!(c.apply(Complex64::new(0.0, 0.0)), Complex64::new(0.9, 0.0));
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("nope".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn constraint_validation() {
        assert!(CpeConstraint::new(0.9, 1.0).is_ok());
        assert!(CpeConstraint::new(1.1, 1.0).is_err());
        assert!(CpeConstraint::new(-0.1, 1.0).is_err());
    }
}
