//! Wiener phase noise: oscillator traces, closed-form correlations of the
//! phase and of its DFT (the phase drift J), and the statistics tables the
//! estimators consume.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;

use crate::config::{LagConvention, LoMode, PilotPlan, ScenarioConfig};
use crate::{rng, Complex64, Error, Result};

/// Per-sample variance of a Wiener phase increment, 4π²f_c²γT_s.
pub fn increment_variance(gamma: f64, f_c: f64, t_s: f64) -> f64 {
    4.0 * PI * PI * f_c * f_c * gamma * t_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnConfig {
    pub sigma2_ap: f64,
    pub sigma2_ue: f64,
    pub lo_mode: LoMode,
    pub n: usize,
    pub n_cp: usize,
    pub tau_c: usize,
    pub lag: LagConvention,
}

/// How two UE–AP links share oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkPair {
    pub same_ue: bool,
    pub same_ap: bool,
}

impl LinkPair {
    pub const SAME: LinkPair = LinkPair {
        same_ue: true,
        same_ap: true,
    };
    pub const ALL: [LinkPair; 4] = [
        LinkPair {
            same_ue: true,
            same_ap: true,
        },
        LinkPair {
            same_ue: true,
            same_ap: false,
        },
        LinkPair {
            same_ue: false,
            same_ap: true,
        },
        LinkPair {
            same_ue: false,
            same_ap: false,
        },
    ];

    pub fn index(self) -> usize {
        (!self.same_ue as usize) * 2 + (!self.same_ap as usize)
    }
}

/// Decomposition of E{exp(j(θ1 - θ2))} into a shared part exp(-a|g1 - g2|)
/// and independent parts exp(-b·g1)·exp(-b·g2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairKernel {
    pub a: f64,
    pub b: f64,
    pub stride_shared: usize,
    pub stride_indep: usize,
}

impl PnConfig {
    pub fn from_scenario(c: &ScenarioConfig) -> Self {
        let t_s = c.grid.sample_time();
        PnConfig {
            sigma2_ap: increment_variance(c.gamma_ap, c.grid.f_c, t_s),
            sigma2_ue: increment_variance(c.gamma_ue, c.grid.f_c, t_s),
            lo_mode: c.lo_mode,
            n: c.grid.n,
            n_cp: c.grid.n_cp,
            tau_c: c.coherence.tau_c,
            lag: c.cp_in_lag,
        }
    }

    pub fn sigma2_total(&self) -> f64 {
        self.sigma2_ap + self.sigma2_ue
    }

    pub fn pair(&self, k1: usize, l1: usize, k2: usize, l2: usize) -> LinkPair {
        LinkPair {
            same_ue: k1 == k2,
            same_ap: l1 == l2 || self.lo_mode == LoMode::Shared,
        }
    }

    fn stride(&self, with_cp: bool) -> usize {
        match self.lag {
            LagConvention::Always => self.n + self.n_cp,
            LagConvention::Never => self.n,
            LagConvention::PerEquation => {
                if with_cp {
                    self.n + self.n_cp
                } else {
                    self.n
                }
            }
        }
    }

    /// Stride used by the drift mean.
    pub fn mean_stride(&self) -> usize {
        self.stride(false)
    }

    pub fn kernel(&self, pair: LinkPair) -> PairKernel {
        let (su, sa) = (self.sigma2_ue, self.sigma2_ap);
        let shared = if pair.same_ue { su } else { 0.0 } + if pair.same_ap { sa } else { 0.0 };
        let indep = if pair.same_ue { 0.0 } else { su } + if pair.same_ap { 0.0 } else { sa };
        // Shared-oscillator cross terms between different UEs are the only
        // ones written without the cyclic prefix.
        let with_cp = !(self.lo_mode == LoMode::Shared && !pair.same_ue);
        let s = self.stride(with_cp);
        PairKernel {
            a: shared / 2.0,
            b: indep / 2.0,
            stride_shared: s,
            stride_indep: s,
        }
    }
}

/// E{exp(j(θ(τ1,n1) - θ(τ2,n2)))} for one link.
pub fn pn_autocorr(cfg: &PnConfig, tau1: usize, n1: usize, tau2: usize, n2: usize) -> f64 {
    pn_crosscorr(cfg, LinkPair::SAME, tau1, n1, tau2, n2)
}

/// E{exp(j(θ_{k1,l1}(τ1,n1) - θ_{k2,l2}(τ2,n2)))} for a pair of links.
pub fn pn_crosscorr(
    cfg: &PnConfig,
    pair: LinkPair,
    tau1: usize,
    n1: usize,
    tau2: usize,
    n2: usize,
) -> f64 {
    let kern = cfg.kernel(pair);
    let g = |tau: usize, n: usize, s: usize| (tau * s + n) as f64;
    let lag = (g(tau1, n1, kern.stride_shared) - g(tau2, n2, kern.stride_shared)).abs();
    (-kern.a * lag - kern.b * (g(tau1, n1, kern.stride_indep) + g(tau2, n2, kern.stride_indep)))
        .exp()
}

/// E{exp(jθ(τ,n))} for one link.
pub fn mean_phase(cfg: &PnConfig, tau: usize, n: usize) -> f64 {
    (-cfg.sigma2_total() / 2.0 * (tau * cfg.mean_stride() + n) as f64).exp()
}

fn twiddle(n: usize, i: usize, big_n: usize) -> Complex64 {
    let m = (n * i) % big_n;
    Complex64::from_polar(1.0, -2.0 * PI * m as f64 / big_n as f64)
}

/// (1/N²) Σ_{n1,n2} exp(-a|d + n1 - n2| - b1·n1 - b2·n2) e^{-j2π(n1·i1 - n2·i2)/N}.
///
/// Runs in O(N) for d = 0 and |d| >= N - 1, which covers every lag that
/// occurs on the OFDM grid; other offsets fall back to the double sum.
pub fn corr_dft(big_n: usize, a: f64, b1: f64, b2: f64, d: i64, i1: usize, i2: usize) -> Complex64 {
    if a == 0.0 && b1 == 0.0 && b2 == 0.0 {
        // No phase noise: the sum factors into two DFTs of a constant.
        let one = i1.is_multiple_of(big_n) && i2.is_multiple_of(big_n);
        return Complex64::new(if one { 1.0 } else { 0.0 }, 0.0);
    }
    let nn = big_n as i64;
    let u: Vec<Complex64> = (0..big_n)
        .map(|n| twiddle(n, i1, big_n) * (-b1 * n as f64).exp())
        .collect();
    let v: Vec<Complex64> = (0..big_n)
        .map(|n| twiddle(n, i2, big_n).conj() * (-b2 * n as f64).exp())
        .collect();
    let scale = 1.0 / (big_n * big_n) as f64;
    let sum = if d == 0 {
        let decay = (-a).exp();
        let suffix = |w: &[Complex64]| {
            let mut s = vec![Complex64::new(0.0, 0.0); big_n];
            let mut acc = Complex64::new(0.0, 0.0);
            for n in (0..big_n).rev() {
                acc = w[n] + acc * decay;
                s[n] = acc;
            }
            s
        };
        let su = suffix(&u);
        let sv = suffix(&v);
        (0..big_n)
            .map(|n| v[n] * su[n] + u[n] * (sv[n] - v[n]))
            .sum()
    } else if d >= nn - 1 {
        // d + n1 - n2 >= 0 everywhere
        let p: Complex64 = (0..big_n).map(|n| u[n] * (-a * n as f64).exp()).sum();
        let q: Complex64 = (0..big_n)
            .map(|n| v[n] * (-a * (d - n as i64) as f64).exp())
            .sum();
        p * q
    } else if d <= -(nn - 1) {
        let p: Complex64 = (0..big_n)
            .map(|n| u[n] * (-a * (-d - n as i64) as f64).exp())
            .sum();
        let q: Complex64 = (0..big_n).map(|n| v[n] * (-a * n as f64).exp()).sum();
        p * q
    } else {
        corr_dft_naive_sum(&u, &v, a, d)
    };
    sum * scale
}

fn corr_dft_naive_sum(u: &[Complex64], v: &[Complex64], a: f64, d: i64) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (n1, &x) in u.iter().enumerate() {
        for (n2, &y) in v.iter().enumerate() {
            s += x * y * (-a * (d + n1 as i64 - n2 as i64).abs() as f64).exp();
        }
    }
    s
}

/// Reference O(N²) evaluation of [`corr_dft`].
pub fn corr_dft_naive(
    big_n: usize,
    a: f64,
    b1: f64,
    b2: f64,
    d: i64,
    i1: usize,
    i2: usize,
) -> Complex64 {
    let u: Vec<Complex64> = (0..big_n)
        .map(|n| twiddle(n, i1, big_n) * (-b1 * n as f64).exp())
        .collect();
    let v: Vec<Complex64> = (0..big_n)
        .map(|n| twiddle(n, i2, big_n).conj() * (-b2 * n as f64).exp())
        .collect();
    corr_dft_naive_sum(&u, &v, a, d) / (big_n * big_n) as f64
}

/// E{J_{i1}^{(τ1)} conj(J_{i2}^{(τ2)})} for a pair of links; indices are mod N.
pub fn drift_corr(
    cfg: &PnConfig,
    pair: LinkPair,
    tau1: usize,
    i1: usize,
    tau2: usize,
    i2: usize,
) -> Complex64 {
    let k = cfg.kernel(pair);
    let d = (tau1 as i64 - tau2 as i64) * k.stride_shared as i64;
    let abs = (-k.b * ((tau1 + tau2) * k.stride_indep) as f64).exp();
    corr_dft(cfg.n, k.a, k.b, k.b, d, i1 % cfg.n, i2 % cfg.n) * abs
}

/// Drift correlation of one link with itself at symbol lag Δτ.
pub fn drift_corr_same(cfg: &PnConfig, i1: usize, i2: usize, dtau: i64) -> Complex64 {
    let k = cfg.kernel(LinkPair::SAME);
    corr_dft(
        cfg.n,
        k.a,
        0.0,
        0.0,
        dtau * k.stride_shared as i64,
        i1 % cfg.n,
        i2 % cfg.n,
    )
}

/// E{J_i^{(τ)}}.
pub fn mean_phase_drift(cfg: &PnConfig, tau: usize, i: usize) -> Complex64 {
    let n = cfg.n;
    let rate = cfg.sigma2_total() / 2.0;
    let base = tau * cfg.mean_stride();
    let s: Complex64 = (0..n)
        .map(|m| twiddle(m, i % n, n) * (-rate * (base + m) as f64).exp())
        .sum();
    s / n as f64
}

/// Phase trajectories of every oscillator over one coherence block. Only the
/// N useful samples of each symbol are stored; the cyclic prefix advances the
/// process between symbols.
#[derive(Debug, Clone)]
pub struct PnTrace {
    pub n: usize,
    pub tau_c: usize,
    pub lo_mode: LoMode,
    /// `ue[k][τ·N + n]`
    pub ue: Vec<Vec<f64>>,
    /// `ap[m][τ·N + n]`, one row per AP oscillator.
    pub ap: Vec<Vec<f64>>,
}

impl PnTrace {
    /// Draws UE paths first, then AP paths, each device sequentially in time.
    pub fn generate<R: Rng + ?Sized>(
        cfg: &PnConfig,
        num_ues: usize,
        num_aps: usize,
        rng: &mut R,
    ) -> Self {
        let path = |sigma2: f64, rng: &mut R| {
            let mut p = Vec::with_capacity(cfg.tau_c * cfg.n);
            let step = sigma2.sqrt();
            let jump = ((cfg.n_cp + 1) as f64 * sigma2).sqrt();
            let mut theta = 0.0;
            for tau in 0..cfg.tau_c {
                for m in 0..cfg.n {
                    if tau > 0 || m > 0 {
                        let sd = if m == 0 { jump } else { step };
                        theta += sd * rng::normal(rng);
                    }
                    p.push(theta);
                }
            }
            p
        };
        let ue = (0..num_ues).map(|_| path(cfg.sigma2_ue, rng)).collect();
        let n_ap = match cfg.lo_mode {
            LoMode::Separate => num_aps,
            LoMode::Shared => 1,
        };
        let ap = (0..n_ap).map(|_| path(cfg.sigma2_ap, rng)).collect();
        PnTrace {
            n: cfg.n,
            tau_c: cfg.tau_c,
            lo_mode: cfg.lo_mode,
            ue,
            ap,
        }
    }

    fn ap_row(&self, l: usize) -> &[f64] {
        match self.lo_mode {
            LoMode::Separate => &self.ap[l],
            LoMode::Shared => &self.ap[0],
        }
    }

    pub fn theta(&self, k: usize, l: usize, tau: usize, n: usize) -> f64 {
        let g = tau * self.n + n;
        self.ue[k][g] + self.ap_row(l)[g]
    }

    /// exp(jθ_{k,l}) over the N samples of symbol τ.
    pub fn phasor(&self, k: usize, l: usize, tau: usize) -> Vec<Complex64> {
        let lo = tau * self.n;
        let (u, a) = (
            &self.ue[k][lo..lo + self.n],
            &self.ap_row(l)[lo..lo + self.n],
        );
        u.iter()
            .zip(a)
            .map(|(x, y)| Complex64::from_polar(1.0, x + y))
            .collect()
    }

    /// Common phase error J_0 of symbol τ.
    pub fn cpe(&self, k: usize, l: usize, tau: usize) -> Complex64 {
        let lo = tau * self.n;
        let (u, a) = (
            &self.ue[k][lo..lo + self.n],
            &self.ap_row(l)[lo..lo + self.n],
        );
        let s: Complex64 = u
            .iter()
            .zip(a)
            .map(|(x, y)| Complex64::from_polar(1.0, x + y))
            .sum();
        s / self.n as f64
    }

    /// Full phase-drift vector J_i = (1/N) Σ_n e^{jθ_n} e^{-j2πni/N}.
    pub fn phase_drift_dft(&self, k: usize, l: usize, tau: usize) -> Vec<Complex64> {
        let mut x = self.phasor(k, l, tau);
        let fft = crate::ofdm::plan_fft(self.n, false);
        fft.process(&mut x);
        let s = 1.0 / self.n as f64;
        x.iter_mut().for_each(|v| *v *= s);
        x
    }
}

/// Upper bound on the memory the statistics tables may take.
pub const DEFAULT_STATS_BUDGET_BYTES: usize = 1 << 30;

/// Tables of phase-noise statistics for one configuration and pilot plan.
/// All quantities are per unit transmit power and unit large-scale gain.
#[derive(Debug, Clone)]
pub struct PnStatistics {
    pub cfg: PnConfig,
    pub plan: PilotPlan,
    /// B_{i,i}^{(0)} for i in 0..N; sums to one.
    pub diag: Vec<f64>,
    /// B_{0,0}^{(Δτ)} for Δτ in -(τ_c-1)..=τ_c-1, offset by τ_c-1.
    pub b00: Vec<Complex64>,
    /// J̄_0^{(τ)}.
    pub mean0: Vec<Complex64>,
    /// `cpe_lag[τ][a]` = B_{0,0}^{(τ_a - τ)}.
    pub cpe_lag: Vec<Vec<Complex64>>,
    /// `cpe_corr[pair][τ1][τ2]` = E{J_0^{(τ1)} conj(J_0^{(τ2)})}.
    pub cpe_corr: Vec<Vec<Vec<Complex64>>>,
    /// Per pilot index: desired-signal Gram Φ_t and ICI covariance Z_t of one link.
    pub phi: Vec<Mat>,
    pub ici: Vec<Mat>,
    /// `lmmse_cross[t][τ][a]`: E{y_a conj(J_0^{(τ)})} per unit gain for pilot t.
    pub lmmse_cross: Vec<Vec<Vec<Complex64>>>,
    /// `pilot_sig[pair][(t1,t2)]`: pilot-cell signal correlation between two links.
    pub pilot_sig: Vec<HashMap<(usize, usize), Mat>>,
    /// `cpe_cross[pair][t][τ][b]`: E{J_0^{(τ)} conj(pilot part of y_b)} per unit channel.
    pub cpe_cross: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// `mean_pilot[t][a]`: E{pilot part of y_a} per unit channel.
    pub mean_pilot: Vec<Vec<Complex64>>,
    /// ICI from data cells of block 0 (`ici_in[pair]`) and from the other
    /// blocks (`ici_out`, same link only); entries with τ_a != τ_b are zero.
    pub ici_in: Vec<Mat>,
    pub ici_out: Mat,
}

pub type Mat = nalgebra::DMatrix<Complex64>;

impl PnStatistics {
    pub fn new(cfg: PnConfig, plan: &PilotPlan) -> Result<Self> {
        Self::with_budget(cfg, plan, DEFAULT_STATS_BUDGET_BYTES)
    }

    pub fn estimated_bytes(cfg: &PnConfig, plan: &PilotPlan) -> usize {
        let tp = plan.tau_p();
        let c = std::mem::size_of::<Complex64>();
        let used = plan.used_pilots().len();
        let mats = (2 * tp + 4 * used * used + 5) * tp * tp;
        let vecs = 4 * tp * cfg.tau_c * tp + cfg.tau_c * tp * (tp + 1) + 4 * cfg.tau_c * cfg.tau_c;
        (mats + vecs) * c + cfg.n * 8
    }

    pub fn with_budget(cfg: PnConfig, plan: &PilotPlan, budget: usize) -> Result<Self> {
        let need = Self::estimated_bytes(&cfg, plan);
        if need > budget {
            return Err(Error::Resource(format!(
                "phase-noise statistics need about {need} bytes, budget is {budget}"
            )));
        }
        if plan.tau_c != cfg.tau_c {
            return Err(Error::config(
                "pilot plan and phase-noise config disagree on tau_c",
            ));
        }
        let n = cfg.n;
        let tc = cfg.tau_c;
        let tp = plan.tau_p();
        let mut cache: HashMap<(usize, usize, usize, usize, usize), Complex64> = HashMap::new();
        let mut m = |pair: LinkPair, t1: usize, i1: i64, t2: usize, i2: i64| -> Complex64 {
            let i1 = i1.rem_euclid(n as i64) as usize;
            let i2 = i2.rem_euclid(n as i64) as usize;
            *cache
                .entry((pair.index(), t1, i1, t2, i2))
                .or_insert_with(|| drift_corr(&cfg, pair, t1, i1, t2, i2))
        };

        let sk = cfg.kernel(LinkPair::SAME);
        let diag: Vec<f64> = (0..n)
            .map(|i| corr_dft(n, sk.a, 0.0, 0.0, 0, i, i).re)
            .collect();
        let b00: Vec<Complex64> = (-(tc as i64 - 1)..tc as i64)
            .map(|d| drift_corr_same(&cfg, 0, 0, d))
            .collect();
        let b00_at = |d: i64| b00[(d + tc as i64 - 1) as usize];
        let mean0: Vec<Complex64> = (0..tc).map(|t| mean_phase_drift(&cfg, t, 0)).collect();
        let cpe_lag: Vec<Vec<Complex64>> = (0..tc)
            .map(|t| {
                plan.cells
                    .iter()
                    .map(|c| b00_at(c.symbol as i64 - t as i64))
                    .collect()
            })
            .collect();
        let cpe_corr: Vec<Vec<Vec<Complex64>>> = LinkPair::ALL
            .iter()
            .map(|&p| {
                (0..tc)
                    .map(|t1| (0..tc).map(|t2| m(p, t1, 0, t2, 0)).collect())
                    .collect()
            })
            .collect();

        let cells = &plan.cells;
        let in_symbol: Vec<Vec<usize>> = (0..tp)
            .map(|a| plan.pilots_in_symbol(cells[a].symbol))
            .collect();
        let sub = |a: usize| cells[a].subcarrier as i64;

        // Unit kernels of the pilot part of y_a against that of y_b for each
        // link pair: kern[pair][a][b][(ȷ1, ȷ2)].
        let kern: Vec<Vec<Vec<Vec<Complex64>>>> = LinkPair::ALL
            .iter()
            .map(|&p| {
                (0..tp)
                    .map(|a| {
                        (0..tp)
                            .map(|b| {
                                let mut v =
                                    Vec::with_capacity(in_symbol[a].len() * in_symbol[b].len());
                                for &j1 in &in_symbol[a] {
                                    for &j2 in &in_symbol[b] {
                                        v.push(m(
                                            p,
                                            cells[a].symbol,
                                            sub(a) - sub(j1),
                                            cells[b].symbol,
                                            sub(b) - sub(j2),
                                        ));
                                    }
                                }
                                v
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let sig =
            |pair: usize, s1: &[Complex64], s2: &[Complex64], a: usize, b: usize| -> Complex64 {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut idx = 0;
                for &j1 in &in_symbol[a] {
                    for &j2 in &in_symbol[b] {
                        acc += s1[j1] * s2[j2].conj() * kern[pair][a][b][idx];
                        idx += 1;
                    }
                }
                acc
            };

        // Data-cell ICI within block 0 (all pairs) and from the remaining
        // subcarriers (same link), using Σ_ȷ B_{x-ȷ, y-ȷ} = δ_{xy}.
        let block0_data = |a: usize| plan.data_subcarriers(cells[a].symbol);
        let mut ici_in: Vec<Mat> = Vec::with_capacity(4);
        for &p in LinkPair::ALL.iter() {
            let mut z = Mat::zeros(tp, tp);
            for a in 0..tp {
                for b in 0..tp {
                    if cells[a].symbol != cells[b].symbol {
                        continue;
                    }
                    let t = cells[a].symbol;
                    z[(a, b)] = block0_data(a)
                        .iter()
                        .map(|&j| m(p, t, sub(a) - j as i64, t, sub(b) - j as i64))
                        .sum();
                }
            }
            ici_in.push(z);
        }
        let mut all_data = Mat::zeros(tp, tp);
        for a in 0..tp {
            for b in 0..tp {
                if cells[a].symbol != cells[b].symbol {
                    continue;
                }
                let t = cells[a].symbol;
                let pilots: Complex64 = in_symbol[a]
                    .iter()
                    .map(|&j| m(LinkPair::SAME, t, sub(a) - sub(j), t, sub(b) - sub(j)))
                    .sum();
                let delta = if a == b { 1.0 } else { 0.0 };
                all_data[(a, b)] = Complex64::new(delta, 0.0) - pilots;
            }
        }
        let ici_out = &all_data - &ici_in[0];

        let mut phi = Vec::with_capacity(tp);
        let mut ici = Vec::with_capacity(tp);
        let mut lmmse_cross = Vec::with_capacity(tp);
        let mut mean_pilot = Vec::with_capacity(tp);
        for t in 0..tp {
            let s = &plan.book[t];
            let mut ph = Mat::zeros(tp, tp);
            let mut z = all_data.clone();
            for a in 0..tp {
                for b in 0..tp {
                    let full = sig(0, s, s, a, b);
                    let own = s[a]
                        * s[b].conj()
                        * b00_at(cells[a].symbol as i64 - cells[b].symbol as i64);
                    ph[(a, b)] = own;
                    z[(a, b)] += full - own;
                }
            }
            phi.push(ph);
            ici.push(z);
            lmmse_cross.push(
                (0..tc)
                    .map(|tau| {
                        (0..tp)
                            .map(|a| {
                                in_symbol[a]
                                    .iter()
                                    .map(|&j| {
                                        s[j] * m(
                                            LinkPair::SAME,
                                            cells[a].symbol,
                                            sub(a) - sub(j),
                                            tau,
                                            0,
                                        )
                                    })
                                    .sum()
                            })
                            .collect()
                    })
                    .collect(),
            );
            mean_pilot.push(
                (0..tp)
                    .map(|a| {
                        in_symbol[a]
                            .iter()
                            .map(|&j| {
                                let i = (sub(a) - sub(j)).rem_euclid(n as i64) as usize;
                                s[j] * mean_phase_drift(&cfg, cells[a].symbol, i)
                            })
                            .sum()
                    })
                    .collect(),
            );
        }

        let used = plan.used_pilots();
        let mut pilot_sig = Vec::with_capacity(4);
        let mut cpe_cross = Vec::with_capacity(4);
        for (pi, &p) in LinkPair::ALL.iter().enumerate() {
            let mut tab = HashMap::new();
            for &t1 in &used {
                for &t2 in &used {
                    let mut mat = Mat::zeros(tp, tp);
                    for a in 0..tp {
                        for b in 0..tp {
                            mat[(a, b)] = sig(pi, &plan.book[t1], &plan.book[t2], a, b);
                        }
                    }
                    tab.insert((t1, t2), mat);
                }
            }
            pilot_sig.push(tab);
            cpe_cross.push(
                (0..tp)
                    .map(|t| {
                        let s = &plan.book[t];
                        (0..tc)
                            .map(|tau| {
                                (0..tp)
                                    .map(|b| {
                                        in_symbol[b]
                                            .iter()
                                            .map(|&j| {
                                                s[j].conj()
                                                    * m(p, tau, 0, cells[b].symbol, sub(b) - sub(j))
                                            })
                                            .sum()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            );
        }

        Ok(PnStatistics {
            cfg,
            plan: plan.clone(),
            diag,
            b00,
            mean0,
            cpe_lag,
            cpe_corr,
            phi,
            ici,
            lmmse_cross,
            pilot_sig,
            cpe_cross,
            mean_pilot,
            ici_in,
            ici_out,
        })
    }

    pub fn from_scenario(c: &ScenarioConfig) -> Result<Self> {
        Self::new(PnConfig::from_scenario(c), &c.pilot_plan()?)
    }

    /// B_{0,0}^{(Δτ)}.
    pub fn b00_at(&self, dtau: i64) -> Complex64 {
        self.b00[(dtau + self.cfg.tau_c as i64 - 1) as usize]
    }

    /// Fraction of the received power leaking into other subcarriers, 1 - B_{0,0}^{(0)}.
    pub fn ici_fraction(&self) -> f64 {
        1.0 - self.b00_at(0).re
    }
}
