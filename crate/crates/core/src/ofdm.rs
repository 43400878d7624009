//! OFDM frame synthesis: the exact model with inter-carrier interference (in
//! the time domain and, equivalently, in the frequency domain), the
//! single-carrier style model that rotates each subcarrier independently,
//! and a fast path that only produces the pilot observations.

use std::cell::RefCell;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::channel::{time_domain_taps, BlockChannels};
use crate::config::{DataModulation, PilotPlan, ScenarioConfig};
use crate::phase_noise::PnTrace;
use crate::{rng, Complex64};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unitary DFT in place.
pub fn dft(x: &mut [Complex64]) {
    let n = x.len();
    plan_fft(n, false).process(x);
    let s = 1.0 / (n as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
}

/// Unitary inverse DFT in place.
pub fn idft(x: &mut [Complex64]) {
    let n = x.len();
    plan_fft(n, true).process(x);
    let s = 1.0 / (n as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= s);
}

/// Transmitted symbols of every UE over one coherence block of the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub num_ues: usize,
    pub tau_c: usize,
    pub n: usize,
    s: Vec<Complex64>,
}

impl TxFrame {
    /// Unit-power data on every cell, then the pilot cells of block 0 are
    /// overwritten. Draws in (k, τ, n) order.
    pub fn generate<R: Rng + ?Sized>(cfg: &ScenarioConfig, plan: &PilotPlan, rng: &mut R) -> Self {
        let (k_n, tc, n) = (cfg.num_ues, cfg.coherence.tau_c, cfg.grid.n);
        let mut s = Vec::with_capacity(k_n * tc * n);
        for _ in 0..k_n * tc * n {
            s.push(match cfg.data_modulation {
                DataModulation::Gaussian => rng::cn(rng, 1.0),
                DataModulation::Qpsk => {
                    let re = if rng.random::<bool>() {
                        FRAC_1_SQRT_2
                    } else {
                        -FRAC_1_SQRT_2
                    };
                    let im = if rng.random::<bool>() {
                        FRAC_1_SQRT_2
                    } else {
                        -FRAC_1_SQRT_2
                    };
                    Complex64::new(re, im)
                }
            });
        }
        let mut f = TxFrame {
            num_ues: k_n,
            tau_c: tc,
            n,
            s,
        };
        for k in 0..k_n {
            let seq = plan.sequence(k);
            for (a, c) in plan.cells.iter().enumerate() {
                f.set(k, c.symbol, c.subcarrier, seq[a]);
            }
        }
        f
    }

    pub fn get(&self, k: usize, tau: usize, m: usize) -> Complex64 {
        self.s[(k * self.tau_c + tau) * self.n + m]
    }

    pub fn set(&mut self, k: usize, tau: usize, m: usize, v: Complex64) {
        self.s[(k * self.tau_c + tau) * self.n + m] = v;
    }

    pub fn symbol(&self, k: usize, tau: usize) -> &[Complex64] {
        let lo = (k * self.tau_c + tau) * self.n;
        &self.s[lo..lo + self.n]
    }
}

/// Received samples indexed by (AP, symbol, subcarrier) or time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub d0: usize,
    pub d1: usize,
    pub d2: usize,
    pub data: Vec<Complex64>,
}

impl Grid3 {
    pub fn zeros(d0: usize, d1: usize, d2: usize) -> Self {
        Grid3 {
            d0,
            d1,
            d2,
            data: vec![Complex64::new(0.0, 0.0); d0 * d1 * d2],
        }
    }

    pub fn get(&self, i: usize, j: usize, m: usize) -> Complex64 {
        self.data[(i * self.d1 + j) * self.d2 + m]
    }

    pub fn row(&self, i: usize, j: usize) -> &[Complex64] {
        let lo = (i * self.d1 + j) * self.d2;
        &self.data[lo..lo + self.d2]
    }

    pub fn row_mut(&mut self, i: usize, j: usize) -> &mut [Complex64] {
        let lo = (i * self.d1 + j) * self.d2;
        &mut self.data[lo..lo + self.d2]
    }
}

/// Per-UE split of a frequency-domain frame: `eff` and `ici` are indexed
/// (k·L + l, τ, n), `noise` is (l, τ, n).
#[derive(Debug, Clone, PartialEq)]
pub struct RxParts {
    pub eff: Grid3,
    pub ici: Grid3,
    pub noise: Grid3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    /// (l, τ, n)
    pub y: Grid3,
    pub parts: RxParts,
}

/// How the ICI convolution J ⊛ (h ⊙ s) is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvPath {
    /// Direct O(N²) sum over subcarriers.
    Direct,
    /// Through the time domain with FFTs, O(N log N).
    Fft,
    /// Direct up to 64 subcarriers, FFT above.
    #[default]
    Auto,
}

fn draw_time_noise<R: Rng + ?Sized>(
    l_n: usize,
    tc: usize,
    n: usize,
    sigma2: f64,
    rng: &mut R,
) -> Grid3 {
    let mut w = Grid3::zeros(l_n, tc, n);
    w.data.iter_mut().for_each(|v| *v = rng::cn(rng, sigma2));
    w
}

/// Exact model in the time domain: per symbol, the received samples are
/// Σ_k √p_k e^{jθ_{k,l}} (ȟ_{k,l} ⊛ š_k) + w̌, with š the unitary IDFT of the
/// symbols. Noise is drawn after all signal terms in (l, τ, n) order.
pub fn synthesize_time<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    tx: &TxFrame,
    ch: &BlockChannels,
    trace: &PnTrace,
    rng: &mut R,
) -> Grid3 {
    let (l_n, tc, n) = (cfg.num_aps, cfg.coherence.tau_c, cfg.grid.n);
    let mut y = Grid3::zeros(l_n, tc, n);
    for l in 0..l_n {
        for k in 0..cfg.num_ues {
            let taps = time_domain_taps(&ch.freq_response(k, l, cfg.coherence.n_c, n));
            let sp = cfg.power(k).sqrt();
            for tau in 0..tc {
                let mut x = tx.symbol(k, tau).to_vec();
                idft(&mut x);
                let ph = trace.phasor(k, l, tau);
                let out = y.row_mut(l, tau);
                for m in 0..n {
                    let mut c = Complex64::new(0.0, 0.0);
                    for (q, t) in taps.iter().enumerate() {
                        c += t * x[(m + n - q) % n];
                    }
                    out[m] += sp * ph[m] * c;
                }
            }
        }
    }
    let w = draw_time_noise(l_n, tc, n, cfg.sigma2(), rng);
    y.data.iter_mut().zip(&w.data).for_each(|(a, b)| *a += b);
    y
}

/// Exact model in the frequency domain with its split into the CPE term
/// √p J_0 h s, the inter-carrier interference, and noise. With the same RNG
/// state the output equals the unitary DFT of [`synthesize_time`].
pub fn synthesize_freq<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    tx: &TxFrame,
    ch: &BlockChannels,
    trace: &PnTrace,
    path: ConvPath,
    rng: &mut R,
) -> RxFrame {
    let (l_n, k_n, tc, n) = (cfg.num_aps, cfg.num_ues, cfg.coherence.tau_c, cfg.grid.n);
    let direct = match path {
        ConvPath::Direct => true,
        ConvPath::Fft => false,
        ConvPath::Auto => n <= 64,
    };
    let mut eff = Grid3::zeros(k_n * l_n, tc, n);
    let mut ici = Grid3::zeros(k_n * l_n, tc, n);
    for k in 0..k_n {
        let sp = cfg.power(k).sqrt();
        for l in 0..l_n {
            let h = ch.freq_response(k, l, cfg.coherence.n_c, n);
            for tau in 0..tc {
                let x: Vec<Complex64> = tx
                    .symbol(k, tau)
                    .iter()
                    .zip(&h)
                    .map(|(s, h)| s * h)
                    .collect();
                let conv = if direct {
                    let j = trace.phase_drift_dft(k, l, tau);
                    (0..n)
                        .map(|m| (0..n).map(|q| j[(m + n - q) % n] * x[q]).sum())
                        .collect::<Vec<Complex64>>()
                } else {
                    let mut t = x.clone();
                    idft(&mut t);
                    let ph = trace.phasor(k, l, tau);
                    t.iter_mut().zip(&ph).for_each(|(a, b)| *a *= b);
                    dft(&mut t);
                    t
                };
                let j0 = trace.cpe(k, l, tau);
                let e = eff.row_mut(k * l_n + l, tau);
                for m in 0..n {
                    e[m] = sp * j0 * x[m];
                }
                let ir = ici.row_mut(k * l_n + l, tau);
                for m in 0..n {
                    ir[m] = sp * conv[m] - sp * j0 * x[m];
                }
            }
        }
    }
    let mut noise = draw_time_noise(l_n, tc, n, cfg.sigma2(), rng);
    for l in 0..l_n {
        for tau in 0..tc {
            dft(noise.row_mut(l, tau));
        }
    }
    let y = assemble(l_n, k_n, tc, n, &eff, &ici, &noise);
    RxFrame {
        y,
        parts: RxParts { eff, ici, noise },
    }
}

fn assemble(
    l_n: usize,
    k_n: usize,
    tc: usize,
    n: usize,
    eff: &Grid3,
    ici: &Grid3,
    noise: &Grid3,
) -> Grid3 {
    let mut y = Grid3::zeros(l_n, tc, n);
    for l in 0..l_n {
        for tau in 0..tc {
            let out = y.row_mut(l, tau);
            for k in 0..k_n {
                let (e, i) = (eff.row(k * l_n + l, tau), ici.row(k * l_n + l, tau));
                for m in 0..n {
                    out[m] += e[m] + i[m];
                }
            }
            for (o, w) in out.iter_mut().zip(noise.row(l, tau)) {
                *o += w;
            }
        }
    }
    y
}

/// Model that rotates each subcarrier by its own phase sample and ignores
/// ICI: y_n = Σ_k √p_k e^{jθ_n} h_n s_n + w_n.
pub fn synthesize_mismatched<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    tx: &TxFrame,
    ch: &BlockChannels,
    trace: &PnTrace,
    rng: &mut R,
) -> RxFrame {
    let (l_n, k_n, tc, n) = (cfg.num_aps, cfg.num_ues, cfg.coherence.tau_c, cfg.grid.n);
    let mut eff = Grid3::zeros(k_n * l_n, tc, n);
    for k in 0..k_n {
        let sp = cfg.power(k).sqrt();
        for l in 0..l_n {
            let h = ch.freq_response(k, l, cfg.coherence.n_c, n);
            for tau in 0..tc {
                let ph = trace.phasor(k, l, tau);
                let s = tx.symbol(k, tau);
                let e = eff.row_mut(k * l_n + l, tau);
                for m in 0..n {
                    e[m] = sp * ph[m] * h[m] * s[m];
                }
            }
        }
    }
    let ici = Grid3::zeros(k_n * l_n, tc, n);
    let mut noise = Grid3::zeros(l_n, tc, n);
    noise
        .data
        .iter_mut()
        .for_each(|v| *v = rng::cn(rng, cfg.sigma2()));
    let y = assemble(l_n, k_n, tc, n, &eff, &ici, &noise);
    RxFrame {
        y,
        parts: RxParts { eff, ici, noise },
    }
}

/// Received pilot cells of every AP, in pilot-plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub num_aps: usize,
    pub tau_p: usize,
    pub y: Vec<Complex64>,
}

impl PilotObservation {
    pub fn ap(&self, l: usize) -> &[Complex64] {
        &self.y[l * self.tau_p..(l + 1) * self.tau_p]
    }

    pub fn get(&self, l: usize, a: usize) -> Complex64 {
        self.y[l * self.tau_p + a]
    }
}

pub fn stack_pilots(rx: &RxFrame, plan: &PilotPlan) -> PilotObservation {
    let l_n = rx.y.d0;
    let mut y = Vec::with_capacity(l_n * plan.tau_p());
    for l in 0..l_n {
        for c in &plan.cells {
            y.push(rx.y.get(l, c.symbol, c.subcarrier));
        }
    }
    PilotObservation {
        num_aps: l_n,
        tau_p: plan.tau_p(),
        y,
    }
}

/// Which generative model produces the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalModel {
    /// OFDM with common phase error and inter-carrier interference.
    Exact,
    /// Per-subcarrier phase rotation, no ICI.
    Mismatched,
}

/// Pilot observations only; the ICI at each pilot cell is the O(N) sum
/// Σ_ȷ J_{n-ȷ} h_ȷ s_ȷ. Noise is drawn after the signal in (l, a) order.
pub fn synthesize_pilots<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    plan: &PilotPlan,
    tx: &TxFrame,
    ch: &BlockChannels,
    trace: &PnTrace,
    model: SignalModel,
    rng: &mut R,
) -> PilotObservation {
    let (l_n, tp, n, n_c) = (cfg.num_aps, plan.tau_p(), cfg.grid.n, cfg.coherence.n_c);
    let mut y = vec![Complex64::new(0.0, 0.0); l_n * tp];
    let symbols = plan.pilot_symbols();
    let by_symbol: Vec<Vec<usize>> = symbols.iter().map(|&t| plan.pilots_in_symbol(t)).collect();
    for l in 0..l_n {
        for k in 0..cfg.num_ues {
            let sp = cfg.power(k).sqrt();
            match model {
                SignalModel::Exact => {
                    let h = ch.freq_response(k, l, n_c, n);
                    for (si, &tau) in symbols.iter().enumerate() {
                        let j = trace.phase_drift_dft(k, l, tau);
                        let s = tx.symbol(k, tau);
                        for &a in &by_symbol[si] {
                            let na = plan.cells[a].subcarrier;
                            let mut acc = Complex64::new(0.0, 0.0);
                            for q in 0..n {
                                acc += j[(na + n - q) % n] * h[q] * s[q];
                            }
                            y[l * tp + a] += sp * acc;
                        }
                    }
                }
                SignalModel::Mismatched => {
                    let h0 = ch.get(k, l, 0);
                    for (a, c) in plan.cells.iter().enumerate() {
                        let ph =
                            Complex64::from_polar(1.0, trace.theta(k, l, c.symbol, c.subcarrier));
                        y[l * tp + a] += sp * ph * h0 * tx.get(k, c.symbol, c.subcarrier);
                    }
                }
            }
        }
    }
    let sigma2 = cfg.sigma2();
    y.iter_mut().for_each(|v| *v += rng::cn(rng, sigma2));
    PilotObservation {
        num_aps: l_n,
        tau_p: tp,
        y,
    }
}

/// True effective channel at subcarrier `m` of block 0 for every (k, l, τ),
/// indexed (k·L + l)·τ_c + τ: J_0 h under the exact model, e^{jθ_m} h under
/// the mismatched one.
pub fn effective_channels(
    cfg: &ScenarioConfig,
    ch: &BlockChannels,
    trace: &PnTrace,
    model: SignalModel,
    m: usize,
) -> Vec<Complex64> {
    let (l_n, tc) = (cfg.num_aps, cfg.coherence.tau_c);
    let mut out = Vec::with_capacity(cfg.num_ues * l_n * tc);
    for k in 0..cfg.num_ues {
        for l in 0..l_n {
            let h = ch.get(k, l, m / cfg.coherence.n_c);
            for tau in 0..tc {
                let rot = match model {
                    SignalModel::Exact => trace.cpe(k, l, tau),
                    SignalModel::Mismatched => {
                        Complex64::from_polar(1.0, trace.theta(k, l, tau, m))
                    }
                };
                out.push(rot * h);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_block_channels, LargeScale};
    use crate::config::{BetaModel, Preset};
    use crate::phase_noise::PnConfig;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::desk(Preset::Scenario1);
        c.grid.n = 16;
        c.coherence.n_c = 4;
        c.coherence.tau_c = 3;
        c.coherence.tau_p = 3;
        c.num_aps = 2;
        c.num_ues = 2;
        c.gamma_ap = 4e-16;
        c.gamma_ue = 4e-16;
        c.eval_subcarrier = 1;
        c.beta_model = BetaModel::Uniform { value: 1.0 };
        c.noise_power = Some(0.01);
        c
    }

    fn setup(c: &ScenarioConfig, seed: u64) -> (PilotPlan, TxFrame, BlockChannels, PnTrace) {
        let mut r = rng::stream(seed, 0);
        let plan = c.pilot_plan().unwrap();
        let tx = TxFrame::generate(c, &plan, &mut r);
        let ls = LargeScale::uniform(c.num_ues, c.num_aps, 1.0);
        let ch = gen_block_channels(&ls, c.num_blocks(), &mut r);
        let trace = PnTrace::generate(&PnConfig::from_scenario(c), c.num_ues, c.num_aps, &mut r);
        (plan, tx, ch, trace)
    }

    #[test]
    fn unitary_dft_round_trip() {
        let mut x: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new(i as f64, -(i as f64).sqrt()))
            .collect();
        let orig = x.clone();
        dft(&mut x);
        let e0: f64 = orig.iter().map(|z| z.norm_sqr()).sum();
        let e1: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        assert!((e0 - e1).abs() < 1e-10);
        idft(&mut x);
        assert!(x.iter().zip(&orig).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn time_and_frequency_synthesis_agree() {
        let c = small();
        let (_, tx, ch, trace) = setup(&c, 5);
        for path in [ConvPath::Direct, ConvPath::Fft] {
            let t = synthesize_time(&c, &tx, &ch, &trace, &mut rng::stream(77, 0));
            let f = synthesize_freq(&c, &tx, &ch, &trace, path, &mut rng::stream(77, 0));
            for l in 0..c.num_aps {
                for tau in 0..c.coherence.tau_c {
                    let mut row = t.row(l, tau).to_vec();
                    dft(&mut row);
                    for m in 0..c.grid.n {
                        assert!((row[m] - f.y.get(l, tau, m)).norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn pilot_fast_path_matches_full_frame() {
        let mut c = small();
        c.noise_power = Some(1e-300);
        let (plan, tx, ch, trace) = setup(&c, 6);
        let full = synthesize_freq(&c, &tx, &ch, &trace, ConvPath::Fft, &mut rng::stream(1, 0));
        let fast = synthesize_pilots(
            &c,
            &plan,
            &tx,
            &ch,
            &trace,
            SignalModel::Exact,
            &mut rng::stream(1, 0),
        );
        let stacked = stack_pilots(&full, &plan);
        for (a, b) in stacked.y.iter().zip(&fast.y) {
            assert!((a - b).norm() < 1e-9);
        }
        let mm = synthesize_mismatched(&c, &tx, &ch, &trace, &mut rng::stream(1, 0));
        let fast = synthesize_pilots(
            &c,
            &plan,
            &tx,
            &ch,
            &trace,
            SignalModel::Mismatched,
            &mut rng::stream(1, 0),
        );
        for (a, b) in stack_pilots(&mm, &plan).y.iter().zip(&fast.y) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn no_phase_noise_means_no_ici() {
        let mut c = small();
        c.gamma_ap = 0.0;
        c.gamma_ue = 0.0;
        let (_, tx, ch, trace) = setup(&c, 2);
        let f = synthesize_freq(&c, &tx, &ch, &trace, ConvPath::Auto, &mut rng::stream(3, 0));
        assert!(f.parts.ici.data.iter().all(|z| z.norm() < 1e-12));
        let m = synthesize_mismatched(&c, &tx, &ch, &trace, &mut rng::stream(3, 0));
        assert!(m
            .parts
            .eff
            .data
            .iter()
            .zip(&f.parts.eff.data)
            .all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn effective_channel_uses_cpe() {
        let c = small();
        let (_, _, ch, trace) = setup(&c, 8);
        let e = effective_channels(&c, &ch, &trace, SignalModel::Exact, 1);
        let idx = (c.num_aps + 1) * c.coherence.tau_c + 2;
        assert!((e[idx] - trace.cpe(1, 1, 2) * ch.get(1, 1, 0)).norm() < 1e-14);
    }
}
