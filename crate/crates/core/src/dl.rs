//! Per-AP neural channel estimator: pilot vector in, K channel estimates out.
//!
//! Architecture: complex-to-real split, Dense(M1, ReLU), Dense(M2, ReLU),
//! Dense(2K, linear), plus a fixed skip connection carrying the despread
//! pilots (s_kᴴ y)/τ_p of every UE, then real-to-complex merge.
//!
//! Inputs are normalised per AP by a = sqrt(Σ_k p_k β_{k,l} + σ²) and the
//! network predicts √p_k h_k / a, so one network serves APs with very
//! different path losses.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{gen_block_channels, gen_large_scale};
use crate::config::{PilotPlan, ScenarioConfig};
use crate::estimators::{ChannelEstimate, EstContext};
use crate::ofdm::{synthesize_pilots, PilotObservation, SignalModel, TxFrame};
use crate::phase_noise::{PnConfig, PnTrace};
use crate::{Complex64, Error, Result};

type Mat = DMatrix<f64>;
type Vector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlHyperparams {
    pub m1: usize,
    pub m2: usize,
    pub batch: usize,
    pub n_train: usize,
    pub lr0: f64,
    pub lr_drop: f64,
    pub drop_every: usize,
    pub epochs: usize,
    /// Stop when the epoch loss improved by less than this fraction over
    /// `plateau_window` epochs.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub seed: u64,
}

impl Default for DlHyperparams {
    fn default() -> Self {
        DlHyperparams {
            m1: 100,
            m2: 100,
            batch: 128,
            n_train: 3000,
            lr0: 0.01,
            lr_drop: 0.2,
            drop_every: 50,
            epochs: 200,
            plateau_tol: 1e-3,
            plateau_window: 10,
            seed: 7,
        }
    }
}

impl DlHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0
            || self.m2 == 0
            || self.batch == 0
            || self.n_train == 0
            || self.drop_every == 0
            || self.epochs == 0
        {
            return Err(Error::config("network hyper-parameters must be positive"));
        }
        if !(self.lr0 > 0.0 && self.lr_drop > 0.0) {
            return Err(Error::config(
                "learning rate and drop factor must be positive",
            ));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.n_train.div_ceil(self.batch)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_drop.powi((epoch / self.drop_every) as i32)
    }
}

/// Trainable weights. Weight matrices are (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub w1: Mat,
    pub b1: Vector,
    pub w2: Mat,
    pub b2: Vector,
    pub w3: Mat,
    pub b3: Vector,
}

impl Layers {
    pub fn zeros(d_in: usize, m1: usize, m2: usize, d_out: usize) -> Self {
        Layers {
            w1: Mat::zeros(m1, d_in),
            b1: Vector::zeros(m1),
            w2: Mat::zeros(m2, m1),
            b2: Vector::zeros(m2),
            w3: Mat::zeros(d_out, m2),
            b3: Vector::zeros(d_out),
        }
    }

    /// Uniform(-1/√fan_in, 1/√fan_in) weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        d_in: usize,
        m1: usize,
        m2: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let mut l = Self::zeros(d_in, m1, m2, d_out);
        for w in [&mut l.w1, &mut l.w2, &mut l.w3] {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
        }
        l
    }

    fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.w3.as_slice(),
            self.b3.as_slice(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w3.as_mut_slice(),
            self.b3.as_mut_slice(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let mut off = 0;
        for s in self.slices_mut() {
            let n = s.len();
            s.copy_from_slice(&v[off..off + n]);
            off += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlNetwork {
    pub tau_p: usize,
    pub num_ues: usize,
    pub layers: Layers,
    /// Fixed (2K × 2τ_p) despreading projection.
    pub skip: Mat,
    /// Hash of the scenario class the network was trained for.
    pub class_hash: String,
}

struct Cache {
    z1: Mat,
    h1: Mat,
    z2: Mat,
    h2: Mat,
}

/// Real layout: [Re(y_0..), Im(y_0..)].
fn c2r(y: &[Complex64]) -> Vec<f64> {
    y.iter()
        .map(|z| z.re)
        .chain(y.iter().map(|z| z.im))
        .collect()
}

fn add_row(m: &mut Mat, b: &Vector) {
    for mut r in m.row_iter_mut() {
        r += b.transpose();
    }
}

/// Matched-filter skip for the pilot plan: rows 0..K are Re(s_kᴴy)/τ_p,
/// rows K..2K are Im(s_kᴴy)/τ_p.
pub fn despread_projection(plan: &PilotPlan) -> Mat {
    let (tp, k_n) = (plan.tau_p(), plan.assignment.len());
    let mut p = Mat::zeros(2 * k_n, 2 * tp);
    let inv = 1.0 / tp as f64;
    for k in 0..k_n {
        let s = plan.sequence(k);
        for a in 0..tp {
            p[(k, a)] = s[a].re * inv;
            p[(k, tp + a)] = s[a].im * inv;
            p[(k_n + k, a)] = -s[a].im * inv;
            p[(k_n + k, tp + a)] = s[a].re * inv;
        }
    }
    p
}

impl DlNetwork {
    pub fn new(plan: &PilotPlan, layers: Layers, class_hash: String) -> Result<Self> {
        let (tp, k_n) = (plan.tau_p(), plan.assignment.len());
        let ok = layers.w1.ncols() == 2 * tp
            && layers.w1.nrows() == layers.b1.len()
            && layers.w2.ncols() == layers.w1.nrows()
            && layers.w2.nrows() == layers.b2.len()
            && layers.w3.ncols() == layers.w2.nrows()
            && layers.w3.nrows() == 2 * k_n
            && layers.b3.len() == 2 * k_n;
        if !ok {
            return Err(Error::config("network shapes do not match the pilot plan"));
        }
        Ok(DlNetwork {
            tau_p: tp,
            num_ues: k_n,
            layers,
            skip: despread_projection(plan),
            class_hash,
        })
    }

    /// Hash of the fields that shape the training distribution (everything
    /// but the AP count, trial counts and seed).
    pub fn class_hash(cfg: &ScenarioConfig) -> String {
        let mut c = cfg.clone();
        c.num_aps = 0;
        c.trials = 0;
        c.realizations = 0;
        c.seed = 0;
        let json = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn forward_cached(&self, x: &Mat) -> (Mat, Cache) {
        let l = &self.layers;
        let mut z1 = x * l.w1.transpose();
        add_row(&mut z1, &l.b1);
        let h1 = z1.map(|v| v.max(0.0));
        let mut z2 = &h1 * l.w2.transpose();
        add_row(&mut z2, &l.b2);
        let h2 = z2.map(|v| v.max(0.0));
        let mut out = &h2 * l.w3.transpose();
        add_row(&mut out, &l.b3);
        out += x * self.skip.transpose();
        (out, Cache { z1, h1, z2, h2 })
    }

    /// Batch forward pass on normalised real inputs (B × 2τ_p) → (B × 2K).
    pub fn forward(&self, x: &Mat) -> Mat {
        self.forward_cached(x).0
    }

    /// Single pilot vector → K complex outputs (normalised units).
    pub fn forward_complex(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.tau_p {
            return Err(Error::config(format!(
                "expected {} pilots, got {}",
                self.tau_p,
                y.len()
            )));
        }
        let x = Mat::from_row_slice(1, 2 * self.tau_p, &c2r(y));
        let o = self.forward(&x);
        Ok((0..self.num_ues)
            .map(|k| Complex64::new(o[(0, k)], o[(0, self.num_ues + k)]))
            .collect())
    }

    /// Mean over samples and UEs of the complex squared error.
    pub fn loss(&self, x: &Mat, t: &Mat) -> f64 {
        let o = self.forward(x);
        (o - t).norm_squared() / (x.nrows() * self.num_ues) as f64
    }

    /// Loss and its gradient with respect to the flattened layer parameters.
    pub fn loss_and_grad(&self, x: &Mat, t: &Mat) -> (f64, Layers) {
        let l = &self.layers;
        let (o, c) = self.forward_cached(x);
        let diff = o - t;
        let norm = (x.nrows() * self.num_ues) as f64;
        let loss = diff.norm_squared() / norm;
        let d_out = diff * (2.0 / norm);
        let mut g = Layers::zeros(l.w1.ncols(), l.w1.nrows(), l.w2.nrows(), l.w3.nrows());
        g.w3 = d_out.transpose() * &c.h2;
        g.b3 = column_sums(&d_out);
        let mut d2 = &d_out * &l.w3;
        d2.zip_apply(&c.z2, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        g.w2 = d2.transpose() * &c.h1;
        g.b2 = column_sums(&d2);
        let mut d1 = &d2 * &l.w2;
        d1.zip_apply(&c.z1, |d, z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        g.w1 = d1.transpose() * x;
        g.b1 = column_sums(&d1);
        (loss, g)
    }

    /// Per-AP normalisation a = sqrt(Σ_k p_k β_{k,l} + σ²).
    pub fn input_scale(cfg: &ScenarioConfig, beta_col: &[f64]) -> f64 {
        (beta_col
            .iter()
            .enumerate()
            .map(|(k, b)| cfg.power(k) * b)
            .sum::<f64>()
            + cfg.sigma2())
        .sqrt()
    }

    /// Channel estimates for every AP of the setup.
    pub fn estimate(&self, ctx: &EstContext, y: &PilotObservation) -> Result<ChannelEstimate> {
        let (k_n, l_n) = (ctx.cfg.num_ues, ctx.cfg.num_aps);
        if k_n != self.num_ues || y.tau_p != self.tau_p {
            return Err(Error::config(
                "network was trained for a different pilot plan or UE count",
            ));
        }
        let mut x = Mat::zeros(l_n, 2 * self.tau_p);
        let mut scale = vec![0.0; l_n];
        for l in 0..l_n {
            let col: Vec<f64> = (0..k_n).map(|k| ctx.ls.beta(k, l)).collect();
            scale[l] = Self::input_scale(ctx.cfg, &col);
            let v = c2r(y.ap(l));
            for (j, val) in v.iter().enumerate() {
                x[(l, j)] = val / scale[l];
            }
        }
        let o = self.forward(&x);
        let mut h = vec![Complex64::new(0.0, 0.0); k_n * l_n];
        for k in 0..k_n {
            for l in 0..l_n {
                h[k * l_n + l] = Complex64::new(o[(l, k)], o[(l, k_n + k)])
                    * (scale[l] / ctx.cfg.power(k).sqrt());
            }
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical("non-finite network output"));
        }
        let err = (0..k_n * l_n)
            .map(|i| ctx.ls.beta(i / l_n, i % l_n))
            .collect();
        Ok(ChannelEstimate {
            num_ues: k_n,
            num_aps: l_n,
            h,
            eps: vec![0.0; k_n * l_n],
            err,
        })
    }

    const MAGIC: &'static [u8; 8] = b"CFPNDL\x00\x01";

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(Self::MAGIC)?;
        let l = &self.layers;
        for d in [self.tau_p, self.num_ues, l.w1.nrows(), l.w2.nrows()] {
            f.write_all(&(d as u32).to_le_bytes())?;
        }
        let h = self.class_hash.as_bytes();
        f.write_all(&(h.len() as u32).to_le_bytes())?;
        f.write_all(h)?;
        for s in l.slices() {
            for v in s {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        for v in self.skip.as_slice() {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = || Error::config(format!("{} is not a valid network file", path.display()));
        if buf.len() < 28 || &buf[..8] != Self::MAGIC {
            return Err(bad());
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let (tp, k_n, m1, m2) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let hl = u32_at(24);
        let mut off = 28;
        if buf.len() < off + hl {
            return Err(bad());
        }
        let class_hash = String::from_utf8(buf[off..off + hl].to_vec()).map_err(|_| bad())?;
        off += hl;
        let mut layers = Layers::zeros(2 * tp, m1, m2, 2 * k_n);
        let n = layers.num_params() + 4 * k_n * tp;
        if buf.len() != off + 8 * n {
            return Err(bad());
        }
        let vals: Vec<f64> = buf[off..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad());
        }
        let np = layers.num_params();
        layers.set_flat(&vals[..np]);
        let skip = Mat::from_column_slice(2 * k_n, 2 * tp, &vals[np..]);
        Ok(DlNetwork {
            tau_p: tp,
            num_ues: k_n,
            layers,
            skip,
            class_hash,
        })
    }
}

fn column_sums(m: &Mat) -> Vector {
    Vector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// Training pairs in normalised units: `x` is (n × 2τ_p), `t` is (n × 2K).
/// The raw block channels are kept for inspection.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    pub t: Mat,
    pub h: Vec<Vec<Complex64>>,
    pub beta: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self, idx: &[usize]) -> (Mat, Mat) {
        (self.x.select_rows(idx), self.t.select_rows(idx))
    }
}

/// Simulated pilot observations under the exact model. Each realization is
/// a fresh setup (deployment, channels, phase noise, data, noise) and
/// contributes one sample per AP until `n` samples are collected.
pub fn gen_training_set<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    cfg.validate()?;
    let plan = cfg.pilot_plan()?;
    let pn = PnConfig::from_scenario(cfg);
    let (tp, k_n, l_n) = (plan.tau_p(), cfg.num_ues, cfg.num_aps);
    let mut x = Mat::zeros(n, 2 * tp);
    let mut t = Mat::zeros(n, 2 * k_n);
    let mut hs = Vec::with_capacity(n);
    let mut betas = Vec::with_capacity(n);
    let mut row = 0;
    while row < n {
        let ls = gen_large_scale(cfg, rng)?;
        let ch = gen_block_channels(&ls, cfg.num_blocks(), rng);
        let trace = PnTrace::generate(&pn, k_n, l_n, rng);
        let tx = TxFrame::generate(cfg, &plan, rng);
        let y = synthesize_pilots(cfg, &plan, &tx, &ch, &trace, SignalModel::Exact, rng);
        for l in 0..l_n {
            if row == n {
                break;
            }
            let col: Vec<f64> = (0..k_n).map(|k| ls.beta(k, l)).collect();
            let a = DlNetwork::input_scale(cfg, &col);
            for (j, v) in c2r(y.ap(l)).iter().enumerate() {
                x[(row, j)] = v / a;
            }
            let h: Vec<Complex64> = (0..k_n).map(|k| ch.get(k, l, 0)).collect();
            for k in 0..k_n {
                let z = h[k] * (cfg.power(k).sqrt() / a);
                t[(row, k)] = z.re;
                t[(row, k_n + k)] = z.im;
            }
            hs.push(h);
            betas.push(col);
            row += 1;
        }
    }
    Ok(Dataset {
        x,
        t,
        h: hs,
        beta: betas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a fresh network on the dataset.
pub fn train<R: Rng + ?Sized>(
    plan: &PilotPlan,
    data: &Dataset,
    hyper: &DlHyperparams,
    class_hash: String,
    rng: &mut R,
) -> Result<(DlNetwork, TrainReport)> {
    hyper.validate()?;
    let layers = Layers::init(
        2 * plan.tau_p(),
        hyper.m1,
        hyper.m2,
        2 * plan.assignment.len(),
        rng,
    );
    let net = DlNetwork::new(plan, layers, class_hash)?;
    fine_tune(net, data, hyper, hyper.epochs, rng)
}

/// Continues training an existing network for up to `epochs` epochs.
pub fn fine_tune<R: Rng + ?Sized>(
    mut net: DlNetwork,
    data: &Dataset,
    hyper: &DlHyperparams,
    epochs: usize,
    rng: &mut R,
) -> Result<(DlNetwork, TrainReport)> {
    hyper.validate()?;
    if data.is_empty() {
        return Err(Error::config("empty training set"));
    }
    if data.x.ncols() != 2 * net.tau_p || data.t.ncols() != 2 * net.num_ues {
        return Err(Error::config("training set does not match the network"));
    }
    let mut theta = net.layers.flat();
    let mut opt = Adam::new(theta.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport {
        epoch_loss: Vec::new(),
        steps: 0,
    };
    for epoch in 0..epochs {
        let lr = hyper.learning_rate(epoch);
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let (x, t) = data.rows(chunk);
            let (loss, g) = net.loss_and_grad(&x, &t);
            if !loss.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch}, step {} (lr {lr})",
                    report.steps
                )));
            }
            total += loss * chunk.len() as f64;
            opt.step(&mut theta, &g.flat(), lr);
            net.layers.set_flat(&theta);
            report.steps += 1;
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6e}");
        report.epoch_loss.push(mean);
        let w = hyper.plateau_window;
        if report.epoch_loss.len() > w {
            let before = report.epoch_loss[report.epoch_loss.len() - 1 - w];
            if before - mean < hyper.plateau_tol * before {
                break;
            }
        }
    }
    Ok((net, report))
}
