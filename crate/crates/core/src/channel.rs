//! Large-scale fading and block-fading small-scale channels.

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::config::{ApLayout, BetaModel, ScenarioConfig};
use crate::{rng, Complex64, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, o: &Position) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }
}

/// Deployment and large-scale gains of one setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScale {
    pub ap_pos: Vec<Position>,
    pub ue_pos: Vec<Position>,
    /// `beta[k][l]`, linear scale.
    pub beta: Vec<Vec<f64>>,
}

impl LargeScale {
    pub fn uniform(num_ues: usize, num_aps: usize, value: f64) -> Self {
        LargeScale {
            ap_pos: vec![Position { x: 0.0, y: 0.0 }; num_aps],
            ue_pos: vec![Position { x: 0.0, y: 0.0 }; num_ues],
            beta: vec![vec![value; num_aps]; num_ues],
        }
    }

    pub fn num_ues(&self) -> usize {
        self.beta.len()
    }

    pub fn num_aps(&self) -> usize {
        self.beta.first().map_or(0, |r| r.len())
    }

    pub fn beta(&self, k: usize, l: usize) -> f64 {
        self.beta[k][l]
    }
}

fn perimeter_point(side: f64, s: f64) -> Position {
    let s = s.rem_euclid(4.0 * side);
    match (s / side) as usize {
        0 => Position { x: s, y: 0.0 },
        1 => Position {
            x: side,
            y: s - side,
        },
        2 => Position {
            x: 3.0 * side - s,
            y: side,
        },
        _ => Position {
            x: 0.0,
            y: 4.0 * side - s,
        },
    }
}

/// Drops APs and UEs and draws the gains. RNG order: AP positions (uniform
/// layout only), UE positions, then shadowing in UE-major order.
pub fn gen_large_scale<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<LargeScale> {
    cfg.validate()?;
    let (num_aps, num_ues) = (cfg.num_aps, cfg.num_ues);
    let (ap_pos, side): (Vec<Position>, f64) = match cfg.ap_layout {
        ApLayout::UniformSquare { side_m } => (
            (0..num_aps)
                .map(|_| Position {
                    x: rng.random::<f64>() * side_m,
                    y: rng.random::<f64>() * side_m,
                })
                .collect(),
            side_m,
        ),
        ApLayout::Perimeter { side_m } => (
            (0..num_aps)
                .map(|l| perimeter_point(side_m, 4.0 * side_m * l as f64 / num_aps as f64))
                .collect(),
            side_m,
        ),
    };
    let centre = side / 2.0;
    let ue_side = cfg.ue_layout.side_m;
    let ue_pos: Vec<Position> = (0..num_ues)
        .map(|_| Position {
            x: centre + (rng.random::<f64>() - 0.5) * ue_side,
            y: centre + (rng.random::<f64>() - 0.5) * ue_side,
        })
        .collect();
    let beta = match cfg.beta_model {
        BetaModel::Uniform { value } => vec![vec![value; num_aps]; num_ues],
        BetaModel::LogDistance {
            ref_gain_db,
            exponent,
            shadow_db,
            min_distance_m,
        } => ue_pos
            .iter()
            .map(|u| {
                ap_pos
                    .iter()
                    .map(|a| {
                        let d = u.distance(a).max(min_distance_m);
                        let db = ref_gain_db - 10.0 * exponent * d.log10()
                            + shadow_db * rng::normal(rng);
                        10f64.powf(db / 10.0)
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(LargeScale {
        ap_pos,
        ue_pos,
        beta,
    })
}

/// i.i.d. CN(0, β_{k,l}) channel per UE, AP and frequency block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockChannels {
    pub num_ues: usize,
    pub num_aps: usize,
    pub num_blocks: usize,
    pub h: Vec<Complex64>,
}

impl BlockChannels {
    pub fn get(&self, k: usize, l: usize, r: usize) -> Complex64 {
        self.h[(k * self.num_aps + l) * self.num_blocks + r]
    }

    pub fn set(&mut self, k: usize, l: usize, r: usize, v: Complex64) {
        self.h[(k * self.num_aps + l) * self.num_blocks + r] = v;
    }

    /// Per-subcarrier response h_n of the (k,l) link.
    pub fn freq_response(&self, k: usize, l: usize, n_c: usize, n: usize) -> Vec<Complex64> {
        (0..n).map(|m| self.get(k, l, m / n_c)).collect()
    }
}

/// Draws in (k, l, r) order.
pub fn gen_block_channels<R: Rng + ?Sized>(
    ls: &LargeScale,
    num_blocks: usize,
    rng: &mut R,
) -> BlockChannels {
    let (num_ues, num_aps) = (ls.num_ues(), ls.num_aps());
    let mut h = Vec::with_capacity(num_ues * num_aps * num_blocks);
    for k in 0..num_ues {
        for l in 0..num_aps {
            for _ in 0..num_blocks {
                h.push(rng::cn(rng, ls.beta(k, l)));
            }
        }
    }
    BlockChannels {
        num_ues,
        num_aps,
        num_blocks,
        h,
    }
}

/// Time-domain taps ȟ whose (non-unitary) DFT is the frequency response:
/// h_n = Σ_q ȟ_q e^{-j2πqn/N}.
pub fn time_domain_taps(h_freq: &[Complex64]) -> Vec<Complex64> {
    let n = h_freq.len();
    let mut x = h_freq.to_vec();
    crate::ofdm::plan_fft(n, true).process(&mut x);
    x.iter_mut().for_each(|v| *v /= n as f64);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Preset, ScenarioConfig};

    #[test]
    fn perimeter_layout_is_equidistant() {
        let mut c = ScenarioConfig::desk(Preset::Scenario2);
        c.num_aps = 8;
        let ls = gen_large_scale(&c, &mut rng::stream(1, 0)).unwrap();
        let want = [
            (0.0, 0.0),
            (250.0, 0.0),
            (500.0, 0.0),
            (500.0, 250.0),
            (500.0, 500.0),
            (250.0, 500.0),
            (0.0, 500.0),
            (0.0, 250.0),
        ];
        for (p, w) in ls.ap_pos.iter().zip(want) {
            assert!(
                (p.x - w.0).abs() < 1e-9 && (p.y - w.1).abs() < 1e-9,
                "{p:?}"
            );
        }
        for u in &ls.ue_pos {
            assert!((50.0..=450.0).contains(&u.x) && (50.0..=450.0).contains(&u.y));
        }
    }

    #[test]
    fn gains_follow_path_loss_without_shadowing() {
        let mut c = ScenarioConfig::desk(Preset::Scenario1);
        c.beta_model = BetaModel::LogDistance {
            ref_gain_db: -30.5,
            exponent: 3.67,
            shadow_db: 0.0,
            min_distance_m: 1.0,
        };
        let ls = gen_large_scale(&c, &mut rng::stream(2, 0)).unwrap();
        let d = ls.ue_pos[1].distance(&ls.ap_pos[3]).max(1.0);
        let db = 10.0 * ls.beta(1, 3).log10();
        assert!((db - (-30.5 - 36.7 * d.log10())).abs() < 1e-9);
    }

    #[test]
    fn minimum_distance_caps_gain() {
        let mut c = ScenarioConfig::desk(Preset::Scenario1);
        c.beta_model = BetaModel::LogDistance {
            ref_gain_db: -30.5,
            exponent: 3.67,
            shadow_db: 0.0,
            min_distance_m: 1e4,
        };
        let ls = gen_large_scale(&c, &mut rng::stream(2, 0)).unwrap();
        let want = 10f64.powf((-30.5 - 36.7 * 4.0) / 10.0);
        assert!(ls
            .beta
            .iter()
            .flatten()
            .all(|&b| (b - want).abs() < want * 1e-12));
    }

    #[test]
    fn block_channel_variance_matches_gain() {
        let ls = LargeScale::uniform(1, 1, 2.5);
        let ch = gen_block_channels(&ls, 20000, &mut rng::stream(9, 0));
        let p: f64 = ch.h.iter().map(|z| z.norm_sqr()).sum::<f64>() / 20000.0;
        assert!((p - 2.5).abs() < 0.1);
    }

    #[test]
    fn flat_block_has_single_tap() {
        let h = vec![Complex64::new(0.3, -1.2); 8];
        let t = time_domain_taps(&h);
        assert!((t[0] - h[0]).norm() < 1e-14);
        assert!(t[1..].iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn taps_energy_is_mean_subcarrier_energy() {
        let ls = LargeScale::uniform(1, 1, 1.0);
        let ch = gen_block_channels(&ls, 6, &mut rng::stream(4, 0));
        let h = ch.freq_response(0, 0, 4, 24);
        let t = time_domain_taps(&h);
        let et: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        let ef: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / 24.0;
        assert!((et - ef).abs() < 1e-12);
    }
}
