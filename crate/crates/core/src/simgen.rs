//! Simulation scenarios: labeled curve sets drawn from Gaussian-process
//! models with trend, shift, sinusoid, and localized-bump mean structures.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::linspace;
use crate::enrich::{CurveSet, EnrichError};
use crate::linalg::{cholesky_lower, cholesky_with_jitter};
use crate::models::stream_rng;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("unknown scenario id {0}; expected 1..=6")]
    InvalidScenario(u8),
    #[error("kernel matrix is not positive definite even with jitter {0}")]
    KernelNotPD(f64),
    #[error("time grid must be strictly increasing")]
    InvalidGrid,
    #[error("kernel parameters must be positive: alpha={alpha}, beta={beta}, nu={nu}")]
    InvalidKernel { alpha: f64, beta: f64, nu: f64 },
    #[error(transparent)]
    Curves(#[from] EnrichError),
}

/// Exponential-family covariance gamma(s,t) = alpha * exp(-beta |t-s|^nu).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpKernelParams {
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
}

impl GpKernelParams {
    pub fn new(alpha: f64, beta: f64, nu: f64) -> Result<Self, SimError> {
        if !(alpha > 0.0 && beta > 0.0 && nu > 0.0) {
            return Err(SimError::InvalidKernel { alpha, beta, nu });
        }
        Ok(Self { alpha, beta, nu })
    }

    pub fn value(&self, s: f64, t: f64) -> f64 {
        self.alpha * (-self.beta * (t - s).abs().powf(self.nu)).exp()
    }
}

/// Dense covariance matrix of the kernel on a grid.
pub fn kernel_matrix(time_grid: &[f64], kernel: &GpKernelParams) -> Array2<f64> {
    let n = time_grid.len();
    let mut sigma = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = kernel.value(time_grid[i], time_grid[j]);
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    sigma
}

/// Cholesky factor of the kernel matrix with escalating diagonal jitter
/// (1e-10 to 1e-6 in decade steps).
pub fn kernel_cholesky(
    time_grid: &[f64],
    kernel: &GpKernelParams,
) -> Result<Array2<f64>, SimError> {
    if time_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::InvalidGrid);
    }
    let sigma = kernel_matrix(time_grid, kernel);
    // cholesky_with_jitter tries the plain factorization first, matching
    // the "jitter only on failure" contract.
    if let Some(l) = cholesky_lower(&sigma) {
        return Ok(l);
    }
    cholesky_with_jitter(&sigma, 1e-10, 1e-6)
        .map(|(l, _)| l)
        .ok_or(SimError::KernelNotPD(1e-6))
}

/// One zero-mean GP draw e(t) ~ N(0, Sigma) on the grid.
pub fn gp_sample(
    time_grid: &[f64],
    kernel: &GpKernelParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SimError> {
    let l = kernel_cholesky(time_grid, kernel)?;
    Ok(gp_sample_with_factor(&l, rng))
}

/// GP draw given a precomputed Cholesky factor.
pub fn gp_sample_with_factor(l: &Array2<f64>, rng: &mut impl Rng) -> Vec<f64> {
    let n = l.nrows();
    let z: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    l.dot(&z).to_vec()
}

/// Group mean-structure models of the six scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroupModel {
    /// X(t) = mu t + e(t)
    Trend { mu: f64 },
    /// X(t) = mu t + q k 1{T <= t} + e(t), k = +-1 equiprobable,
    /// T ~ U[t_lo, t_hi]
    Shift {
        mu: f64,
        q: f64,
        t_lo: f64,
        t_hi: f64,
    },
    /// X(t) = a1 sin(pi t) + a2 cos(pi t) + e(t)
    Sinusoid { a1: f64, a2: f64 },
    /// X(t) = (b1 sin + b2 cos)(1-u) + (c1 sin + c2 cos) u + e(t),
    /// u ~ Bernoulli(mix_prob), b1 ~ U[b1_lo, b1_hi], c1 ~ U[c1_lo, c1_hi]
    SinusoidMix {
        b1_lo: f64,
        b1_hi: f64,
        b2: f64,
        c1_lo: f64,
        c1_hi: f64,
        c2: f64,
        mix_prob: f64,
    },
    /// X(t) = mu t + (-1)^u q + (-1)^(1-u) (pi r)^(-1/2) exp(-z (t-v)^w) + e(t),
    /// u ~ Bernoulli(flip_prob), v ~ U[v_lo, v_hi]
    Bump {
        mu: f64,
        q: f64,
        r: f64,
        z: f64,
        w: f64,
        v_lo: f64,
        v_hi: f64,
        flip_prob: f64,
    },
}

/// Peak height of the localized bump component.
pub fn bump_amplitude(r: f64) -> f64 {
    1.0 / (std::f64::consts::PI * r).sqrt()
}

fn signed_pow(base: f64, w: f64) -> f64 {
    if w.fract() == 0.0 {
        base.powi(w as i32)
    } else {
        base.powf(w)
    }
}

/// A group model with its per-curve randomness resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DrawnModel {
    Trend {
        mu: f64,
    },
    Shift {
        mu: f64,
        q: f64,
        sign: f64,
        changepoint: f64,
    },
    Sinusoid {
        a1: f64,
        a2: f64,
    },
    SinusoidMix {
        b1: f64,
        b2: f64,
        c1: f64,
        c2: f64,
        mixed: bool,
    },
    Bump {
        mu: f64,
        q: f64,
        r: f64,
        z: f64,
        w: f64,
        v: f64,
        flipped: bool,
    },
}

impl DrawnModel {
    /// Noise-free mean value at time t.
    pub fn mean(&self, t: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            DrawnModel::Trend { mu } => mu * t,
            DrawnModel::Shift {
                mu,
                q,
                sign,
                changepoint,
            } => mu * t + if t >= changepoint { q * sign } else { 0.0 },
            DrawnModel::Sinusoid { a1, a2 } => a1 * (PI * t).sin() + a2 * (PI * t).cos(),
            DrawnModel::SinusoidMix {
                b1,
                b2,
                c1,
                c2,
                mixed,
            } => {
                if mixed {
                    c1 * (PI * t).sin() + c2 * (PI * t).cos()
                } else {
                    b1 * (PI * t).sin() + b2 * (PI * t).cos()
                }
            }
            DrawnModel::Bump {
                mu,
                q,
                r,
                z,
                w,
                v,
                flipped,
            } => {
                let bump = bump_amplitude(r) * (-z * signed_pow(t - v, w)).exp();
                let (shift_sign, bump_sign) = if flipped { (-1.0, 1.0) } else { (1.0, -1.0) };
                mu * t + shift_sign * q + bump_sign * bump
            }
        }
    }
}

impl GroupModel {
    /// Resolves per-curve randomness. Draw order is fixed so that curve
    /// streams stay reproducible.
    pub fn draw(&self, rng: &mut impl Rng) -> DrawnModel {
        match *self {
            GroupModel::Trend { mu } => DrawnModel::Trend { mu },
            GroupModel::Shift { mu, q, t_lo, t_hi } => {
                let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                let changepoint = if t_hi > t_lo {
                    rng.random_range(t_lo..t_hi)
                } else {
                    t_lo
                };
                DrawnModel::Shift {
                    mu,
                    q,
                    sign,
                    changepoint,
                }
            }
            GroupModel::Sinusoid { a1, a2 } => DrawnModel::Sinusoid { a1, a2 },
            GroupModel::SinusoidMix {
                b1_lo,
                b1_hi,
                b2,
                c1_lo,
                c1_hi,
                c2,
                mix_prob,
            } => {
                let mixed = rng.random::<f64>() < mix_prob;
                let b1 = if b1_hi > b1_lo {
                    rng.random_range(b1_lo..b1_hi)
                } else {
                    b1_lo
                };
                let c1 = if c1_hi > c1_lo {
                    rng.random_range(c1_lo..c1_hi)
                } else {
                    c1_lo
                };
                DrawnModel::SinusoidMix {
                    b1,
                    b2,
                    c1,
                    c2,
                    mixed,
                }
            }
            GroupModel::Bump {
                mu,
                q,
                r,
                z,
                w,
                v_lo,
                v_hi,
                flip_prob,
            } => {
                let flipped = rng.random::<f64>() < flip_prob;
                let v = if v_hi > v_lo {
                    rng.random_range(v_lo..v_hi)
                } else {
                    v_lo
                };
                DrawnModel::Bump {
                    mu,
                    q,
                    r,
                    z,
                    w,
                    v,
                    flipped,
                }
            }
        }
    }
}

/// One class of a scenario: a mean model plus its GP noise kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub model: GroupModel,
    pub kernel: GpKernelParams,
}

/// Full description of one simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: u8,
    pub groups: Vec<GroupSpec>,
    /// Curves per class in each of the train and test sets (the generated
    /// pool is twice this, split half/half).
    pub curves_per_class: usize,
    pub time_points: usize,
    pub seed: u64,
    /// Setting this false drops the GP noise term (diagnostics only).
    pub noise: bool,
}

const STD_KERNEL: GpKernelParams = GpKernelParams {
    alpha: 1.0,
    beta: 1.0,
    nu: 1.0,
};

/// The published parameterization of scenarios 1..6.
pub fn standard_groups(scenario_id: u8) -> Result<Vec<GroupSpec>, SimError> {
    let bump_flip = 0.1;
    let groups = match scenario_id {
        1 => vec![
            GroupSpec {
                model: GroupModel::Trend { mu: 8.0 },
                kernel: STD_KERNEL,
            },
            GroupSpec {
                model: GroupModel::Shift {
                    mu: 8.0,
                    q: 3.0,
                    t_lo: 0.5,
                    t_hi: 0.9,
                },
                kernel: STD_KERNEL,
            },
        ],
        2 => vec![
            GroupSpec {
                model: GroupModel::Sinusoid { a1: 1.0, a2: 8.0 },
                kernel: STD_KERNEL,
            },
            GroupSpec {
                model: GroupModel::SinusoidMix {
                    b1_lo: 1.5,
                    b1_hi: 2.5,
                    b2: 8.0,
                    c1_lo: 5.0,
                    c1_hi: 10.5,
                    c2: 8.0,
                    mix_prob: 0.6,
                },
                kernel: STD_KERNEL,
            },
        ],
        3 => vec![
            GroupSpec {
                model: GroupModel::Trend { mu: 8.0 },
                kernel: STD_KERNEL,
            },
            GroupSpec {
                model: GroupModel::Bump {
                    mu: 8.0,
                    q: 1.8,
                    r: 0.02,
                    z: 90.0,
                    w: 2.0,
                    v_lo: 0.45,
                    v_hi: 0.55,
                    flip_prob: bump_flip,
                },
                kernel: STD_KERNEL,
            },
        ],
        4 => {
            let k_a = GpKernelParams {
                alpha: 1.3,
                beta: 1.2,
                nu: 1.0,
            };
            let k_b = GpKernelParams {
                alpha: 0.8,
                beta: 0.8,
                nu: 1.0,
            };
            vec![
                GroupSpec {
                    model: GroupModel::Trend { mu: 0.0 },
                    kernel: k_a,
                },
                GroupSpec {
                    model: GroupModel::Bump {
                        mu: 0.0,
                        q: 1.0,
                        r: 0.02,
                        z: 90.0,
                        w: 2.0,
                        v_lo: 0.45,
                        v_hi: 0.45,
                        flip_prob: bump_flip,
                    },
                    kernel: k_a,
                },
                GroupSpec {
                    model: GroupModel::Trend { mu: -2.0 },
                    kernel: k_b,
                },
                GroupSpec {
                    model: GroupModel::Bump {
                        mu: -2.0,
                        q: 1.8,
                        r: 0.01,
                        z: 90.0,
                        w: 5.0,
                        v_lo: 0.15,
                        v_hi: 0.15,
                        flip_prob: bump_flip,
                    },
                    kernel: k_b,
                },
            ]
        }
        5 => vec![
            GroupSpec {
                model: GroupModel::Trend { mu: 0.0 },
                kernel: STD_KERNEL,
            },
            GroupSpec {
                model: GroupModel::Bump {
                    mu: 0.0,
                    q: 1.8,
                    r: 0.02,
                    z: 90.0,
                    w: 2.0,
                    v_lo: 0.45,
                    v_hi: 0.45,
                    flip_prob: bump_flip,
                },
                kernel: STD_KERNEL,
            },
            GroupSpec {
                model: GroupModel::Bump {
                    mu: 1.0,
                    q: 0.8,
                    r: 0.02,
                    z: 90.0,
                    w: 2.0,
                    v_lo: 0.65,
                    v_hi: 0.65,
                    flip_prob: bump_flip,
                },
                kernel: STD_KERNEL,
            },
        ],
        6 => {
            let k = GpKernelParams {
                alpha: 2.0,
                beta: 1.0,
                nu: 0.5,
            };
            vec![
                GroupSpec {
                    model: GroupModel::Trend { mu: 2.0 },
                    kernel: k,
                },
                GroupSpec {
                    model: GroupModel::Shift {
                        mu: 2.0,
                        q: 3.0,
                        t_lo: 0.6,
                        t_hi: 0.75,
                    },
                    kernel: k,
                },
                GroupSpec {
                    model: GroupModel::Shift {
                        mu: 2.0,
                        q: 3.0,
                        t_lo: 0.8,
                        t_hi: 0.9,
                    },
                    kernel: k,
                },
            ]
        }
        other => return Err(SimError::InvalidScenario(other)),
    };
    Ok(groups)
}

impl ScenarioSpec {
    /// Scenario with the published group models, 50 time points on [0,1],
    /// and 50 curves per class in each of train and test.
    pub fn standard(scenario_id: u8, seed: u64) -> Result<Self, SimError> {
        Ok(Self {
            scenario_id,
            groups: standard_groups(scenario_id)?,
            curves_per_class: 50,
            time_points: 50,
            seed,
            noise: true,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Per-curve provenance: which class and split it belongs to, and the
/// resolved mean model.
#[derive(Debug, Clone)]
pub struct CurveDraw {
    pub class: usize,
    pub split: Split,
    pub row: usize,
    pub model: DrawnModel,
}

pub struct ScenarioData {
    pub train: CurveSet,
    pub test: CurveSet,
    pub draws: Vec<CurveDraw>,
}

/// Generates the train/test curve sets of a scenario. Each class pool is
/// drawn per-curve from seed-derived streams and split half/half into
/// disjoint train and test sets, keeping classes balanced.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<ScenarioData, SimError> {
    if spec.groups.is_empty() {
        return Err(SimError::InvalidScenario(spec.scenario_id));
    }
    let grid = linspace(0.0, 1.0, spec.time_points);
    let cpc = spec.curves_per_class;
    let n_per_set = cpc * spec.groups.len();
    let mut train = Array2::<f64>::zeros((n_per_set, spec.time_points));
    let mut test = Array2::<f64>::zeros((n_per_set, spec.time_points));
    let mut train_labels = vec![0usize; n_per_set];
    let mut test_labels = vec![0usize; n_per_set];
    let mut draws = Vec::with_capacity(2 * n_per_set);

    for (class, group) in spec.groups.iter().enumerate() {
        let chol = kernel_cholesky(&grid, &group.kernel)?;
        for j in 0..2 * cpc {
            let curve_index = (class * 2 * cpc + j) as u64;
            let mut rng = stream_rng(spec.seed, curve_index + 1);
            let drawn = group.model.draw(&mut rng);
            let noise = if spec.noise {
                gp_sample_with_factor(&chol, &mut rng)
            } else {
                vec![0.0; spec.time_points]
            };
            let (target, labels, row, split) = if j < cpc {
                (&mut train, &mut train_labels, class * cpc + j, Split::Train)
            } else {
                (
                    &mut test,
                    &mut test_labels,
                    class * cpc + (j - cpc),
                    Split::Test,
                )
            };
            for (col, (&t, &e)) in grid.iter().zip(noise.iter()).enumerate() {
                target[[row, col]] = drawn.mean(t) + e;
            }
            labels[row] = class;
            draws.push(CurveDraw {
                class,
                split,
                row,
                model: drawn,
            });
        }
    }

    let name = format!("scenario{}", spec.scenario_id);
    Ok(ScenarioData {
        train: CurveSet::new(grid.clone(), train, train_labels, format!("{name}-train"))?,
        test: CurveSet::new(grid, test, test_labels, format!("{name}-test"))?,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_diagonal_is_alpha() {
        let grid = linspace(0.0, 1.0, 20);
        let k = GpKernelParams::new(1.7, 2.0, 1.0).unwrap();
        let sigma = kernel_matrix(&grid, &k);
        for i in 0..20 {
            assert_eq!(sigma[[i, i]], 1.7);
        }
        // symmetry
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(sigma[[i, j]], sigma[[j, i]]);
            }
        }
    }

    #[test]
    fn gp_moments_match_kernel() {
        let grid = linspace(0.0, 1.0, 50);
        let k = STD_KERNEL;
        let l = kernel_cholesky(&grid, &k).unwrap();
        let n_draws = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut draws = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            draws.push(gp_sample_with_factor(&l, &mut rng));
        }
        // Pointwise variance close to alpha = 1.
        for j in (0..50).step_by(7) {
            let mean: f64 = draws.iter().map(|d| d[j]).sum::<f64>() / n_draws as f64;
            let var: f64 = draws
                .iter()
                .map(|d| (d[j] - mean) * (d[j] - mean))
                .sum::<f64>()
                / n_draws as f64;
            assert!((0.9..=1.1).contains(&var), "var at {j}: {var}");
        }
        // Correlation close to exp(-|t-s|) for a few pairs.
        for &(a, b) in &[(0usize, 5usize), (3, 20), (10, 12), (25, 49), (0, 49)] {
            let ma: f64 = draws.iter().map(|d| d[a]).sum::<f64>() / n_draws as f64;
            let mb: f64 = draws.iter().map(|d| d[b]).sum::<f64>() / n_draws as f64;
            let mut cov = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for d in &draws {
                cov += (d[a] - ma) * (d[b] - mb);
                va += (d[a] - ma) * (d[a] - ma);
                vb += (d[b] - mb) * (d[b] - mb);
            }
            let corr = cov / (va.sqrt() * vb.sqrt());
            let expected = (-(grid[b] - grid[a]).abs()).exp();
            assert!(
                (corr - expected).abs() <= 0.05,
                "corr({a},{b}) = {corr}, expected {expected}"
            );
        }
    }

    #[test]
    fn gaussian_kernel_needs_and_gets_jitter() {
        // nu = 2 makes the covariance numerically rank-deficient at T = 50.
        let grid = linspace(0.0, 1.0, 50);
        let k = GpKernelParams::new(1.0, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = gp_sample(&grid, &k, &mut rng).unwrap();
        assert!(draw.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn scenario_sizes_match_published_table() {
        for (id, train_n, classes) in [
            (1u8, 100usize, 2usize),
            (2, 100, 2),
            (3, 100, 2),
            (4, 200, 4),
            (5, 150, 3),
            (6, 150, 3),
        ] {
            let spec = ScenarioSpec::standard(id, 7).unwrap();
            let data = generate_scenario(&spec).unwrap();
            assert_eq!(data.train.n_curves(), train_n, "scenario {id}");
            assert_eq!(data.test.n_curves(), train_n, "scenario {id}");
            assert_eq!(data.train.n_points(), 50);
            assert_eq!(data.train.n_classes, classes);
            // class balance in both sets
            for set in [&data.train, &data.test] {
                let mut counts = vec![0usize; classes];
                for &l in &set.labels {
                    counts[l] += 1;
                }
                assert!(counts.iter().all(|&c| c == train_n / classes));
            }
        }
        assert!(matches!(
            ScenarioSpec::standard(7, 0),
            Err(SimError::InvalidScenario(7))
        ));
    }

    #[test]
    fn published_constants_table() {
        // Spot checks that the centralized constants match the published
        // parameterization.
        let s1 = standard_groups(1).unwrap();
        assert_eq!(s1[0].model, GroupModel::Trend { mu: 8.0 });
        assert_eq!(
            s1[1].model,
            GroupModel::Shift {
                mu: 8.0,
                q: 3.0,
                t_lo: 0.5,
                t_hi: 0.9
            }
        );
        assert_eq!(s1[0].kernel, STD_KERNEL);

        let s2 = standard_groups(2).unwrap();
        assert_eq!(s2[0].model, GroupModel::Sinusoid { a1: 1.0, a2: 8.0 });
        match s2[1].model {
            GroupModel::SinusoidMix {
                b1_lo,
                b1_hi,
                c1_lo,
                c1_hi,
                mix_prob,
                ..
            } => {
                assert_eq!((b1_lo, b1_hi), (1.5, 2.5));
                assert_eq!((c1_lo, c1_hi), (5.0, 10.5));
                assert_eq!(mix_prob, 0.6);
            }
            _ => panic!("wrong group model"),
        }

        let s3 = standard_groups(3).unwrap();
        match s3[1].model {
            GroupModel::Bump {
                mu,
                q,
                r,
                z,
                w,
                v_lo,
                v_hi,
                flip_prob,
            } => {
                assert_eq!(
                    (mu, q, r, z, w, v_lo, v_hi, flip_prob),
                    (8.0, 1.8, 0.02, 90.0, 2.0, 0.45, 0.55, 0.1)
                );
            }
            _ => panic!("wrong group model"),
        }

        let s4 = standard_groups(4).unwrap();
        assert_eq!(s4.len(), 4);
        assert_eq!(
            s4[0].kernel,
            GpKernelParams {
                alpha: 1.3,
                beta: 1.2,
                nu: 1.0
            }
        );
        assert_eq!(
            s4[2].kernel,
            GpKernelParams {
                alpha: 0.8,
                beta: 0.8,
                nu: 1.0
            }
        );
        match s4[3].model {
            GroupModel::Bump {
                mu, q, r, w, v_lo, ..
            } => {
                assert_eq!((mu, q, r, w, v_lo), (-2.0, 1.8, 0.01, 5.0, 0.15));
            }
            _ => panic!("wrong group model"),
        }

        let s5 = standard_groups(5).unwrap();
        match s5[2].model {
            GroupModel::Bump { mu, q, v_lo, .. } => {
                assert_eq!((mu, q, v_lo), (1.0, 0.8, 0.65));
            }
            _ => panic!("wrong group model"),
        }

        let s6 = standard_groups(6).unwrap();
        assert_eq!(
            s6[0].kernel,
            GpKernelParams {
                alpha: 2.0,
                beta: 1.0,
                nu: 0.5
            }
        );
        match s6[2].model {
            GroupModel::Shift { t_lo, t_hi, .. } => assert_eq!((t_lo, t_hi), (0.8, 0.9)),
            _ => panic!("wrong group model"),
        }
    }

    #[test]
    fn trend_group_mc_mean_follows_slope() {
        // 2000 noisy draws of the scenario-1 base group: the mean curve
        // stays within +-0.1 of 8t.
        let grid = linspace(0.0, 1.0, 50);
        let chol = kernel_cholesky(&grid, &STD_KERNEL).unwrap();
        let model = GroupModel::Trend { mu: 8.0 };
        let mut acc = vec![0.0f64; 50];
        for i in 0..2000u64 {
            let mut rng = stream_rng(55, i + 1);
            let drawn = model.draw(&mut rng);
            let noise = gp_sample_with_factor(&chol, &mut rng);
            for (j, (&t, &e)) in grid.iter().zip(noise.iter()).enumerate() {
                acc[j] += drawn.mean(t) + e;
            }
        }
        for (j, &t) in grid.iter().enumerate() {
            let mean = acc[j] / 2000.0;
            assert!(
                (mean - 8.0 * t).abs() <= 0.1,
                "mean at t={t}: {mean} vs {}",
                8.0 * t
            );
        }
    }

    #[test]
    fn bump_magnitude_at_center() {
        let amp = bump_amplitude(0.02);
        assert!((amp - 3.9894228040143274).abs() <= 1e-12);
        // Noise-free scenario 3: the drawn bump model evaluated at its own
        // center differs from the trend+shift baseline by exactly the
        // amplitude.
        let mut spec = ScenarioSpec::standard(3, 11).unwrap();
        spec.noise = false;
        let data = generate_scenario(&spec).unwrap();
        let mut checked = 0;
        for draw in &data.draws {
            if let DrawnModel::Bump {
                mu,
                q,
                v,
                flipped,
                r,
                ..
            } = draw.model
            {
                let base = mu * v + if flipped { -q } else { q };
                let diff = draw.model.mean(v) - base;
                let expect = if flipped { 1.0 } else { -1.0 } * bump_amplitude(r);
                assert!((diff - expect).abs() <= 1e-9);
                checked += 1;
            }
        }
        // Only the class-1 pool (train + test halves) uses the bump model.
        assert_eq!(checked, 100);
        // And the stored samples equal the drawn means exactly without noise.
        let draw0 = data
            .draws
            .iter()
            .find(|d| d.split == Split::Train && d.class == 0)
            .unwrap();
        for (col, &t) in data.train.time_grid.iter().enumerate() {
            assert_eq!(data.train.values[[draw0.row, col]], draw0.model.mean(t));
        }
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let spec = ScenarioSpec::standard(2, 42).unwrap();
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(a.train.values, b.train.values);
        assert_eq!(a.test.values, b.test.values);
        let spec2 = ScenarioSpec::standard(2, 43).unwrap();
        let c = generate_scenario(&spec2).unwrap();
        assert_ne!(a.train.values, c.train.values);
    }
}
