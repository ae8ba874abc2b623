//! Fixed-seed property checks behind `tnn verify`.
//!
//! Every check compares the library against an oracle built here from
//! scratch (explicit Kronecker operators, nalgebra singular values, finite
//! differences, grid search, plain re-evaluation of the bound formulas).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnn_core::adversarial::{attack, AttackConfig, AttackKind};
use tnn_core::bounds::{self, BoundInputs};
use tnn_core::data::{synth_dataset, SynthConfig};
use tnn_core::transform::TransformKind;
use tnn_core::tsvd;
use tnn_core::{LossSpec, OrthogonalTransform, Tensor3, TnnModel};

use crate::{formats, idx};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// `||a - b||_F / max(||a||_F, ||b||_F, tiny)`.
fn rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / a.fro_norm().max(b.fro_norm()).max(f64::MIN_POSITIVE)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_orthogonal(c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(c, c, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q()
}

fn random_transform(c: usize, rng: &mut ChaCha8Rng) -> OrthogonalTransform {
    let q = random_orthogonal(c, rng);
    let rows: Vec<f64> = (0..c).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| q[(i, j)]).collect();
    OrthogonalTransform::build(TransformKind::Custom(rows), c).expect("QR factor is orthogonal")
}

/// One transform of each kind with `c` channels.
fn transforms(c: usize, rng: &mut ChaCha8Rng) -> [OrthogonalTransform; 3] {
    [OrthogonalTransform::identity(c), OrthogonalTransform::dct(c), random_transform(c, rng)]
}

fn normal(m: usize, n: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
    Tensor3::random_normal(m, n, c, rng)
}

/// `(M^T ⊗ I_m) bdiag(M(W)) (M ⊗ I_n) vec(X)` with everything materialized;
/// `vec` stacks frontal slices, each slice row-major.
fn kronecker_product(w: &Tensor3, x: &Tensor3, t: &OrthogonalTransform) -> Tensor3 {
    let (m, n, c) = w.dims();
    let p = x.cols();
    let mm = t.matrix();
    let kron = |rows: usize| {
        DMatrix::from_fn(
            c * rows,
            c * rows,
            |a, b| if a % rows == b % rows { mm[(a / rows) * c + b / rows] } else { 0.0 },
        )
    };
    let mut bdiag = DMatrix::zeros(c * m, c * n);
    for k in 0..c {
        for i in 0..m {
            for j in 0..n {
                bdiag[(k * m + i, k * n + j)] = (0..c).map(|l| mm[k * c + l] * w.get(i, j, l)).sum();
            }
        }
    }
    let vx = DMatrix::from_fn(c * n, p, |a, b| x.get(a % n, b, a / n));
    let out = kron(m).transpose() * bdiag * kron(n) * vx;
    Tensor3::from_fn(m, p, c, |i, j, k| out[(k * m + i, j)])
}

/// Associativity, t-identity, t-transpose, block-diagonal homomorphism,
/// F-norm invariance and the Kronecker operator form, 120 instances each.
pub fn algebra_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1);
    let (mut assoc, mut ident, mut trans, mut bdiag, mut fro, mut oracle) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    let mut count = 0;
    for _ in 0..40 {
        let c = rng.random_range(1..6);
        let (m, n, p, q) =
            (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
        for t in transforms(c, &mut rng) {
            count += 1;
            let a = normal(m, n, c, &mut rng);
            let b = normal(n, p, c, &mut rng);
            let d = normal(p, q, c, &mut rng);
            let left = a.t_product(&b, &t).unwrap().t_product(&d, &t).unwrap();
            let right = a.t_product(&b.t_product(&d, &t).unwrap(), &t).unwrap();
            assoc = assoc.max(rel_diff(&left, &right));
            let i_m = Tensor3::t_identity(m, &t);
            let i_n = Tensor3::t_identity(n, &t);
            ident = ident.max(rel_diff(&i_m.t_product(&a, &t).unwrap(), &a));
            ident = ident.max(rel_diff(&a.t_product(&i_n, &t).unwrap(), &a));
            let ab = a.t_product(&b, &t).unwrap();
            let lhs = ab.t_transpose(&t).unwrap();
            let rhs = b.t_transpose(&t).unwrap().t_product(&a.t_transpose(&t).unwrap(), &t).unwrap();
            trans = trans.max(rel_diff(&lhs, &rhs));
            let prod = a.m_block_diag(&t).unwrap() * b.m_block_diag(&t).unwrap();
            let direct = ab.m_block_diag(&t).unwrap();
            bdiag = bdiag.max((&prod - &direct).norm() / prod.norm().max(direct.norm()).max(f64::MIN_POSITIVE));
            fro = fro.max(rel(a.fro_norm(), a.m_block_diag(&t).unwrap().norm()));
            oracle = oracle.max(rel_diff(&ab, &kronecker_product(&a, &b, &t)));
        }
    }
    let tol = 1e-10;
    vec![
        CheckResult::new("algebra.associativity", assoc <= tol, format!("{count} instances, max rel {assoc:.2e}")),
        CheckResult::new("algebra.t_identity", ident <= tol, format!("{count} instances, max rel {ident:.2e}")),
        CheckResult::new("algebra.t_transpose", trans <= tol, format!("{count} instances, max rel {trans:.2e}")),
        CheckResult::new("algebra.block_diag", bdiag <= tol, format!("{count} instances, max rel {bdiag:.2e}")),
        CheckResult::new("algebra.fro_invariance", fro <= 1e-12, format!("{count} instances, max rel {fro:.2e}")),
        CheckResult::new("algebra.operator_oracle", oracle <= tol, format!("{count} instances, max rel {oracle:.2e}")),
    ]
}

/// A tensor whose transformed slice `k` has singular values `spectra[k]`.
fn with_spectra(m: usize, n: usize, spectra: &[Vec<f64>], t: &OrthogonalTransform, rng: &mut ChaCha8Rng) -> Tensor3 {
    let c = spectra.len();
    let mut hat = Tensor3::zeros(m, n, c);
    for (k, s) in spectra.iter().enumerate() {
        let u = random_orthogonal(m, rng);
        let v = random_orthogonal(n, rng);
        for i in 0..m {
            for j in 0..n {
                let val: f64 = s.iter().enumerate().map(|(r, sv)| u[(i, r)] * sv * v[(j, r)]).sum();
                hat.set(i, j, k, val);
            }
        }
    }
    Tensor3::from_transformed(&hat, t).unwrap()
}

/// Singular values of every transformed slice, via nalgebra.
fn oracle_spectra(x: &Tensor3, t: &OrthogonalTransform) -> Vec<Vec<f64>> {
    let hat = t.apply(x).unwrap();
    (0..x.channels())
        .map(|k| {
            let s = DMatrix::from_fn(x.rows(), x.cols(), |i, j| hat.get(i, j, k));
            let mut v: Vec<f64> = s.singular_values().iter().copied().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect()
}

/// Reconstruction, exact ranks, truncation error, Eckart-Young and the
/// polynomial-decay truncation bound.
pub fn tsvd_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb2);
    let mut recon = 0f64;
    let mut rank_ok = true;
    let mut trunc = 0f64;
    let mut ey_ok = true;
    let mut count = 0;
    for _ in 0..10 {
        let c = rng.random_range(1..5);
        let (m, n) = (rng.random_range(2..7), rng.random_range(2..7));
        let p = m.min(n);
        for t in transforms(c, &mut rng) {
            count += 1;
            let x = normal(m, n, c, &mut rng);
            let f = tsvd::tsvd(&x, &t).unwrap();
            recon = recon.max(rel_diff(&f.reconstruct(&t).unwrap(), &x));
            // known ranks: slice k has rank rank_k
            let mut ranks: Vec<usize> = (0..c).map(|_| rng.random_range(0..=p)).collect();
            ranks[0] = ranks[0].max(1);
            let spectra: Vec<Vec<f64>> =
                ranks.iter().map(|&r| (0..r).map(|j| 3.0 / (j as f64 + 1.0)).collect()).collect();
            let y = with_spectra(m, n, &spectra, &t, &mut rng);
            let tol = tsvd::RANK_TOL;
            rank_ok &= tsvd::multi_rank(&y, &t, tol).unwrap() == ranks;
            rank_ok &= tsvd::tubal_rank(&y, &t, tol).unwrap() == *ranks.iter().max().unwrap();
            let oracle = oracle_spectra(&x, &t);
            for r in 1..=p {
                let want: f64 = oracle.iter().flat_map(|s| s.iter().skip(r)).map(|v| v * v).sum::<f64>().sqrt();
                let got = x.sub(&tsvd::truncate(&x, &t, r).unwrap()).unwrap().fro_norm();
                trunc = trunc.max((got - want).abs() / x.fro_norm());
                // competitors: tubal rank r tensors built from random factors
                for _ in 0..3 {
                    let a = normal(m, r, c, &mut rng);
                    let b = normal(r, n, c, &mut rng);
                    let mut comp = a.t_product(&b, &t).unwrap();
                    let scale = x.inner(&comp).unwrap() / comp.inner(&comp).unwrap().max(f64::MIN_POSITIVE);
                    comp = comp.scaled(scale);
                    ey_ok &= x.sub(&comp).unwrap().fro_norm() >= got * (1.0 - 1e-12);
                }
            }
        }
    }
    let mut decay_ok = true;
    let mut worst = f64::INFINITY;
    let (m, n, c) = (10, 10, 4);
    let t = OrthogonalTransform::dct(c);
    for alpha in [0.75, 1.0, 2.0] {
        let spectra: Vec<Vec<f64>> = (0..c).map(|_| (1..=m).map(|j| (j as f64).powf(-alpha)).collect()).collect();
        let w = with_spectra(m, n, &spectra, &t, &mut rng);
        for r in 2..=8 {
            let err = tsvd::truncation_error(&w, &t, r).unwrap();
            let bound = (c as f64 / (2.0 * alpha - 1.0)).sqrt() * ((r - 1) as f64).powf((1.0 - 2.0 * alpha) / 2.0);
            decay_ok &= err <= bound;
            worst = worst.min(bound - err);
        }
    }
    vec![
        CheckResult::new("tsvd.reconstruction", recon <= 1e-8, format!("{count} tensors, max rel {recon:.2e}")),
        CheckResult::new("tsvd.exact_ranks", rank_ok, format!("{count} constructed tensors")),
        CheckResult::new("tsvd.truncation_error", trunc <= 1e-10, format!("max rel deviation {trunc:.2e}")),
        CheckResult::new("tsvd.eckart_young", ey_ok, "random tubal-rank-r competitors never beat truncation".into()),
        CheckResult::new(
            "tsvd.decay_bound",
            decay_ok,
            format!("alpha in {{0.75,1,2}}, r in 2..=8, min slack {worst:.3e}"),
        ),
    ]
}

/// Finite differences on every coordinate of a 3-layer d=6, c=4 model,
/// homogeneity and the Euler identity.
pub fn differentiation_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc3);
    let (d, c) = (6, 4);
    let model = TnnModel::random(&[d, 6, 6, 6], OrthogonalTransform::dct(c), &mut rng).unwrap();
    let x = normal(d, 1, c, &mut rng);
    let g = model.backward(&x, 1.0).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-4 * a.abs().max(b.abs()) + 1e-9;
    let central = |f: &dyn Fn(f64) -> f64, theta: f64| {
        let h = 1e-5 * theta.abs().max(1.0);
        (f(theta + h) - f(theta - h)) / (2.0 * h)
    };
    let mut bad = 0;
    let mut total = 0;
    for l in 0..model.depth() {
        for idx in 0..model.layers()[l].len() {
            let f = |v: f64| {
                let mut layers = model.layers().to_vec();
                layers[l].data_mut()[idx] = v;
                model.with_layers(layers).unwrap().forward(&x).unwrap()
            };
            total += 1;
            bad += usize::from(!close(g.layers[l].data()[idx], central(&f, model.layers()[l].data()[idx])));
        }
    }
    for idx in 0..model.head().len() {
        let f = |v: f64| {
            let mut head = model.head().to_vec();
            head[idx] = v;
            model.with_weights(model.layers().to_vec(), head).unwrap().forward(&x).unwrap()
        };
        total += 1;
        bad += usize::from(!close(g.head[idx], central(&f, model.head()[idx])));
    }
    for idx in 0..x.len() {
        let f = |v: f64| {
            let mut xx = x.clone();
            xx.data_mut()[idx] = v;
            model.forward(&xx).unwrap()
        };
        total += 1;
        bad += usize::from(!close(g.input.data()[idx], central(&f, x.data()[idx])));
    }
    let f0 = model.forward(&x).unwrap();
    let power = (model.depth() + 1) as i32;
    let mut homog = 0f64;
    for a in [0.5, 2.0, 3.0] {
        homog = homog.max(rel(model.scale_weights(a).unwrap().forward(&x).unwrap(), a.powi(power) * f0));
    }
    let euler = rel(g.dot_weights(&model), f64::from(power) * f0);
    vec![
        CheckResult::new("grad.finite_differences", bad == 0, format!("{bad} of {total} coordinates disagree")),
        CheckResult::new("grad.homogeneity", homog <= 1e-8, format!("max rel {homog:.2e}")),
        CheckResult::new("grad.euler", euler <= 1e-8, format!("rel {euler:.2e}")),
    ]
}

const KINDS: [AttackKind; 4] = [AttackKind::L2Fgm, AttackKind::Fgsm, AttackKind::L2Pgd, AttackKind::LinfPgd];

/// Ball membership, scale invariance, the linear-region FGM formula and PGD
/// against grid search in two dimensions.
pub fn attack_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd4);
    let mut ball = true;
    let mut scale = 0f64;
    for _ in 0..40 {
        let model = TnnModel::random(&[5, 6, 4], OrthogonalTransform::dct(3), &mut rng).unwrap();
        let x = normal(5, 1, 3, &mut rng);
        let xi = rng.random_range(0.01..1.0);
        for kind in KINDS {
            let cfg = AttackConfig::new(kind, xi);
            let d = attack(&model, &x, 1.0, &cfg).unwrap();
            ball &= if kind.is_linf() {
                d.data().iter().all(|v| v.abs() <= xi)
            } else {
                d.fro_norm() <= xi * (1.0 + 1e-12)
            };
            for a in [0.5, 2.0, 3.0] {
                let da = attack(&model.scale_weights(a).unwrap(), &x, 1.0, &cfg).unwrap();
                scale = scale.max(d.sub(&da).unwrap().fro_norm() / xi);
            }
        }
    }

    // all weights and inputs positive with the identity transform: the model is linear
    let c = 3;
    let t = OrthogonalTransform::identity(c);
    let w1 = Tensor3::from_fn(4, 3, c, |_, _, _| rng.random_range(0.1..1.0));
    let w2 = Tensor3::from_fn(2, 4, c, |_, _, _| rng.random_range(0.1..1.0));
    let head: Vec<f64> = (0..2 * c).map(|_| rng.random_range(0.1..1.0)).collect();
    let lin = TnnModel::new(vec![w1.clone(), w2.clone()], head.clone(), t).unwrap();
    let x = Tensor3::from_fn(3, 1, c, |_, _, _| rng.random_range(1.0..2.0));
    let grad = Tensor3::from_fn(3, 1, c, |j, _, k| {
        (0..2).map(|a| (0..4).map(|b| head[k * 2 + a] * w2.get(a, b, k) * w1.get(b, j, k)).sum::<f64>()).sum()
    });
    let xi = 0.1;
    let mut fgm = 0f64;
    for y in [1.0, -1.0] {
        let d = attack(&lin, &x, y, &AttackConfig::new(AttackKind::L2Fgm, xi)).unwrap();
        let want = grad.scaled(-xi * y / grad.fro_norm());
        fgm = fgm.max(d.sub(&want).unwrap().fro_norm());
    }

    let loss = LossSpec::logistic();
    let mut pgd_ok = true;
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for s in 0..40u64 {
        let mut mrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s) ^ 0xd5);
        let model = TnnModel::random(&[2, 8, 8], OrthogonalTransform::identity(1), &mut mrng).unwrap();
        let x = normal(2, 1, 1, &mut mrng);
        if model.input_gradient(&x).unwrap().fro_norm() == 0.0 {
            continue;
        }
        checked += 1;
        let y = if s % 2 == 0 { 1.0 } else { -1.0 };
        for (kind, linf) in [(AttackKind::L2Pgd, false), (AttackKind::LinfPgd, true)] {
            let d = attack(&model, &x, y, &AttackConfig::new(kind, xi)).unwrap();
            let pgd = loss.value(y * model.forward(&x.add(&d).unwrap()).unwrap());
            let steps = 400;
            let mut grid = f64::NEG_INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let u = -xi + 2.0 * xi * i as f64 / steps as f64;
                    let v = -xi + 2.0 * xi * j as f64 / steps as f64;
                    if !linf && u * u + v * v > xi * xi {
                        continue;
                    }
                    let p = Tensor3::from_vec(2, 1, 1, vec![x.data()[0] + u, x.data()[1] + v]).unwrap();
                    grid = grid.max(loss.value(y * model.forward(&p).unwrap()));
                }
            }
            pgd_ok &= pgd >= 0.95 * grid;
            worst = worst.min(pgd / grid);
        }
    }
    vec![
        CheckResult::new("attack.ball_membership", ball, "4 attacks x 40 instances".into()),
        CheckResult::new("attack.scale_invariance", scale <= 1e-8, format!("max |d(aW) - d(W)| / xi = {scale:.2e}")),
        CheckResult::new("attack.fgm_closed_form", fgm <= 1e-12, format!("max deviation {fgm:.2e}")),
        CheckResult::new(
            "attack.pgd_grid_search",
            pgd_ok && checked >= 30,
            format!("{checked} inputs, worst PGD/grid loss ratio {worst:.4}"),
        ),
    ]
}

/// Independent re-evaluation of the standard, full, low-rank and decay
/// bounds. Returns the largest relative deviation over `sets` random inputs.
pub fn bound_formula_deviation(seed: u64, sets: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe5);
    let mut worst = 0f64;
    for _ in 0..sets {
        let depth = rng.random_range(1..5);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(2..40)).collect();
        let mut inp = BoundInputs::new(rng.random_range(50..5000), rng.random_range(1..32), dims.clone());
        inp.layer_caps = (0..depth).map(|_| rng.random_range(0.3..3.0)).collect();
        inp.head_cap = rng.random_range(0.3..3.0);
        inp.b_x = rng.random_range(0.5..2.0);
        inp.xi = rng.random_range(0.0..0.5);
        inp.c_r = rng.random_range(1.0..3.0);
        inp.lipschitz = rng.random_range(0.1..2.0);
        inp.range = rng.random_range(0.1..5.0);
        inp.t = rng.random_range(0.1..5.0);
        inp.constants.full = rng.random_range(0.5..2.0);
        inp.constants.lowrank = rng.random_range(0.5..2.0);
        inp.constants.decay = rng.random_range(0.5..2.0);
        let ranks: Vec<usize> = dims.windows(2).map(|w| rng.random_range(1..=w[0].min(w[1]))).collect();
        inp.ranks = Some(ranks.clone());
        let (v0, alpha) = (rng.random_range(0.1..2.0), rng.random_range(0.6..3.0));
        inp.decay = Some((v0, alpha));

        let (n, c, l) = (inp.n as f64, inp.c as f64, depth as f64);
        let bw = inp.head_cap * inp.layer_caps.iter().product::<f64>();
        let bf = (inp.b_x + inp.xi * inp.c_r) * bw;
        let t_term = 3.0 * inp.range * (inp.t / (2.0 * n)).sqrt();
        let standard = inp.lipschitz * inp.b_x * bw / n.sqrt() * ((2.0 * (2.0 * (l + 1.0)).ln()).sqrt() + 1.0) + t_term;
        let dd: f64 = dims.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
        let full =
            inp.constants.full * inp.lipschitz * bf / n.sqrt() * (c * dd * (3.0 * (l + 1.0)).ln()).sqrt() + t_term;
        let rd: f64 = dims.windows(2).zip(&ranks).map(|(w, &r)| (r * (w[0] + w[1])) as f64).sum();
        let low =
            inp.constants.lowrank * inp.lipschitz * bf / n.sqrt() * (c * rd * (9.0 * (l + 1.0)).ln()).sqrt() + t_term;

        let log = (9.0 * n * l * bf / c.sqrt()).ln();
        let sums = dims.windows(2).zip(&inp.layer_caps).zip(&ranks).fold((0.0, 0.0, 0.0), |acc, ((w, &b), &r)| {
            let width = (w[0] + w[1]) as f64;
            (
                acc.0 + (r as f64 + 1.0).powf(-alpha) / b,
                acc.1 + (l * v0 * bf / b).powf(1.0 / alpha) * width,
                acc.2 + (l * v0 / b).powf(1.0 / alpha) * width,
            )
        });
        let r_hat = v0 * bf * sums.0;
        let e1 = c / n * rd * log;
        let e2 = c / n * sums.1 * log;
        let p = 2.0 * alpha / (2.0 * alpha + 1.0);
        let mid = e2.powf(p) * (bf.powf((2.0 * alpha - 1.0) / (2.0 * alpha + 1.0)) + 1.0);
        let tail = (1.0 + inp.t * bf) / n;
        let ratio = inp.range / inp.lipschitz;
        let lead = inp.constants.decay * inp.lipschitz;
        let decay = lead
            * (bf * e1
                + r_hat * e1.sqrt()
                + mid
                + r_hat.powf(p) * e2.sqrt()
                + (r_hat + ratio) * (inp.t / n).sqrt()
                + tail);
        let optimal = lead
            * (bf.powf(1.0 - 1.0 / (2.0 * alpha)) * (c * sums.2 * log / n).sqrt()
                + mid
                + e2.sqrt()
                + ratio * (inp.t / n).sqrt()
                + tail);

        let got = bounds::adv_gap_bound_decay(&inp).unwrap();
        for (a, b) in [
            (bounds::standard_gap_bound(&inp).unwrap(), standard),
            (bounds::adv_gap_bound_full(&inp).unwrap(), full),
            (bounds::adv_gap_bound_lowrank(&inp).unwrap(), low),
            (got.r_hat, r_hat),
            (got.e1, e1),
            (got.e2, e2),
            (got.bound, decay),
            (got.optimal_bound, optimal),
        ] {
            worst = worst.max(rel(a, b));
        }
        let opt_ranks: Vec<usize> = dims
            .windows(2)
            .zip(&inp.layer_caps)
            .map(|(w, &b)| ((l * v0 * bf / b).powf(1.0 / alpha).ceil() as usize).min(w[0]).min(w[1]).max(1))
            .collect();
        if opt_ranks != got.optimal_ranks {
            worst = f64::INFINITY;
        }
    }
    worst
}

/// Formula agreement, the square-network comparison and input validation.
pub fn bound_checks(seed: u64) -> Vec<CheckResult> {
    let dev = bound_formula_deviation(seed, 20);
    let mut inp = BoundInputs::new(1000, 28, vec![28; 4]);
    inp.ranks = Some(vec![4; 3]);
    let low = bounds::adv_gap_bound_lowrank(&inp).unwrap();
    let full = bounds::adv_gap_bound_full(&inp).unwrap();
    inp.decay = Some((1.0, 0.5));
    let rejects = bounds::adv_gap_bound_decay(&inp).is_err();
    vec![
        CheckResult::new("bounds.formulas", dev <= 1e-12, format!("20 input sets, max rel {dev:.2e}")),
        CheckResult::new("bounds.lowrank_below_full", low < full, format!("d = c = 28, r = 4: {low:.4} < {full:.4}")),
        CheckResult::new("bounds.rejects_alpha", rejects, "alpha = 1/2 rejected".into()),
    ]
}

/// Outcome of the compression certificate over several random models.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionSweep {
    pub models: usize,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed / certificate ratio.
    pub worst_ratio: f64,
}

pub fn compression_sweep(seed: u64, models: usize, samples: usize) -> CompressionSweep {
    let data = synth_dataset(&SynthConfig::new(seed ^ 0xf6, samples, 6, 4, 2)).unwrap();
    let attacks = [
        AttackConfig::new(AttackKind::Fgsm, 0.05),
        AttackConfig::new(AttackKind::L2Fgm, 0.1),
        AttackConfig::new(AttackKind::L2Pgd, 0.1),
        AttackConfig::new(AttackKind::LinfPgd, 0.05),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf7);
    let mut violations = 0;
    let mut worst = 0f64;
    for i in 0..models {
        let model = TnnModel::random(&[6, 8, 8, 8], OrthogonalTransform::dct(4), &mut rng).unwrap();
        let ranks: Vec<usize> = (0..3).map(|l| rng.random_range(1..=if l == 0 { 6 } else { 8 })).collect();
        let rep = bounds::compress_and_certify(&model, &ranks, &data, &attacks[i % attacks.len()]).unwrap();
        if rep.observed > rep.certificate {
            violations += 1;
        }
        if rep.certificate > 0.0 {
            worst = worst.max(rep.observed / rep.certificate);
        }
    }
    CompressionSweep { models, samples, violations, worst_ratio: worst }
}

pub fn compression_checks(seed: u64) -> Vec<CheckResult> {
    let s = compression_sweep(seed, 10, 200);
    vec![CheckResult::new(
        "compress.certificate",
        s.violations == 0,
        format!(
            "{} models x {} samples, {} violations, max observed/certificate {:.3e}",
            s.models, s.samples, s.violations, s.worst_ratio
        ),
    )]
}

/// Bit-exact round trips of the tensor, checkpoint and IDX formats.
pub fn format_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x17);
    let t = normal(3, 4, 5, &mut rng);
    let tensor_ok = formats::decode_tensor(&formats::encode_tensor(&t)).map(|b| b == t).unwrap_or(false);
    let model = TnnModel::random(&[4, 5, 3], OrthogonalTransform::dct(2), &mut rng).unwrap();
    let model_ok = formats::decode_model(&formats::encode_model(&model), OrthogonalTransform::dct(2))
        .map(|m| m == model)
        .unwrap_or(false);
    let data = synth_dataset(&SynthConfig::new(seed, 30, 5, 3, 2)).unwrap();
    let (images, labels) = idx::encode_dataset(&data);
    let idx_ok = idx::parse_images(&images)
        .and_then(|im| idx::to_dataset(&im, &idx::parse_labels(&labels)?, usize::MAX))
        .map(|back| back == data)
        .unwrap_or(false);
    let mut wrong = images.clone();
    wrong[3] = 0x01;
    let magic_ok = matches!(idx::parse_images(&wrong), Err(crate::ToolError::BadMagic { .. }));
    vec![
        CheckResult::new("formats.tensor_round_trip", tensor_ok, "TNS3".into()),
        CheckResult::new("formats.model_round_trip", model_ok, "TNNW".into()),
        CheckResult::new("formats.idx_round_trip", idx_ok, "synthetic dataset through f64 IDX".into()),
        CheckResult::new("formats.idx_bad_magic", magic_ok, "00 00 08 01 on the images path".into()),
    ]
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut out = algebra_checks(seed);
    out.extend(tsvd_checks(seed));
    out.extend(differentiation_checks(seed));
    out.extend(attack_checks(seed));
    out.extend(bound_checks(seed));
    out.extend(compression_checks(seed));
    out.extend(format_checks(seed));
    out
}

pub fn csv(results: &[CheckResult]) -> String {
    let mut out = String::from("check,status,detail\n");
    for r in results {
        writeln!(out, "{},{},\"{}\"", r.name, if r.passed { "pass" } else { "fail" }, r.detail.replace('"', "'"))
            .expect("string write");
    }
    out
}
