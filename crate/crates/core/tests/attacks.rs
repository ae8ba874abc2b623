use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnn_core::adversarial::{self, attack};
use tnn_core::{AttackConfig, AttackKind, Dataset, LossSpec, OrthogonalTransform, Sample, Tensor3, TnnModel};

const KINDS: [AttackKind; 4] = [AttackKind::L2Fgm, AttackKind::Fgsm, AttackKind::L2Pgd, AttackKind::LinfPgd];

fn model(seed: u64, widths: &[usize], t: OrthogonalTransform) -> TnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TnnModel::random(widths, t, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn perturbations_stay_in_the_ball(seed in any::<u64>(), xi in 0.0f64..2.0, y in prop_oneof![Just(1.0), Just(-1.0)]) {
        let m = model(seed, &[5, 6, 4], OrthogonalTransform::dct(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let x = Tensor3::random_normal(5, 1, 3, &mut rng);
        for kind in KINDS {
            let d = attack(&m, &x, y, &AttackConfig::new(kind, xi)).unwrap();
            if kind.is_linf() {
                prop_assert!(d.data().iter().all(|v| v.abs() <= xi));
            } else {
                prop_assert!(d.fro_norm() <= xi * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn perturbations_ignore_weight_scale(seed in any::<u64>(), xi in 0.01f64..1.0) {
        let m = model(seed, &[4, 5, 5, 3], OrthogonalTransform::dct(2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        let x = Tensor3::random_normal(4, 1, 2, &mut rng);
        for kind in KINDS {
            let cfg = AttackConfig::new(kind, xi);
            let base = attack(&m, &x, 1.0, &cfg).unwrap();
            for a in [0.5, 2.0, 3.0] {
                let scaled = attack(&m.scale_weights(a).unwrap(), &x, 1.0, &cfg).unwrap();
                let diff = base.sub(&scaled).unwrap().fro_norm();
                prop_assert!(diff <= 1e-8 * xi.max(base.fro_norm()), "{:?} a={} diff={}", kind, a, diff);
            }
        }
    }
}

/// With identity transform, positive weights and a positive input every ReLU is
/// active, so `f(x) = w^T W_L ... W_1 x` slice by slice and the gradient is explicit.
#[test]
fn l2_fgm_matches_linear_closed_form() {
    let c = 3;
    let t = OrthogonalTransform::identity(c);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w1 = Tensor3::from_fn(4, 3, c, |_, _, _| rng.random_range(0.1..1.0));
    let w2 = Tensor3::from_fn(2, 4, c, |_, _, _| rng.random_range(0.1..1.0));
    let head: Vec<f64> = (0..2 * c).map(|_| rng.random_range(0.1..1.0)).collect();
    let m = TnnModel::new(vec![w1.clone(), w2.clone()], head.clone(), t).unwrap();
    let x = Tensor3::from_fn(3, 1, c, |_, _, _| rng.random_range(1.0..2.0));
    // gradient g_k = (w_k^T W2_k W1_k)^T per slice, head laid out slice-major
    let mut g = vec![0.0; 3 * c];
    for k in 0..c {
        for j in 0..3 {
            let mut v = 0.0;
            for a in 0..2 {
                for b in 0..4 {
                    v += head[k * 2 + a] * w2.get(a, b, k) * w1.get(b, j, k);
                }
            }
            g[k * 3 + j] = v;
        }
    }
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let f = m.forward(&x).unwrap();
    let fx: f64 = g.iter().zip(x.data()).map(|(a, b)| a * b).sum();
    assert!((f - fx).abs() < 1e-12 * f.abs());
    let xi = 0.1;
    for y in [1.0, -1.0] {
        let d = attack(&m, &x, y, &AttackConfig::new(AttackKind::L2Fgm, xi)).unwrap();
        for (dv, gv) in d.data().iter().zip(&g) {
            assert!((dv + xi * y * gv / gnorm).abs() < 1e-12);
        }
        let moved = x.add(&d).unwrap();
        let q = y * m.forward(&moved).unwrap();
        assert!((q - (y * f - xi * gnorm)).abs() < 1e-10);
    }
}

/// Largest loss over a dense grid of the 2-d ball.
fn grid_max_loss(m: &TnnModel, x: &Tensor3, y: f64, xi: f64, linf: bool, loss: &LossSpec) -> f64 {
    let steps = 400;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let u = -xi + 2.0 * xi * i as f64 / steps as f64;
            let v = -xi + 2.0 * xi * j as f64 / steps as f64;
            if !linf && u * u + v * v > xi * xi {
                continue;
            }
            let p = Tensor3::from_vec(2, 1, 1, vec![x.data()[0] + u, x.data()[1] + v]).unwrap();
            best = best.max(loss.value(y * m.forward(&p).unwrap()));
        }
    }
    best
}

/// Inputs where the gradient vanishes are skipped: every gradient attack
/// returns zero there, so they say nothing about PGD.
#[test]
fn pgd_reaches_grid_search_optimum_in_two_dimensions() {
    let loss = LossSpec::logistic();
    let xi = 0.1;
    let mut checked = 0;
    for seed in 0..40u64 {
        let m = model(seed, &[2, 8, 8], OrthogonalTransform::identity(1));
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Tensor3::random_normal(2, 1, 1, &mut rng);
        if m.input_gradient(&x).unwrap().fro_norm() == 0.0 {
            continue;
        }
        checked += 1;
        let y = if seed % 2 == 0 { 1.0 } else { -1.0 };
        for (kind, linf) in [(AttackKind::L2Pgd, false), (AttackKind::LinfPgd, true)] {
            let d = attack(&m, &x, y, &AttackConfig::new(kind, xi)).unwrap();
            let pgd = loss.value(y * m.forward(&x.add(&d).unwrap()).unwrap());
            let grid = grid_max_loss(&m, &x, y, xi, linf, &loss);
            assert!(pgd >= 0.95 * grid, "seed {seed} {kind:?}: {pgd} vs grid {grid}");
        }
    }
    assert!(checked >= 30);
}

#[test]
fn adversarial_risk_dominates_clean_risk() {
    let m = model(3, &[4, 6, 6], OrthogonalTransform::dct(2));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<Sample> = (0..30)
        .map(|i| Sample { x: Tensor3::random_normal(4, 1, 2, &mut rng), y: if i % 2 == 0 { 1.0 } else { -1.0 } })
        .collect();
    let data = Dataset::new(samples, 4, 2).unwrap();
    let loss = LossSpec::logistic();
    let clean = adversarial::clean_risk(&m, &data, &loss).unwrap();
    for kind in KINDS {
        let adv = adversarial::adversarial_risk(&m, &data, &loss, &AttackConfig::new(kind, 0.2)).unwrap();
        assert!(adv >= clean);
    }
    let zero = adversarial::adversarial_risk(&m, &data, &loss, &AttackConfig::new(AttackKind::Fgsm, 0.0)).unwrap();
    assert_eq!(zero, clean);
}

#[test]
fn margin_sandwich_and_gamma_relation() {
    // a separable toy problem: the teacher itself classifies its own data
    let cfg = tnn_core::data::SynthConfig::new(6, 40, 4, 2, 2);
    let data = tnn_core::data::synth_dataset(&cfg).unwrap();
    let teacher = tnn_core::data::synth_teacher(&cfg).unwrap().scale_weights(30.0).unwrap();
    for loss in [LossSpec::exponential(), LossSpec::logistic()] {
        let m = adversarial::margin_metrics(&teacher, &data, &loss, &AttackConfig::none()).unwrap();
        let n = data.len() as f64;
        let fq = loss.frak_f(m.q_min);
        assert!(fq - n.ln() <= m.log_inv_n_risk + 1e-9);
        assert!(m.log_inv_n_risk <= fq + 1e-9);
        // γ̃ <= q̂_m because g is increasing and log(1/(N L)) <= f(q̃_m)
        assert!(m.gamma_tilde <= m.q_hat * (1.0 + 1e-8));
        let scale = m.rho.powi(teacher.depth() as i32 + 1);
        assert!((m.q_hat * scale - m.q_min).abs() <= 1e-10 * m.q_min.abs());
    }
}
