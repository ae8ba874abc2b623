use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnn_core::bounds::{
    adv_complexity_full, adv_complexity_lowrank, adv_gap_bound_decay, adv_gap_bound_full, adv_gap_bound_lowrank,
    compress_and_certify, standard_gap_bound, BoundInputs,
};
use tnn_core::data::{synth_dataset, SynthConfig};
use tnn_core::{AttackConfig, AttackKind, OrthogonalTransform, TnnModel};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Reference evaluation of every closed form with plain std arithmetic.
struct Oracle<'a>(&'a BoundInputs);

impl Oracle<'_> {
    fn depth(&self) -> f64 {
        (self.0.dims.len() - 1) as f64
    }

    fn bf(&self) -> f64 {
        let mut bw = self.0.head_cap;
        for b in &self.0.layer_caps {
            bw *= b;
        }
        (self.0.b_x + self.0.xi * self.0.c_r) * bw
    }

    fn t_term(&self) -> f64 {
        3.0 * self.0.range * (self.0.t / (2.0 * self.0.n as f64)).sqrt()
    }

    fn standard(&self) -> f64 {
        let i = self.0;
        let bw: f64 = i.head_cap * i.layer_caps.iter().product::<f64>();
        let l = self.depth();
        i.lipschitz * i.b_x * bw / (i.n as f64).sqrt() * ((2.0 * (2.0 * (l + 1.0)).ln()).sqrt() + 1.0) + self.t_term()
    }

    fn full(&self) -> f64 {
        let i = self.0;
        let mut s = 0.0;
        for l in 1..i.dims.len() {
            s += (i.dims[l - 1] * i.dims[l]) as f64;
        }
        let radical = (i.c as f64 * s * (3.0 * (self.depth() + 1.0)).ln()).sqrt();
        i.constants.full * i.lipschitz * self.bf() / (i.n as f64).sqrt() * radical + self.t_term()
    }

    fn lowrank(&self) -> f64 {
        let i = self.0;
        let ranks = i.ranks.as_ref().unwrap();
        let mut s = 0.0;
        for l in 1..i.dims.len() {
            s += (ranks[l - 1] * (i.dims[l - 1] + i.dims[l])) as f64;
        }
        let radical = (i.c as f64 * s * (9.0 * (self.depth() + 1.0)).ln()).sqrt();
        i.constants.lowrank * i.lipschitz * self.bf() / (i.n as f64).sqrt() * radical + self.t_term()
    }

    /// `(optimal ranks, r_hat, E1, E2, bound, optimal bound)`.
    fn decay(&self) -> (Vec<usize>, f64, f64, f64, f64, f64) {
        let i = self.0;
        let (v0, alpha) = i.decay.unwrap();
        let (n, c, l, bf) = (i.n as f64, i.c as f64, self.depth(), self.bf());
        let log = (9.0 * n * l * bf / c.sqrt()).ln();
        let mut opt = Vec::new();
        for k in 0..i.layer_caps.len() {
            let raw = (l * v0 * bf / i.layer_caps[k]).powf(1.0 / alpha).ceil() as usize;
            opt.push(raw.min(i.dims[k]).min(i.dims[k + 1]).max(1));
        }
        let ranks = i.ranks.clone().unwrap_or_else(|| opt.clone());
        let (mut r_hat, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
        for (k, &r) in ranks.iter().enumerate() {
            let w = (i.dims[k] + i.dims[k + 1]) as f64;
            r_hat += (r as f64 + 1.0).powf(-alpha) / i.layer_caps[k];
            s1 += r as f64 * w;
            s2 += (l * v0 * bf / i.layer_caps[k]).powf(1.0 / alpha) * w;
            s3 += (l * v0 / i.layer_caps[k]).powf(1.0 / alpha) * w;
        }
        r_hat *= v0 * bf;
        let e1 = c * s1 * log / n;
        let e2 = c * s2 * log / n;
        let p = 2.0 * alpha / (2.0 * alpha + 1.0);
        let mid = e2.powf(p) * (bf.powf((2.0 * alpha - 1.0) / (2.0 * alpha + 1.0)) + 1.0);
        let tail = (1.0 + i.t * bf) / n;
        let lead = i.constants.decay * i.lipschitz;
        let bound = lead
            * (bf * e1
                + r_hat * e1.sqrt()
                + mid
                + r_hat.powf(p) * e2.sqrt()
                + (r_hat + i.range / i.lipschitz) * (i.t / n).sqrt()
                + tail);
        let optimal = lead
            * (bf.powf(1.0 - 1.0 / (2.0 * alpha)) * (c * s3 * log / n).sqrt()
                + mid
                + e2.sqrt()
                + i.range / i.lipschitz * (i.t / n).sqrt()
                + tail);
        (opt, r_hat, e1, e2, bound, optimal)
    }
}

fn random_inputs(rng: &mut ChaCha8Rng) -> BoundInputs {
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
    inp.ranks = Some(dims.windows(2).map(|w| rng.random_range(1..=w[0].min(w[1]))).collect());
    inp.decay = Some((rng.random_range(0.1..2.0), rng.random_range(0.6..3.0)));
    inp
}

#[test]
fn evaluators_agree_with_reference_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for _ in 0..20 {
        let inp = random_inputs(&mut rng);
        let o = Oracle(&inp);
        assert!(rel_close(standard_gap_bound(&inp).unwrap(), o.standard(), 1e-12));
        assert!(rel_close(adv_gap_bound_full(&inp).unwrap(), o.full(), 1e-12));
        assert!(rel_close(adv_gap_bound_lowrank(&inp).unwrap(), o.lowrank(), 1e-12));
        let d = adv_gap_bound_decay(&inp).unwrap();
        let (opt, r_hat, e1, e2, bound, optimal) = o.decay();
        assert_eq!(d.optimal_ranks, opt);
        for (got, want) in [(d.r_hat, r_hat), (d.e1, e1), (d.e2, e2), (d.bound, bound), (d.optimal_bound, optimal)] {
            assert!(rel_close(got, want, 1e-12), "{got} vs {want}");
        }
    }
}

#[test]
fn doubling_channels_scales_complexity_by_sqrt_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for _ in 0..10 {
        let a = random_inputs(&mut rng);
        let mut b = a.clone();
        b.c *= 2;
        let full = adv_complexity_full(&b).unwrap() / adv_complexity_full(&a).unwrap();
        let low = adv_complexity_lowrank(&b).unwrap() / adv_complexity_lowrank(&a).unwrap();
        assert!((full - 2f64.sqrt()).abs() < 1e-12);
        assert!((low - 2f64.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn single_channel_full_bound_counts_matrix_parameters() {
    let mut inp = BoundInputs::new(400, 1, vec![5, 7, 3]);
    inp.b_x = 2.0;
    let expected = 2.0 / 20.0 * ((35.0 + 21.0) * (3.0f64 * 3.0).ln()).sqrt();
    assert!(rel_close(adv_complexity_full(&inp).unwrap(), expected, 1e-14));
}

#[test]
fn square_network_low_rank_complexity_is_smaller() {
    let mut inp = BoundInputs::new(1000, 28, vec![28; 4]);
    inp.ranks = Some(vec![4; 3]);
    let low = adv_complexity_lowrank(&inp).unwrap();
    let full = adv_complexity_full(&inp).unwrap();
    assert!(low < full, "{low} vs {full}");
    // the comparison is strict in the radicals: 3 * 4 * 56 * ln 36 against 3 * 784 * ln 12
    let ratio = ((3.0 * 4.0 * 56.0 * 36f64.ln()) / (3.0 * 784.0 * 12f64.ln())).sqrt();
    assert!(rel_close(low / full, ratio, 1e-13));
}

#[test]
fn decay_example_matches_hand_arithmetic() {
    // V0 = 1, α = 1, L = 3, B_l = 1, B_f = 10, d_l = 28, c = 28, N = 1000
    let mut inp = BoundInputs::new(1000, 28, vec![28; 4]);
    inp.b_x = 10.0;
    inp.decay = Some((1.0, 1.0));
    let d = adv_gap_bound_decay(&inp).unwrap();
    // ceil(3 * 10) = 30 is capped by the width 28
    assert_eq!(d.optimal_ranks, vec![28, 28, 28]);
    assert!(rel_close(d.r_hat, 30.0 / 29.0, 1e-14));
    // E1 = 28/1000 * 3 * 28 * 56 * ln(270000 / sqrt(28))
    let e1 = 28.0 / 1000.0 * 4704.0 * (270000.0 / 28f64.sqrt()).ln();
    assert!(rel_close(d.e1, e1, 1e-13));
    assert!(rel_close(e1, 1427.767956146791, 1e-12), "{e1}");
}

#[test]
fn large_alpha_drives_optimal_ranks_down() {
    let mut inp = BoundInputs::new(500, 4, vec![10, 10, 10]);
    // L V0 B_f / B_l = 2 * 0.4 * 1 / 1 < 1
    inp.decay = Some((0.4, 50.0));
    assert_eq!(adv_gap_bound_decay(&inp).unwrap().optimal_ranks, vec![1, 1]);
    // above 1 the ceiling settles at 2
    inp.decay = Some((3.0, 500.0));
    assert_eq!(adv_gap_bound_decay(&inp).unwrap().optimal_ranks, vec![2, 2]);
    inp.decay = Some((3.0, 0.6));
    assert_eq!(adv_gap_bound_decay(&inp).unwrap().optimal_ranks, vec![10, 10]);
}

#[test]
fn r_hat_decreases_in_every_rank() {
    let mut inp = BoundInputs::new(500, 4, vec![12, 12, 12, 12]);
    inp.decay = Some((1.0, 1.3));
    let mut last = f64::INFINITY;
    for r in 1..=12 {
        inp.ranks = Some(vec![r; 3]);
        let v = adv_gap_bound_decay(&inp).unwrap().r_hat;
        assert!(v < last);
        last = v;
    }
    inp.decay = Some((1.0, 0.5));
    assert!(adv_gap_bound_decay(&inp).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_are_monotone_in_inverse_n_and_caps(seed in any::<u64>(), grow in 1.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inp = random_inputs(&mut rng);
        let evals = |i: &BoundInputs| {
            [
                standard_gap_bound(i).unwrap(),
                adv_gap_bound_full(i).unwrap(),
                adv_gap_bound_lowrank(i).unwrap(),
            ]
        };
        let base = evals(&inp);
        let mut more_n = inp.clone();
        more_n.n = (inp.n as f64 * grow).ceil() as usize;
        let mut bigger_cap = inp.clone();
        bigger_cap.layer_caps[0] *= grow;
        let mut bigger_x = inp.clone();
        bigger_x.b_x *= grow;
        for (b, n) in base.iter().zip(evals(&more_n)) {
            prop_assert!(n <= *b);
        }
        for other in [evals(&bigger_cap), evals(&bigger_x)] {
            for (b, v) in base.iter().zip(other) {
                prop_assert!(v >= *b);
            }
        }
        let mut more_ranks = inp.clone();
        let ranks = more_ranks.ranks.as_mut().unwrap();
        let cap = inp.dims[0].min(inp.dims[1]);
        ranks[0] = (ranks[0] + 1).min(cap);
        prop_assert!(adv_gap_bound_lowrank(&more_ranks).unwrap() >= base[2]);
    }
}

#[test]
fn compression_certificate_covers_observed_distance() {
    let data = synth_dataset(&SynthConfig::new(92, 200, 6, 4, 2)).unwrap();
    let attacks = [
        AttackConfig::new(AttackKind::L2Fgm, 0.1),
        AttackConfig::new(AttackKind::Fgsm, 0.05),
        AttackConfig::new(AttackKind::L2Pgd, 0.1),
        AttackConfig::new(AttackKind::LinfPgd, 0.05),
        AttackConfig::none(),
    ];
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let model = TnnModel::random(&[6, 8, 8, 8], OrthogonalTransform::dct(4), &mut rng).unwrap();
        let ranks: Vec<usize> = (0..3).map(|_| rng.random_range(1..=6)).collect();
        let attack = attacks[seed as usize % attacks.len()];
        let rep = compress_and_certify(&model, &ranks, &data, &attack).unwrap();
        assert!(rep.delta > 0.0);
        assert!(rep.observed <= rep.spectral_certificate, "seed {seed}");
        assert!(rep.spectral_certificate <= rep.certificate * (1.0 + 1e-12), "seed {seed}");
        let full = compress_and_certify(&model, &[6, 8, 8], &data, &attack).unwrap();
        assert_eq!((full.delta, full.certificate, full.observed), (0.0, 0.0, 0.0));
    }
}

#[test]
fn compression_rejects_bad_ranks() {
    let data = synth_dataset(&SynthConfig::new(93, 20, 6, 4, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = TnnModel::random(&[6, 8, 8], OrthogonalTransform::dct(4), &mut rng).unwrap();
    assert!(compress_and_certify(&model, &[7, 2], &data, &AttackConfig::none()).is_err());
    assert!(compress_and_certify(&model, &[0, 2], &data, &AttackConfig::none()).is_err());
}
