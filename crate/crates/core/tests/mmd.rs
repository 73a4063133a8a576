use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trade::mmd::{kernel_eval, mmd2, mmd_penalty, EstimatorKind, KernelSpec, MmdOptions};
use trade::model::{AutoregressiveModel, ForcedHeads};
use trade::nn::Ctx;
use trade::Matrix;
use trade_autodiff::Graph;

fn normal(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let v = (0..n * d).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(n, d, v).unwrap()
}

/// Plain double loop over every pair, no sharing of distances.
fn brute_force(x: &Matrix, y: &Matrix, spec: &KernelSpec, kind: EstimatorKind) -> f64 {
    let skip = kind == EstimatorKind::Unbiased;
    let avg = |a: &Matrix, b: &Matrix, within: bool| {
        let (mut s, mut c) = (0.0, 0usize);
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                if within && i == j {
                    continue;
                }
                s += kernel_eval(a.row(i), b.row(j), spec).unwrap();
                c += 1;
            }
        }
        s / c as f64
    };
    avg(x, x, skip) + avg(y, y, skip) - 2.0 * avg(x, y, false)
}

#[test]
fn matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = KernelSpec::default();
    for trial in 0..40 {
        let n = rng.random_range(2..=50);
        let m = rng.random_range(2..=50);
        let d = rng.random_range(1..=4);
        let x = normal(n, d, 0.0, &mut rng);
        let y = normal(m, d, 0.3 * trial as f64 / 40.0, &mut rng);
        for kind in [EstimatorKind::Biased, EstimatorKind::Unbiased] {
            let fast = mmd2(&x, &y, &spec, kind).unwrap().value;
            let slow = brute_force(&x, &y, &spec, kind);
            assert!((fast - slow).abs() < 1e-12, "{kind} n={n} m={m}: {fast} vs {slow}");
        }
    }
    // smallest legal case
    let x = normal(2, 3, 0.0, &mut rng);
    let y = normal(2, 3, 1.0, &mut rng);
    for kind in [EstimatorKind::Biased, EstimatorKind::Unbiased] {
        assert!((mmd2(&x, &y, &spec, kind).unwrap().value - brute_force(&x, &y, &spec, kind)).abs() < 1e-12);
    }
}

#[test]
fn biased_is_never_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = KernelSpec::default();
    for _ in 0..200 {
        let x = normal(rng.random_range(1..20), 2, 0.0, &mut rng);
        let y = normal(rng.random_range(1..20), 2, rng.random_range(-0.2..0.2), &mut rng);
        assert!(mmd2(&x, &y, &spec, EstimatorKind::Biased).unwrap().value >= 0.0);
    }
}

#[test]
fn shifted_gaussians_are_far_apart() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = normal(500, 1, 0.0, &mut rng);
    let y = normal(500, 1, 5.0, &mut rng);
    let v = mmd2(&x, &y, &KernelSpec::default(), EstimatorKind::Biased).unwrap().value;
    assert!(v > 0.5, "{v}");
}

#[test]
fn estimators_converge() {
    let spec = KernelSpec::default();
    let mut gaps = Vec::new();
    for n in [10, 100, 1000] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let x = normal(n, 1, 0.0, &mut rng);
        let y = normal(n, 1, 0.5, &mut rng);
        let b = mmd2(&x, &y, &spec, EstimatorKind::Biased).unwrap().value;
        let u = mmd2(&x, &y, &spec, EstimatorKind::Unbiased).unwrap().value;
        // the two differ by (mean diagonal − mean off-diagonal)/n per sample,
        // bounded by 2·J/n with J kernel terms
        assert!((b - u).abs() <= 2.0 * 5.0 / n as f64, "n={n}: {b} vs {u}");
        gaps.push((b - u).abs());
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn grows_with_mean_shift() {
    let spec = KernelSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = normal(400, 1, 0.0, &mut rng);
    let base = normal(400, 1, 0.0, &mut ChaCha8Rng::seed_from_u64(7));
    let mut last = -1.0;
    for step in 0..=10 {
        let mu = 0.5 * step as f64;
        let mut y = base.clone();
        y.as_mut_slice().iter_mut().for_each(|v| *v += mu);
        let v = mmd2(&x, &y, &spec, EstimatorKind::Biased).unwrap().value;
        assert!(v > last, "mu={mu}: {v} <= {last}");
        last = v;
    }
}

fn penalty_value(model: &ForcedHeads, real: &Matrix, n_model: usize, seed: u64) -> (f64, f64) {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, true);
    let mut ctx = Ctx::eval(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pen = mmd_penalty(&mut g, &mut ctx, model, real, n_model, &MmdOptions::default(), &mut rng).unwrap();
    let value = g.value(pen)[0];
    g.backward(pen).unwrap();
    let grads = model.params().grads(&g, &p);
    (value, grads[model.mu_id().unwrap().index()][0])
}

#[test]
fn penalty_gradient_matches_common_random_numbers() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let real = normal(500, 1, 0.0, &mut rng);
    let at = |mu: f64| ForcedHeads::mixture(&[vec![1.0]], &[vec![mu]], &[vec![1.0]]).unwrap();
    let (mu, h, n_model) = (0.7, 1e-4, 10_000);
    let (_, grad) = penalty_value(&at(mu), &real, n_model, 9);
    let (up, _) = penalty_value(&at(mu + h), &real, n_model, 9);
    let (down, _) = penalty_value(&at(mu - h), &real, n_model, 9);
    let fd = (up - down) / (2.0 * h);
    assert!(grad > 0.0);
    assert!((grad - fd).abs() <= 0.05 * fd.abs(), "tape {grad} vs finite difference {fd}");
}

#[test]
fn penalty_vanishes_when_samples_equal_the_batch() {
    let model = ForcedHeads::mixture(&[vec![1.0], vec![1.0]], &[vec![0.3], vec![-1.2]], &[vec![1e-300], vec![1e-300]]).unwrap();
    let real = Matrix::new(64, 2, [0.3, -1.2].repeat(64)).unwrap();
    let (v, _) = penalty_value(&model, &real, 64, 1);
    assert!(v.abs() < 1e-12, "{v}");
}
