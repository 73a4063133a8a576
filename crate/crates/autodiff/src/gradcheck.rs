//! Central finite differences for checking backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Graph, Var};

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`. The floor keeps coordinates whose true
/// gradient is zero from dividing round-off noise by zero.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest coordinate-wise [`relative_error`] and the index where it occurs.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, usize) {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .enumerate()
        .fold((0.0, 0), |(best, at), (i, e)| if e > best { (e, i) } else { (best, at) })
}

/// A graph input for [`check_graph`].
#[derive(Clone, Debug)]
pub struct CheckInput {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl CheckInput {
    pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Self {
        let n = shape.iter().product();
        CheckInput {
            shape: shape.to_vec(),
            values: (0..n).map(|_| rng.random_range(lo..hi)).collect(),
        }
    }
}

/// Worst coordinate found by [`check_graph`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GraphCheck {
    pub worst: f64,
    pub input: usize,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Contracts the output of `build` with fixed random weights, runs backward
/// and compares every input's gradient with central differences.
pub fn check_graph<F>(inputs: &[CheckInput], build: F, h: f64, floor: f64) -> GraphCheck
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let wrng = ChaCha8Rng::seed_from_u64(99);
    let eval = |vals: &[Vec<f64>], track: bool, weights: &mut Option<Vec<f64>>| {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = inputs
            .iter()
            .zip(vals)
            .map(|(inp, v)| {
                if track {
                    g.variable(inp.shape.clone(), v.clone())
                } else {
                    g.constant(inp.shape.clone(), v.clone())
                }
                .expect("input shape matches its values")
            })
            .collect();
        let out = build(&mut g, &vars);
        let n = g.value(out).len();
        let mut r = wrng.clone();
        let w = weights.get_or_insert_with(|| (0..n).map(|_| r.random_range(-1.0..1.0)).collect());
        let wv = g.constant(g.shape(out).to_vec(), w.clone()).expect("weights match the output");
        let prod = g.mul(out, wv).expect("same shapes");
        let loss = g.sum(prod);
        (g, vars, loss)
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|i| i.values.clone()).collect();
    let mut weights = None;
    let (mut g, vars, loss) = eval(&base, true, &mut weights);
    g.backward(loss).expect("scalar loss");
    let mut found = GraphCheck::default();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; base[k].len()]);
        let numeric = central_difference(
            |x| {
                let mut vals = base.clone();
                vals[k] = x.to_vec();
                let (g, _, loss) = eval(&vals, false, &mut weights.clone());
                g.item(loss)
            },
            &base[k],
            h,
        );
        let (err, at) = max_relative_error(&analytic, &numeric, floor);
        if err >= found.worst {
            found = GraphCheck {
                worst: err,
                input: k,
                coordinate: at,
                analytic: analytic[at],
                numeric: numeric[at],
            };
        }
    }
    found
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

/// Every differentiable op of [`Graph`] checked once on random inputs
/// (step 1e-5, floor 1e-6). Returns one entry per op.
pub fn op_suite(seed: u64) -> Vec<(&'static str, GraphCheck)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |shape: &[usize], lo: f64, hi: f64| CheckInput::uniform(&mut r, shape, lo, hi);
    let mask = [false, true, true, false, false, true, false, false, false];
    let bw = [1.0, 2.0, 4.0, 8.0, 16.0];
    let cases: Vec<(&'static str, Vec<CheckInput>, Build)> = vec![
        ("add", vec![u(&[2, 3, 4], -2.0, 2.0), u(&[3, 1], -2.0, 2.0)], Box::new(|g, v| g.add(v[0], v[1]).unwrap())),
        ("sub", vec![u(&[2, 3, 4], -2.0, 2.0), u(&[4], -2.0, 2.0)], Box::new(|g, v| g.sub(v[0], v[1]).unwrap())),
        ("mul", vec![u(&[3, 4], -2.0, 2.0), u(&[3, 4], -2.0, 2.0)], Box::new(|g, v| g.mul(v[0], v[1]).unwrap())),
        ("div", vec![u(&[2, 3], -2.0, 2.0), u(&[3], 0.5, 2.0)], Box::new(|g, v| g.div(v[0], v[1]).unwrap())),
        ("neg", vec![u(&[5], -2.0, 2.0)], Box::new(|g, v| g.neg(v[0]))),
        ("exp", vec![u(&[5], -2.0, 2.0)], Box::new(|g, v| g.exp(v[0]))),
        ("log", vec![u(&[5], 0.2, 3.0)], Box::new(|g, v| g.log(v[0]))),
        ("tanh", vec![u(&[5], -2.0, 2.0)], Box::new(|g, v| g.tanh(v[0]))),
        ("sigmoid", vec![u(&[5], -4.0, 4.0)], Box::new(|g, v| g.sigmoid(v[0]))),
        ("softplus", vec![u(&[5], -6.0, 6.0)], Box::new(|g, v| g.softplus(v[0]))),
        ("square", vec![u(&[5], -2.0, 2.0)], Box::new(|g, v| g.square(v[0]))),
        ("sqrt", vec![u(&[5], 0.2, 3.0)], Box::new(|g, v| g.sqrt(v[0]))),
        ("relu", vec![u(&[5], 0.1, 2.0)], Box::new(|g, v| g.relu(v[0]))),
        ("scale", vec![u(&[4], -2.0, 2.0)], Box::new(|g, v| g.scale(v[0], -1.7))),
        ("add_scalar", vec![u(&[4], -2.0, 2.0)], Box::new(|g, v| g.add_scalar(v[0], 0.3))),
        ("sum", vec![u(&[2, 3, 4], -2.0, 2.0)], Box::new(|g, v| g.sum(v[0]))),
        ("mean", vec![u(&[2, 3, 4], -2.0, 2.0)], Box::new(|g, v| g.mean(v[0]))),
        ("sum_axis", vec![u(&[2, 3, 4], -2.0, 2.0)], Box::new(|g, v| g.sum_axis(v[0], 1).unwrap())),
        ("mean_axis", vec![u(&[2, 3, 4], -2.0, 2.0)], Box::new(|g, v| g.mean_axis(v[0], 2).unwrap())),
        ("softmax", vec![u(&[2, 3, 4], -3.0, 3.0)], Box::new(|g, v| g.softmax(v[0], 2).unwrap())),
        ("log_softmax", vec![u(&[2, 3, 4], -3.0, 3.0)], Box::new(|g, v| g.log_softmax(v[0], 1).unwrap())),
        ("logsumexp", vec![u(&[2, 3, 4], -3.0, 3.0)], Box::new(|g, v| g.logsumexp(v[0], 2).unwrap())),
        ("matmul", vec![u(&[2, 3, 4], -1.0, 1.0), u(&[2, 4, 2], -1.0, 1.0)], Box::new(|g, v| g.matmul(v[0], v[1]).unwrap())),
        ("transpose", vec![u(&[2, 3, 4], -1.0, 1.0)], Box::new(|g, v| g.transpose(v[0]).unwrap())),
        ("reshape", vec![u(&[2, 6], -1.0, 1.0)], Box::new(|g, v| g.reshape(v[0], vec![3, 4]).unwrap())),
        ("concat", vec![u(&[2, 1, 3], -1.0, 1.0), u(&[2, 2, 3], -1.0, 1.0)], Box::new(|g, v| g.concat(&[v[0], v[1]], 1).unwrap())),
        ("slice", vec![u(&[2, 5, 3], -1.0, 1.0)], Box::new(|g, v| g.slice(v[0], 1, 1, 3).unwrap())),
        ("where_mask", vec![u(&[2, 3, 3], -1.0, 1.0)], Box::new(move |g, v| g.where_mask(v[0], &mask, &[3, 3], -5.0).unwrap())),
        ("gather_last", vec![u(&[2, 2, 3], -1.0, 1.0)], Box::new(|g, v| g.gather_last(v[0], &[2, 0, 1, 1]).unwrap())),
        (
            "layer_norm",
            vec![u(&[2, 3, 6], -2.0, 2.0), u(&[6], 0.5, 1.5), u(&[6], -0.5, 0.5)],
            Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()),
        ),
        (
            "dropout",
            vec![u(&[4, 5], -1.0, 1.0)],
            Box::new(|g, v| g.dropout(v[0], 0.3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()),
        ),
        (
            "kernel_mean",
            vec![u(&[5, 3], -1.5, 1.5), u(&[4, 3], -1.5, 1.5)],
            Box::new(move |g, v| g.kernel_mean(v[0], v[1], &bw, false).unwrap()),
        ),
    ];
    let mut out: Vec<_> = cases
        .into_iter()
        .map(|(name, inputs, build)| (name, check_graph(&inputs, build, 1e-5, 1e-6)))
        .collect();
    out.push(("straight_through", straight_through_case(&mut r)));
    out
}

// The forward value is piecewise constant, so the backward rule is checked
// against differences of the soft path it stands in for.
fn straight_through_case(r: &mut ChaCha8Rng) -> GraphCheck {
    let logits: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
    let build = |g: &mut Graph<f64>, v: Var, hard: bool| {
        let s = g.softmax(v, 0).expect("rank 1");
        let s = if hard {
            g.straight_through(s, vec![0.0, 1.0, 0.0, 0.0]).expect("same size")
        } else {
            s
        };
        let wv = g.constant(vec![4], w.clone()).expect("4 weights");
        let p = g.mul(s, wv).expect("same shapes");
        g.sum(p)
    };
    let mut g = Graph::<f64>::new();
    let v = g.variable(vec![4], logits.clone()).expect("4 logits");
    let loss = build(&mut g, v, true);
    g.backward(loss).expect("scalar loss");
    let analytic = g.grad(v).expect("tracked").to_vec();
    let numeric = central_difference(
        |x| {
            let mut g = Graph::<f64>::new();
            let v = g.constant(vec![4], x.to_vec()).expect("4 logits");
            let l = build(&mut g, v, false);
            g.item(l)
        },
        &logits,
        1e-5,
    );
    let (worst, at) = max_relative_error(&analytic, &numeric, 1e-6);
    GraphCheck { worst, input: 0, coordinate: at, analytic: analytic[at], numeric: numeric[at] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_derivative() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn every_op_passes() {
        for (name, c) in op_suite(7) {
            assert!(c.worst < 1e-5, "{name}: {c:?}");
        }
    }

    #[test]
    fn floor_guards_zero_gradients() {
        assert!(relative_error(0.0, 1e-12, 1e-6) < 1e-5);
        assert_eq!(max_relative_error(&[1.0, 2.0], &[1.0, 2.2], 1e-6).1, 1);
    }
}
