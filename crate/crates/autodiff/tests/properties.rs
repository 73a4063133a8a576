use proptest::prelude::*;
use trade_autodiff::Graph;

proptest! {
    #[test]
    fn softmax_is_shift_invariant(vals in prop::collection::vec(-20.0f64..20.0, 1..8), c in -50.0f64..50.0) {
        let mut g = Graph::<f64>::new();
        let n = vals.len();
        let x = g.constant(vec![n], vals.clone()).unwrap();
        let shifted = g.constant(vec![n], vals.iter().map(|v| v + c).collect()).unwrap();
        let a = g.softmax(x, 0).unwrap();
        let b = g.softmax(shifted, 0).unwrap();
        for (p, q) in g.value(a).iter().zip(g.value(b)) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        let total: f64 = g.value(a).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_positive(x in -700.0f64..700.0) {
        let mut g = Graph::<f64>::new();
        let v = g.constant(vec![1], vec![x]).unwrap();
        let y = g.softplus(v);
        prop_assert!(g.value(y)[0] >= 0.0);
        if x > -30.0 {
            prop_assert!(g.value(y)[0] > 0.0);
        }
    }

    #[test]
    fn forward_and_backward_are_bit_reproducible(vals in prop::collection::vec(-3.0f64..3.0, 6)) {
        let run = || {
            let mut g = Graph::<f64>::new();
            let x = g.variable(vec![2, 3], vals.clone()).unwrap();
            let w = g.constant(vec![3, 2], vec![0.3, -0.2, 0.5, 0.9, -1.1, 0.4]).unwrap();
            let h = g.matmul(x, w).unwrap();
            let t = g.tanh(h);
            let s = g.logsumexp(t, 1).unwrap();
            let l = g.sum(s);
            g.backward(l).unwrap();
            (g.item(l).to_bits(), g.grad(x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}
