//! Central finite-difference checks for every primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const H: f64 = 1e-5;

fn fd(params: &ParameterSet, f: &dyn Fn(&ParameterSet) -> f64) -> Vec<Vec<f64>> {
    let mut p = params.clone();
    let mut out = Vec::new();
    for i in 0..p.len() {
        let mut gi = Vec::with_capacity(p.get(i).len());
        for j in 0..p.get(i).len() {
            let orig = p.get(i).data[j];
            p.get_mut(i).data[j] = orig + H;
            let up = f(&p);
            p.get_mut(i).data[j] = orig - H;
            let down = f(&p);
            p.get_mut(i).data[j] = orig;
            gi.push((up - down) / (2.0 * H));
        }
        out.push(gi);
    }
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-10)
}

/// Builds params from `shapes`, then checks `build` (which must return a
/// scalar) against finite differences.
fn check(shapes: &[&[usize]], positive: bool, build: impl Fn(&mut Graph, &[Var]) -> Var) {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        for (i, s) in shapes.iter().enumerate() {
            let n: usize = s.iter().product();
            let data = (0..n)
                .map(|_| {
                    if positive {
                        rng.random_range(0.5..2.0)
                    } else {
                        rng.random_range(-1.5..1.5)
                    }
                })
                .collect();
            params.insert(format!("p{i}"), Tensor::new(s.to_vec(), data).unwrap()).unwrap();
        }
        let eval = |p: &ParameterSet| -> (Graph, Var) {
            let mut g = Graph::new();
            let vars: Vec<Var> = (0..p.len()).map(|i| g.param(p, i)).collect();
            let out = build(&mut g, &vars);
            (g, out)
        };
        let (g, root) = eval(&params);
        let analytic = g.backward(root, &params).unwrap();
        let numeric = fd(&params, &|p| {
            let (g, r) = eval(p);
            g.value(r).item()
        });
        for (a, n) in analytic.0.iter().zip(&numeric) {
            let e = rel_err(&a.data, n);
            assert!(e < 1e-4, "seed {seed}: rel err {e}\n{:?}\n{:?}", a.data, n);
        }
    }
}

/// Weighted sum with fixed coefficients so every output entry matters.
fn weigh(g: &mut Graph, v: Var) -> Var {
    let n = g.value(v).len();
    let shape = g.shape(v).to_vec();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
    let w = g.input(Tensor::new(shape, w).unwrap());
    let m = g.mul(v, w).unwrap();
    g.sum(m)
}

#[test]
fn grad_dense() {
    check(&[&[4, 3], &[3, 5], &[5]], false, |g, v| {
        let y = g.dense(v[0], v[1], v[2]).unwrap();
        weigh(g, y)
    });
}

#[test]
fn grad_conv_dilations() {
    for dil in [1, 2, 3] {
        check(&[&[2, 7, 3], &[3, 3, 4], &[4]], false, move |g, v| {
            let y = g.conv1d_causal(v[0], v[1], v[2], dil).unwrap();
            weigh(g, y)
        });
    }
}

#[test]
fn grad_unaries() {
    check(&[&[3, 4]], false, |g, v| {
        let a = g.sigmoid(v[0]);
        let b = g.tanh(v[0]);
        let c = g.softplus(v[0]);
        let d = g.exp(v[0]);
        let s1 = g.add(a, b).unwrap();
        let s2 = g.mul(c, d).unwrap();
        let s = g.sub(s1, s2).unwrap();
        weigh(g, s)
    });
    check(&[&[3, 4]], true, |g, v| {
        let l = g.log(v[0]);
        weigh(g, l)
    });
    // relu away from the kink
    check(&[&[3, 4]], true, |g, v| {
        let shifted = g.offset(v[0], -1.2);
        let r = g.relu(shifted);
        weigh(g, r)
    });
}

#[test]
fn grad_reductions_and_mse() {
    check(&[&[3, 4], &[3, 4]], false, |g, v| {
        let m = g.mse(v[0], v[1]).unwrap();
        let s = g.sum_last(v[0]).unwrap();
        let s = weigh(g, s);
        let mean = g.mean(v[1]);
        let t = g.add(m, s).unwrap();
        let t = g.add(t, mean).unwrap();
        g.scale(t, 0.7)
    });
}

#[test]
fn grad_concat_slice_reshape() {
    check(&[&[2, 3, 2], &[2, 1, 2]], false, |g, v| {
        let c = g.concat(&[v[0], v[1], v[0]], 1).unwrap();
        let s = g.slice(c, 1, 2, 3).unwrap();
        let r = g.reshape(s, &[2, 6]).unwrap();
        let c2 = g.concat(&[r, r], 0).unwrap();
        weigh(g, c2)
    });
}

#[test]
fn grad_gaussian_sample() {
    check(&[&[2, 3], &[2, 3]], false, |g, v| {
        let noise = vec![0.3, -1.2, 0.8, 1.5, -0.4, 0.1];
        let z = g.gaussian_sample(v[0], v[1], noise).unwrap();
        weigh(g, z)
    });
}

#[test]
fn mse_gradient_at_three() {
    let mut p = ParameterSet::new();
    p.insert("x", Tensor::new(vec![1], vec![3.0]).unwrap()).unwrap();
    let mut g = Graph::new();
    let x = g.param(&p, 0);
    let zero = g.input(Tensor::zeros(&[1]));
    let l = g.mse(x, zero).unwrap();
    let grads = g.backward(l, &p).unwrap();
    assert_eq!(grads.0[0].data, vec![6.0]);
}

#[test]
fn identity_kernel_and_identity_dense() {
    let mut g = Graph::new();
    let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect();
    let x = g.input(Tensor::new(vec![2, 6, 1], data.clone()).unwrap());
    let w = g.input(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.conv1d_causal(x, w, b, 1).unwrap();
    assert_eq!(g.value(y).data, data);

    let x = g.input(Tensor::new(vec![3, 4], data.clone()).unwrap());
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 4 + i] = 1.0;
    }
    let w = g.input(Tensor::new(vec![4, 4], eye).unwrap());
    let b = g.input(Tensor::zeros(&[4]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data, data);
}

#[test]
fn causal_conv_never_looks_ahead() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (nt, cin, cout) = (9, 2, 3);
    let x: Vec<f64> = (0..nt * cin).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..3 * cin * cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let run = |x: &[f64]| {
        let mut g = Graph::new();
        let xv = g.input(Tensor::new(vec![1, nt, cin], x.to_vec()).unwrap());
        let wv = g.input(Tensor::new(vec![3, cin, cout], w.clone()).unwrap());
        let bv = g.input(Tensor::zeros(&[cout]));
        let y = g.conv1d_causal(xv, wv, bv, 2).unwrap();
        g.value(y).data.clone()
    };
    let base = run(&x);
    for t in 0..nt {
        let mut xp = x.clone();
        xp[t * cin] += 5.0;
        let y = run(&xp);
        for s in 0..t {
            for c in 0..cout {
                assert_eq!(y[s * cout + c], base[s * cout + c], "t={t} s={s}");
            }
        }
    }
}

#[test]
fn gaussian_sample_collapses_to_mean() {
    let mut g = Graph::new();
    let m = g.input(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    let lv = g.input(Tensor::new(vec![3], vec![-40.0; 3]).unwrap());
    let z = g.gaussian_sample(m, lv, vec![2.5, -3.0, 1.0]).unwrap();
    for (a, b) in g.value(z).data.iter().zip([1.0, -2.0, 0.5]) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn shape_errors_report_both_shapes() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[3, 2]));
    let msg = g.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    let p = ParameterSet::new();
    assert!(g.backward(a, &p).is_err());
}

#[test]
fn adam_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = ParameterSet::new();
        p.insert_uniform("w", &[3, 2], 3, &mut rng).unwrap();
        p.insert_uniform("b", &[2], 3, &mut rng).unwrap();
        let mut st = AdamState::new(&p);
        let x = Tensor::new(vec![4, 3], (0..12).map(|i| i as f64 / 7.0).collect()).unwrap();
        for _ in 0..10 {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let w = g.param(&p, 0);
            let b = g.param(&p, 1);
            let y = g.dense(xv, w, b).unwrap();
            let t = g.input(Tensor::zeros(&[4, 2]));
            let l = g.mse(y, t).unwrap();
            let grads = g.backward(l, &p).unwrap();
            adam_step(&mut p, &grads, 1e-2, &mut st).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}
