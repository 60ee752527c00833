use approx::assert_abs_diff_eq;
use fasttab_core::numerics::{
    gelu, grad_check, multi_head_attention, ConvGeom, Rng, SelfAttention, ParamStore, Tape, Tensor,
};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn linear_examples() {
    let tape = Tape::inference();
    let x = tape.constant(Tensor::matrix(&[&[1.0, 2.0]]));
    let w = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let y = tape.linear(x, w, Some(b)).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 4.0]);

    let x = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]));
    let w = tape.constant(Tensor::eye(2));
    let y = tape.linear(x, w, None).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 0.0, 0.0, 1.0]);

    let x = tape.constant(Tensor::matrix(&[&[1.0, 2.0]]));
    let w = tape.constant(Tensor::matrix(&[&[1.0, 1.0], &[2.0, 0.0]]));
    let y = tape.linear(x, w, None).unwrap();
    // hand multiply: [1·1+2·1, 1·2+2·0]
    assert_eq!(tape.value(y).data(), &[3.0, 2.0]);
}

#[test]
fn linear_shape_error_names_both_shapes() {
    let tape = Tape::inference();
    let x = tape.constant(Tensor::zeros(&[1, 3]));
    let w = tape.constant(Tensor::zeros(&[2, 2]));
    let err = tape.linear(x, w, None).unwrap_err().to_string();
    assert!(err.contains("[1, 3]") && err.contains("[2, 2]"), "{err}");
}

#[test]
fn softmax_examples() {
    let tape = Tape::inference();
    let s = |v: Vec<f64>| {
        let x = tape.constant(Tensor::vector(v));
        tape.to_tensor(tape.softmax(x).unwrap()).into_data()
    };
    close(&s(vec![0.0, 0.0, 0.0]), &[1.0 / 3.0; 3], 1e-15);
    assert_eq!(s(vec![123.4]), vec![1.0]);
    close(&s(vec![2f64.ln(), 0.0, 0.0]), &[0.5, 0.25, 0.25], 1e-15);
    let empty = tape.constant(Tensor::zeros(&[0]));
    assert!(tape.softmax(empty).is_err());
}

#[test]
fn layernorm_examples() {
    let tape = Tape::inference();
    let g = tape.constant(Tensor::ones(&[2]));
    let b = tape.constant(Tensor::zeros(&[2]));
    let x = tape.constant(Tensor::vector(vec![5.0, 5.0]));
    assert_eq!(tape.value(tape.layernorm(x, g, b, 1e-5).unwrap()).data(), &[0.0, 0.0]);

    let x = tape.constant(Tensor::vector(vec![1.0, -1.0]));
    let y = tape.layernorm(x, g, b, 1e-12).unwrap();
    close(tape.value(y).data(), &[1.0, -1.0], 1e-9);

    let g0 = tape.constant(Tensor::zeros(&[2]));
    let c = tape.constant(Tensor::full(&[2], 0.7));
    let x = tape.constant(Tensor::vector(vec![3.0, -8.0]));
    assert_eq!(tape.value(tape.layernorm(x, g0, c, 1e-5).unwrap()).data(), &[0.7, 0.7]);
}

#[test]
fn gelu_examples() {
    assert_eq!(gelu(0.0), 0.0);
    assert!(gelu(-40.0).abs() < 1e-300);
    assert_abs_diff_eq!(gelu(40.0), 40.0, epsilon = 1e-12);
    // Φ(1) = 0.841344746068542948...
    assert_abs_diff_eq!(gelu(1.0), 0.841_344_746_068_543, epsilon = 1e-12);
}

#[test]
fn conv_examples() {
    let tape = Tape::inference();
    let x = tape.constant(Tensor::from_fn(&[1, 3, 3], |i| i as f64));
    let w = tape.constant(Tensor::ones(&[1, 1, 1, 1]));
    let y = tape.conv2d(x, w, None, ConvGeom::new((1, 1), (0, 0), 1)).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    let x = tape.constant(Tensor::ones(&[1, 4, 4]));
    let w = tape.constant(Tensor::ones(&[1, 1, 2, 2]));
    let y = tape.conv2d(x, w, None, ConvGeom::new((2, 2), (0, 0), 1)).unwrap();
    assert_eq!(tape.shape(y), vec![1, 2, 2]);
    assert_eq!(tape.value(y).data(), &[4.0; 4]);

    // cross-correlation: out[i] = x[i-1]·k0 + x[i]·k1 + x[i+1]·k2, zero padded
    let x = tape.constant(Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap());
    let y = tape.conv2d(x, w, None, ConvGeom::new((1, 1), (0, 1), 1)).unwrap();
    assert_eq!(tape.value(y).data(), &[-2.0, -2.0, 2.0]);
    // the flipped kernel gives the true-convolution result [2, 2, -2]
    let w = tape.constant(Tensor::new(vec![1, 1, 1, 3], vec![-1.0, 0.0, 1.0]).unwrap());
    let y = tape.conv2d(x, w, None, ConvGeom::new((1, 1), (0, 1), 1)).unwrap();
    assert_eq!(tape.value(y).data(), &[2.0, 2.0, -2.0]);
}

#[test]
fn conv_rejects_empty_output() {
    let tape = Tape::inference();
    let x = tape.constant(Tensor::ones(&[1, 2, 2]));
    let w = tape.constant(Tensor::ones(&[1, 1, 3, 3]));
    assert!(tape.conv2d(x, w, None, ConvGeom::new((1, 1), (0, 0), 1)).is_err());
    let x = tape.constant(Tensor::ones(&[3, 2, 2]));
    let w = tape.constant(Tensor::ones(&[2, 1, 1, 1]));
    assert!(tape.conv2d(x, w, None, ConvGeom::new((1, 1), (0, 0), 2)).is_err());
}

#[test]
fn attention_single_token_is_value_projection() {
    let mut rng = Rng::new(5);
    let mut store = ParamStore::new();
    let att = SelfAttention::new(&mut store, "a", 4, 2, &mut rng).unwrap();
    let tape = Tape::inference();
    let p = store.bind(&tape);
    let x = tape.constant(Tensor::from_fn(&[1, 4], |i| i as f64 - 1.5));
    let y = att.forward(&tape, &p, x).unwrap();
    let v = att.v.forward(&tape, &p, x).unwrap();
    let expect = att.o.forward(&tape, &p, v).unwrap();
    close(tape.value(y).data(), tape.value(expect).data(), 1e-12);
}

#[test]
fn attention_identical_tokens_identical_rows() {
    let mut rng = Rng::new(6);
    let mut store = ParamStore::new();
    let att = SelfAttention::new(&mut store, "a", 4, 4, &mut rng).unwrap();
    let tape = Tape::inference();
    let p = store.bind(&tape);
    let x = tape.constant(Tensor::from_fn(&[3, 4], |i| (i % 4) as f64 * 0.3));
    let y = tape.to_tensor(att.forward(&tape, &p, x).unwrap());
    for r in 1..3 {
        close(&y.data()[r * 4..r * 4 + 4], &y.data()[0..4], 1e-12);
    }
}

#[test]
fn attention_two_token_closed_form() {
    // q = k = v = x with x = [[1,0],[0,2]], one head, d = 2.
    let tape = Tape::inference();
    let x = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 2.0]]));
    let y = multi_head_attention(&tape, x, x, x, 1).unwrap();
    let s = 1.0 / 2f64.sqrt();
    // scores row 0: [1, 0]·s; row 1: [0, 4]·s
    let w0 = [s.exp() / (s.exp() + 1.0), 1.0 / (s.exp() + 1.0)];
    let e4 = (4.0 * s).exp();
    let w1 = [1.0 / (1.0 + e4), e4 / (1.0 + e4)];
    let expect = [w0[0], 2.0 * w0[1], w1[0], 2.0 * w1[1]];
    close(tape.value(y).data(), &expect, 1e-14);
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut store = ParamStore::new();
    assert!(SelfAttention::new(&mut store, "a", 6, 4, &mut Rng::new(0)).is_err());
}

#[test]
fn attention_is_permutation_equivariant() {
    let mut rng = Rng::new(9);
    let mut store = ParamStore::new();
    let att = SelfAttention::new(&mut store, "a", 4, 2, &mut rng).unwrap();
    let tape = Tape::inference();
    let p = store.bind(&tape);
    let x = Tensor::from_fn(&[3, 4], |_| rng.normal());
    let perm = [2usize, 0, 1];
    let xp = Tensor::from_fn(&[3, 4], |i| x.data()[perm[i / 4] * 4 + i % 4]);
    let y = tape.to_tensor(att.forward(&tape, &p, tape.constant(x)).unwrap());
    let yp = tape.to_tensor(att.forward(&tape, &p, tape.constant(xp)).unwrap());
    for (r, &src) in perm.iter().enumerate() {
        close(&yp.data()[r * 4..r * 4 + 4], &y.data()[src * 4..src * 4 + 4], 1e-12);
    }
}

#[test]
fn grad_check_square() {
    let report = grad_check(
        &[Tensor::scalar(3.0)],
        |t, v| {
            let sq = t.square(v[0]);
            Ok(t.sum(sq))
        },
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");

    let tape = Tape::with_grad();
    let x = tape.variable(Tensor::scalar(3.0));
    let y = tape.square(x);
    let g = tape.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap(), &[6.0]);
}

#[test]
fn grad_of_sum_softmax_is_zero() {
    let tape = Tape::with_grad();
    let x = tape.variable(Tensor::vector(vec![0.3, -1.0, 2.0]));
    let s = tape.softmax(x).unwrap();
    let y = tape.sum(s);
    let g = tape.backward(y).unwrap();
    for v in g.get(x).unwrap() {
        assert!(v.abs() < 1e-15);
    }
}

#[test]
fn grad_check_reports_non_finite() {
    let err = grad_check(
        &[Tensor::scalar(0.0)],
        |t, v| {
            let sq = t.square(v[0]);
            let big = t.scale(sq, 1e308);
            let big = t.scale(big, 1e308);
            Ok(t.sum(big))
        },
        1e-5,
        1e-3,
    );
    assert!(err.is_err());
    assert!(err.unwrap_err().to_string().contains("coordinate 0"));
}

/// Runs the gradient check on a randomly shaped instance of each op.
#[test]
fn every_op_passes_grad_check_on_random_shapes() {
    let mut rng = Rng::new(2024);
    for trial in 0..20 {
        let n = rng.int_range(1, 4);
        let d = rng.int_range(1, 5);
        let k = rng.int_range(1, 4);
        let rand_t = |shape: &[usize], rng: &mut Rng| Tensor::from_fn(shape, |_| rng.normal());
        let weights: Vec<f64> = (0..n * k).map(|_| rng.normal()).collect();
        let wt = Tensor::new(vec![n, k], weights).unwrap();
        let run = |name: &str, theta: Vec<Tensor>, f: &dyn Fn(&Tape<'_>, &[fasttab_core::Var]) -> fasttab_core::Result<fasttab_core::Var>| {
            let wt = wt.clone();
            let report = grad_check(
                &theta,
                |t, v| {
                    let y = f(t, v)?;
                    // Contract with fixed random weights so every output coordinate matters.
                    let shape = t.shape(y);
                    let numel: usize = shape.iter().product();
                    let w = t.constant(Tensor::from_fn(&shape, |i| wt.data()[i % wt.numel()] + 0.1 * (i % numel) as f64));
                    let p = t.mul(y, w)?;
                    Ok(t.sum(p))
                },
                1e-5,
                1e-3,
            )
            .unwrap();
            assert!(report.passed(), "trial {trial} op {name}: {report:?}");
        };
        run("linear", vec![rand_t(&[n, d], &mut rng), rand_t(&[k, d], &mut rng), rand_t(&[k], &mut rng)], &|t, v| t.linear(v[0], v[1], Some(v[2])));
        run("matmul_t", vec![rand_t(&[d, n], &mut rng), rand_t(&[k, d], &mut rng)], &|t, v| t.matmul_t(v[0], v[1], true, true));
        run("matmul", vec![rand_t(&[n, d], &mut rng), rand_t(&[d, k], &mut rng)], &|t, v| t.matmul(v[0], v[1]));
        run("gelu", vec![rand_t(&[n, d], &mut rng)], &|t, v| Ok(t.gelu(v[0])));
        run("tanh", vec![rand_t(&[n, d], &mut rng)], &|t, v| Ok(t.tanh(v[0])));
        run("softmax", vec![rand_t(&[n, d], &mut rng)], &|t, v| t.softmax(v[0]));
        run("layernorm", vec![rand_t(&[n, d + 1], &mut rng), rand_t(&[d + 1], &mut rng), rand_t(&[d + 1], &mut rng)], &|t, v| t.layernorm(v[0], v[1], v[2], 1e-5));
        run("mul_sub_add", vec![rand_t(&[n, d], &mut rng), rand_t(&[n, d], &mut rng)], &|t, v| {
            let a = t.mul(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            t.add(b, v[0])
        });
        run("concat_slice", vec![rand_t(&[n, d], &mut rng), rand_t(&[n, k], &mut rng)], &|t, v| {
            let c = t.concat(&[v[0], v[1]])?;
            let s = t.slice_last(c, 1.min(d), d + k)?;
            t.slice_first(s, 0, n)
        });
        run("transpose_reshape", vec![rand_t(&[n, d], &mut rng)], &|t, v| {
            let tr = t.transpose(v[0])?;
            t.reshape(tr, &[n * d])
        });
        run("square_relu", vec![rand_t(&[n, d], &mut rng)], &|t, v| {
            let r = t.relu(v[0]);
            Ok(t.square(r))
        });
        let targets: Vec<usize> = (0..n).map(|i| (i * 7 + trial) % k).collect();
        let ce_w: Vec<f64> = (0..n).map(|i| if i == 0 { 2.0 } else { 1.0 }).collect();
        run("cross_entropy", vec![rand_t(&[n, k], &mut rng)], &move |t, v| t.cross_entropy(v[0], &targets, &ce_w, n as f64));
        let (cin, groups) = if trial % 2 == 0 { (2, 2) } else { (2, 1) };
        let h = rng.int_range(3, 6);
        let w = rng.int_range(3, 6);
        let stride = (rng.int_range(1, 2), rng.int_range(1, 2));
        run("conv2d", vec![rand_t(&[cin, h, w], &mut rng), rand_t(&[2, cin / groups, 3, 3], &mut rng), rand_t(&[2], &mut rng)], &move |t, v| {
            t.conv2d(v[0], v[1], Some(v[2]), ConvGeom::new(stride, (1, 1), groups))
        });
        run("attention", vec![rand_t(&[n + 1, 4], &mut rng)], &|t, v| multi_head_attention(t, v[0], v[0], v[0], 2));
    }
}

proptest! {
    #[test]
    fn softmax_sums_to_one(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
        let tape = Tape::inference();
        let x = tape.constant(Tensor::vector(v));
        let y = tape.softmax(x).unwrap();
        let y = tape.value(y);
        let s: f64 = y.data().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        prop_assert!(y.data().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn unit_conv_is_identity(c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let tape = Tape::inference();
        let xt = Tensor::from_fn(&[c, h, w], |_| rng.normal());
        let x = tape.constant(xt.clone());
        let k = tape.constant(Tensor::ones(&[c, 1, 1, 1]));
        let y = tape.conv2d(x, k, None, ConvGeom::new((1, 1), (0, 0), c)).unwrap();
        let out = tape.to_tensor(y);
        prop_assert_eq!(out.data(), xt.data());
    }

    #[test]
    fn layernorm_zero_mean(v in proptest::collection::vec(-20.0f64..20.0, 2..30)) {
        let d = v.len();
        let tape = Tape::inference();
        let x = tape.constant(Tensor::vector(v));
        let g = tape.constant(Tensor::from_fn(&[d], |i| 1.0 + i as f64 * 0.1));
        let b = tape.constant(Tensor::zeros(&[d]));
        let y = tape.layernorm(x, g, b, 1e-5).unwrap();
        // mean of the normalised vector (before gamma) is zero; with beta=0 check the unscaled case too
        let g1 = tape.constant(Tensor::ones(&[d]));
        let y1 = tape.layernorm(x, g1, b, 1e-5).unwrap();
        let m: f64 = tape.value(y1).data().iter().sum::<f64>() / d as f64;
        prop_assert!(m.abs() < 1e-9);
        prop_assert!(tape.value(y).is_finite());
    }
}
