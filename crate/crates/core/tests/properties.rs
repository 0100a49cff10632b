//! Randomized invariants across the library, driven by proptest.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qnn_core::convolution::{
    conv_direct, conv_matrix_form, correlation_matrix_form, cyclic_shift_matrix, unilateral_shift_matrix, ConvKernel,
    FeatureMap,
};
use qnn_core::encodings::{be_lcu, ve_sum, BlockEncoding, VectorEncoding};
use qnn_core::linalg::{c64, qft, svd, unitary_dilation, CMatrix, CVector, C64};
use qnn_core::network::{classical_forward, random_network, RandomShape};
use qnn_core::nonlinear::{erf_apply_ve, pool_l2sq, PoolingSpec};
use qnn_core::polynomials::{erf_poly, sv_transform, t3, ChebyshevPoly};
use qnn_core::qram::{word_cos, MatrixQramStructure, StatePrepTree};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn matrix(r: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
}

fn state(r: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = CVector::from_vec((0..dim).map(|_| c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect()).unwrap();
    v.normalized("state").unwrap()
}

fn real_state(r: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = CVector::from_real(&(0..dim).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
    v.normalized("state").unwrap()
}

fn kernel(r: &mut ChaCha8Rng, c: usize, d: usize) -> ConvKernel {
    ConvKernel::from_fn(c, d, |_, _, _, _| r.gen_range(-1.0..1.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_mixed_product_and_associativity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c, d) = (matrix(&mut r, 4), matrix(&mut r, 4), matrix(&mut r, 4), matrix(&mut r, 4));
        let lhs = &a.kron(&b) * &c.kron(&d);
        let rhs = (&a * &c).kron(&(&b * &d));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * lhs.frobenius_norm().max(1.0));
        let assoc = a.kron(&b).kron(&c).max_abs_diff(&a.kron(&b.kron(&c)));
        prop_assert!(assoc <= 1e-12);
    }

    #[test]
    fn dilation_is_unitary_and_keeps_the_block(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let m = matrix(&mut r, 1 << n);
        let b = m.scale_re(r.gen_range(0.1..1.0) / m.spectral_norm());
        let w = unitary_dilation(&b).unwrap();
        prop_assert!(w.is_unitary(1e-10));
        prop_assert!(w.top_left(1 << n, 1 << n).max_abs_diff(&b) <= 1e-15);
    }

    #[test]
    fn qft_diagonalizes_the_cyclic_shift(n in 1usize..=6, m in 0usize..64) {
        let dim = 1usize << n;
        let f = qft(n);
        let pf = &cyclic_shift_matrix(dim, m % dim) * &f;
        let omega = |k: usize| C64::from_polar(1.0, -2.0 * PI * ((m * k) % dim) as f64 / dim as f64);
        let expect = CMatrix::from_fn(dim, dim, |i, j| f[(i, j)] * omega(j));
        prop_assert!(pf.max_abs_diff(&expect) <= 1e-10);
    }

    #[test]
    fn sum_with_full_weight_returns_the_first_target(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let (x, y) = (state(&mut r, 1 << n), state(&mut r, 1 << n));
        let out = ve_sum(&VectorEncoding::from_state(&x).unwrap(), &VectorEncoding::from_state(&y).unwrap(), 1.0).unwrap();
        prop_assert!(out.target.as_ref().unwrap().dist(&x) <= 1e-12);
        prop_assert!(out.actual_error().unwrap() <= out.eps_bound + 1e-12);
    }

    #[test]
    fn lcu_of_equal_parts_is_the_part(seed in any::<u64>(), n in 1usize..=3, count in 2usize..=4) {
        let mut r = rng(seed);
        let m = matrix(&mut r, 1 << n);
        let part = BlockEncoding::from_matrix(&m.scale_re(0.9 / m.spectral_norm()), 1.0, 1).unwrap();
        let parts = vec![part.clone(); count];
        let out = be_lcu(&parts, &vec![1.0 / count as f64; count], None).unwrap();
        prop_assert!(out.block.scale_re(out.alpha).max_abs_diff(&part.block) <= 1e-12);
    }

    #[test]
    fn identity_polynomial_fixes_blocks_and_transforms_compose(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let m = matrix(&mut r, 1 << n);
        let be = BlockEncoding::from_matrix(&m.scale_re(0.95 / m.spectral_norm()), 1.0, 1).unwrap();
        let id = sv_transform(&be, &ChebyshevPoly::new(vec![0.0, 1.0])).unwrap();
        prop_assert!(id.block.max_abs_diff(&be.block) <= 1e-10);

        let once = sv_transform(&be, &t3()).unwrap();
        let twice = sv_transform(&once, &t3()).unwrap();
        let mut t9 = vec![0.0; 10];
        t9[9] = 1.0;
        let direct = sv_transform(&be, &ChebyshevPoly::new(t9)).unwrap();
        let (s2, s9) = (svd(&twice.block).unwrap().s, svd(&direct.block).unwrap().s);
        for (a, b) in s2.iter().zip(&s9) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn structure_round_trip_and_rounding_model(seed in any::<u64>(), n in 1usize..=3, d in 4usize..=40) {
        let mut r = rng(seed);
        let m = matrix(&mut r, 1 << n);
        let w = m.scale_re(1.0 / m.spectral_norm());
        let s = MatrixQramStructure::build(&w, d).unwrap();
        let exact = CMatrix::from_fn(1 << n, 1 << n, |i, j| s.unit_columns[j][i] * s.col_norms[j]);
        prop_assert!((&exact - &w).frobenius_norm() <= 1e-10);
        for (a, &b) in s.col_norms.iter().zip(&s.angle_words) {
            prop_assert!((a - word_cos(b, d)).abs() <= PI / (1u64 << d) as f64);
        }
        let back = MatrixQramStructure::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert!(back.reconstruct().max_abs_diff(&s.reconstruct()) <= 1e-10);
    }

    #[test]
    fn tree_updates_match_a_rebuild(seed in any::<u64>(), n in 1usize..=6, k in 1usize..=8) {
        let mut r = rng(seed);
        let mut x = state(&mut r, 1 << n);
        let mut tree = StatePrepTree::build(&x).unwrap();
        for _ in 0..k {
            let i = r.gen_range(0..1usize << n);
            let v = c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            tree = tree.with_update(i, v).unwrap().0;
            let mut vals: Vec<C64> = x.iter().copied().collect();
            vals[i] = v;
            x = CVector::from_vec(vals).unwrap();
        }
        let fresh = StatePrepTree::build(&x).unwrap();
        for node in 1..2 << n {
            prop_assert!((tree.node(node) - fresh.node(node)).abs() <= 1e-12);
        }
    }

    #[test]
    fn conv_operator_norm_facts(seed in any::<u64>(), c in prop::sample::select(vec![1usize, 2]), d in prop::sample::select(vec![1usize, 2, 4])) {
        let mut r = rng(seed);
        let k = kernel(&mut r, c, d);
        let cm = conv_matrix_form(&k, 2);
        let dim = cm.c_mat.dim();
        for row in 0..dim {
            let norm: f64 = (0..dim).map(|j| cm.c_mat[(row, j)].norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(norm <= cm.spectral_norm * (1.0 + 1e-12));
        }
        prop_assert!(k.l2().powi(2) <= c as f64 * cm.spectral_norm.powi(2) * (1.0 + 1e-12));
        prop_assert!(cm.kernel_l1 / cm.spectral_norm <= d as f64 * (c as f64).powf(1.5) * (1.0 + 1e-12));

        let noise: Vec<f64> = (0..c * 16).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x = FeatureMap::from_fn(c, 4, |ch, row, col| noise[ch * 16 + row * 4 + col]);
        let y = cm.c_mat.apply(&x.vectorize());
        prop_assert!(y.dist(&conv_direct(&k, &x).vectorize()) <= 1e-12);

        // Correlation with Qᵀ is the flipped-kernel convolution shifted by D−1.
        let corr = FeatureMap::from_vector(&correlation_matrix_form(&k, 2).c_mat.apply(&x.vectorize()), c, 4);
        let flip = conv_direct(&k.flipped(), &x);
        let s = k.width() - 1;
        for ch in 0..c {
            for row in 0..4 - s {
                for col in 0..4 - s {
                    prop_assert!((corr.get(ch, row, col) - flip.get(ch, row + s, col + s)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn pooling_preserves_mass(seed in any::<u64>(), n in 1usize..=6, bins_log in 0usize..=3) {
        let mut r = rng(seed);
        let bins = 1usize << bins_log.min(n);
        let x = state(&mut r, 1 << n).scale_re(r.gen_range(0.1..3.0));
        let y = pool_l2sq(&x, PoolingSpec::new(bins, 1 << n).unwrap()).unwrap();
        let total: f64 = y.iter().sum();
        prop_assert!((total - x.norm().powi(2)).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn erf_keeps_zero_entries_zero(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let mut vals: Vec<f64> = real_state(&mut r, 1 << n).re();
        let zeroed: Vec<usize> = (0..vals.len()).filter(|_| r.gen_bool(0.3)).filter(|&i| i != 0).collect();
        for &i in &zeroed {
            vals[i] = 0.0;
        }
        vals[0] = vals[0].abs().max(0.2);
        let x = CVector::from_real(&vals).unwrap().normalized("x").unwrap();
        let out = erf_apply_ve(&VectorEncoding::from_state(&x).unwrap(), 0.8, 1e-8).unwrap();
        let t = out.target.as_ref().unwrap();
        for &i in &zeroed {
            prop_assert_eq!(t[i], c64(0.0, 0.0));
        }
        prop_assert!(out.actual_error().unwrap() <= out.eps_bound + 1e-9);
    }

    #[test]
    fn classical_forward_is_a_distribution(seed in 0u64..1000, k in 1usize..=2, c_bins in prop::sample::select(vec![2usize, 4])) {
        let net = random_network(RandomShape { k, c_bins, ..Default::default() }, seed).unwrap();
        let x = net.input_or_random().unwrap();
        let y = classical_forward(&net, &x).unwrap().y;
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(y.iter().all(|&p| p >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn erf_poly_lipschitz_and_ratio(m in prop::sample::select(vec![0.5, 0.8, 1.6]), eps in prop::sample::select(vec![1e-4, 1e-6, 1e-8])) {
        let p = erf_poly(m, eps, 1.0).unwrap();
        prop_assert_eq!(p.eval(0.0), 0.0);
        let lip = 2.0 * m / PI.sqrt() + 10.0 * eps;
        let h = 1e-4;
        let mut x = -1.0;
        while x + h <= 1.0 {
            prop_assert!(((p.eval(x + h) - p.eval(x)) / h).abs() <= lip);
            x += h;
        }
        // min |erf(mx)/x| ≥ 1/2 on (0, 1], log-spaced.
        for i in 0..=400 {
            let x = 10f64.powf(-8.0 + 8.0 * i as f64 / 400.0);
            prop_assert!(libm::erf(m * x) / x >= 0.5);
        }
    }
}

#[test]
fn shift_powers_close_the_cycle() {
    for n in 1..=5 {
        let dim = 1usize << n;
        assert_eq!(cyclic_shift_matrix(dim, dim).max_abs_diff(&CMatrix::identity(dim)), 0.0);
        assert_eq!(unilateral_shift_matrix(dim, dim).max_abs_diff(&CMatrix::zeros(dim, dim)), 0.0);
        let q = unilateral_shift_matrix(dim, 1);
        let qn = (0..dim).fold(CMatrix::identity(dim), |acc, _| &acc * &q);
        assert_eq!(qn.max_abs_diff(&CMatrix::zeros(dim, dim)), 0.0);
    }
}
