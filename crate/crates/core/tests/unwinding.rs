use mtlab::blaschke::mobius;
use mtlab::poly::Poly;
use mtlab::series::{partial_sum_direct, CircleFunction, CircleGrid};
use mtlab::unwinding::{
    blaschke_factorize, unwinding_series, unwinding_to_mt_poles, StopReason, UnwindingDecomposition,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_poly(seed: u64, degree: usize) -> Poly {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Poly::new(
        (0..=degree)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect(),
    )
}

fn circle(n: usize) -> Vec<Complex64> {
    CircleGrid::new(n).unwrap().circle_points()
}

#[test]
fn factorization_identity_on_random_polynomials() {
    for seed in 0..20 {
        let f = random_poly(seed, 8);
        let fac = blaschke_factorize(&f).unwrap();
        let zeros = fac.inner.iter().filter(|a| a.modulus() == 0.0).count();
        assert_eq!(fac.outer.degree() + zeros, f.degree(), "seed {seed}");
        let scale = f.coefficient_norm();
        for z in circle(512) {
            let b: Complex64 = fac.inner.iter().map(|&a| mobius(a, z).unwrap()).product();
            let rebuilt = fac.value_at_zero + b * fac.outer.eval(z);
            assert!((rebuilt - f.eval(z)).norm() < 1e-8 * scale, "seed {seed}");
        }
        // the outer part has no zeros in the disc
        if !fac.outer.is_constant() {
            let roots = mtlab::poly::poly_roots(&fac.outer).unwrap();
            assert!(roots.iter().all(|r| r.norm() > 1.0), "seed {seed}: {roots:?}");
        }
    }
}

#[test]
fn error_column_is_monotone() {
    let grid = CircleGrid::new(1024).unwrap();
    for seed in 0..10 {
        let f = random_poly(100 + seed, 8);
        let dec = unwinding_series(&f, 6).unwrap();
        let table = dec.error_table(&f, grid);
        assert_eq!(table.len(), dec.terms.len());
        for w in table.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-12, "seed {seed}: {table:?}");
        }
        if dec.stop == StopReason::ConstantResidual {
            assert!(table.last().unwrap().1 < 1e-8);
        }
        for z in grid.circle_points() {
            assert!((dec.reconstruct(z) - f.eval(z)).norm() < 1e-8);
        }
    }
}

#[test]
fn unwinding_partial_sums_are_mt_partial_sums() {
    let grid = CircleGrid::new(4096).unwrap();
    for seed in 0..6 {
        let f = random_poly(200 + seed, 6);
        let dec = unwinding_series(&f, 4).unwrap();
        let all = unwinding_to_mt_poles(&dec).unwrap();
        let sampled = CircleFunction::from_boundary(grid, |z| f.eval(z));
        for k in 1..=dec.terms.len() {
            let cut = dec.cumulative_cut(k);
            if cut == 0 || all.as_slice()[..cut].iter().any(|a| a.modulus() > 0.99) {
                continue;
            }
            let mt = partial_sum_direct(&sampled, &all, cut).unwrap();
            let unwound = dec.partial_sum_on(k, grid);
            let gap = mt.sub(&unwound).unwrap().sup_norm();
            assert!(gap < 1e-7, "seed {seed}, K = {k}, cut {cut}: {gap:e}");
        }
    }
}

#[test]
fn json_round_trip_and_shape() {
    let f = random_poly(7, 8);
    let dec = unwinding_series(&f, 3).unwrap();
    let text = dec.to_json().unwrap();
    let back = UnwindingDecomposition::from_json(&text).unwrap();
    assert_eq!(back, dec);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let terms = v["terms"].as_array().unwrap();
    let mut total = 0;
    for (k, term) in terms.iter().enumerate() {
        total += term["poles"].as_array().unwrap().len();
        assert_eq!(term["cumulative_poles"].as_array().unwrap().len(), total);
        assert_eq!(dec.cumulative_cut(k + 1), total);
    }
    assert!(UnwindingDecomposition::from_json("{\"terms\": 3}").is_err());
}

#[test]
fn depth_limits_the_steps() {
    let f = random_poly(9, 8);
    let dec = unwinding_series(&f, 2).unwrap();
    assert_eq!(dec.steps, 2);
    assert_eq!(dec.stop, StopReason::DepthReached);
    assert!(!dec.residual.is_zero());
    assert!(unwinding_series(&f, 0).is_err());
}
