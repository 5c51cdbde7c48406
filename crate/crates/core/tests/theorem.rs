mod oracles;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmc_core::dense::Matrix;
use xmc_core::spectral::ResidualBlock;
use xmc_core::theorem::{self, SLACK};

const LAMBDAS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
    }
}

fn nonneg<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() * 3.0 }).collect()
}

fn randomized_search_finds_no_counterexample_check() -> String {
    let t = Instant::now();
    let rep = theorem::falsify(100_000, &LAMBDAS, 8, 8, 2024);
    let secs = t.elapsed().as_secs_f64();
    println!("{rep:?} in {secs:.2}s");
    assert_eq!(rep.instances, 100_000);
    assert_eq!(rep.violations(), 0);
    assert!(rep.max_feature_tightness <= 1.0 + 1e-9);
    assert!(rep.max_feature_tightness > 0.999, "witnesses should reach the bound");
    assert!(secs < 60.0);
    format!(
        "{} instances, 0 violations, tightest feature ratio {:.6}, {secs:.1}s",
        rep.instances, rep.max_feature_tightness
    )
}

/// Same claims evaluated entirely with oracle code: nalgebra SVD for the
/// budget and plain loops for the features.
fn oracle_evaluation_agrees_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in 0..20_000 {
        let lambda = LAMBDAS[n % 4];
        let dim = rng.gen_range(2..=8);
        let mut r = oracles::random_dense(&mut rng, dim, dim, 1.0);
        let flat: Vec<f64> = r.iter().flatten().copied().collect();
        let s = oracles::sigma_max(dim, dim, &flat);
        r.iter_mut().flatten().for_each(|x| *x *= lambda / s);
        let p = rng.gen_range(1..=8);
        let pos: Vec<Vec<f64>> = (0..p).map(|_| nonneg(&mut rng, dim)).collect();
        let q = nonneg(&mut rng, dim);
        // Identity embeddings make the bag equal to v itself.
        let e: oracles::Dense = (0..dim).map(|d| (0..dim).map(|j| f64::from(u8::from(j == d))).collect()).collect();
        let xhat = |v: &[f64]| {
            let x: Vec<(u32, f64)> = v.iter().enumerate().map(|(i, &a)| (i as u32, a)).collect();
            oracles::forward(&x, &e, &r, None, None).3
        };

        let xq = xhat(&q);
        let drift: Vec<f64> = xq.iter().zip(&q).map(|(a, b)| a - b).collect();
        assert!(norm(&drift) <= lambda * norm(&q) + SLACK, "#{n}: feature bound");

        let mut mu0 = vec![0.0; dim];
        let mut mu = vec![0.0; dim];
        for v in &pos {
            let xv = xhat(v);
            for d in 0..dim {
                mu0[d] += v[d] / p as f64;
                mu[d] += xv[d] / p as f64;
            }
        }
        let md: Vec<f64> = mu.iter().zip(&mu0).map(|(a, b)| a - b).collect();
        let sp = lambda * (p as f64).sqrt();
        assert!(norm(&md) <= sp * norm(&mu0) + SLACK, "#{n}: mean drift");
        if norm(&q) > 0.0 && norm(&mu0) > 0.0 {
            let eps = (1.0 + sp).powi(2) - 1.0;
            let (c0, c1) = (cos(&q, &mu0), cos(&xq, &mu));
            assert!(c1 >= c0 / (1.0 + eps) - SLACK, "#{n}: lower cosine bound");
            assert!(c1 <= c0 + eps + SLACK, "#{n}: upper cosine bound");
        }
    }
}

#[test]
fn crate_and_oracle_rows_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..500 {
        let dim = rng.gen_range(2..=8);
        let lambda = LAMBDAS[n % 4];
        let r = theorem::random_residual(&mut rng, dim, lambda);
        let s = oracles::sigma_max(dim, dim, r.as_slice());
        assert!(s <= lambda * (1.0 + 1e-9), "random_residual σ = {s} > {lambda}");
        let block = ResidualBlock::from_matrix(r.clone(), lambda, n as u64);
        let v = nonneg(&mut rng, dim);
        let row = theorem::check_feature_bound(&block, std::slice::from_ref(&v)).unwrap()[0];
        let rv = r.mul_vec(&v);
        let drift = norm(&rv.iter().map(|x| x.max(0.0)).collect::<Vec<_>>());
        assert!((row.drift - drift).abs() < 1e-12);
    }
}

fn equality_witness_attains_the_bound_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let dim = rng.gen_range(2..=8);
        let lambda = rng.gen_range(0.01..2.0);
        let v = nonneg(&mut rng, dim);
        if norm(&v) == 0.0 {
            continue;
        }
        let r = theorem::equality_witness(&v, lambda);
        assert!((oracles::sigma_max(dim, dim, r.as_slice()) - lambda).abs() < 1e-9);
        let row = theorem::feature_row(&r, lambda, &v);
        assert!(row.margin.abs() < 1e-9 * (1.0 + norm(&v)));
    }
}

#[test]
fn over_budget_residual_is_reported() {
    let block = ResidualBlock::from_matrix(Matrix::identity(3), 0.5, 0);
    assert!(theorem::check_feature_bound(&block, &[vec![1.0, 0.0, 0.0]]).is_err());
}

#[test]
fn randomized_search_finds_no_counterexample() {
    randomized_search_finds_no_counterexample_check();
}

#[test]
fn oracle_evaluation_agrees() {
    oracle_evaluation_agrees_check();
}

#[test]
fn equality_witness_attains_the_bound() {
    equality_witness_attains_the_bound_check();
}

#[allow(dead_code)]
pub fn acceptance() -> String {
    let summary = randomized_search_finds_no_counterexample_check();
    oracle_evaluation_agrees_check();
    equality_witness_attains_the_bound_check();
    format!("{summary}; 20000 oracle-evaluated instances agree")
}
