//! Gauss-Legendre rules and small quadrature helpers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, cached per `n`.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut pairs = GaussLegendre::new(n.max(2))
                .expect("rule of degree >= 2")
                .as_node_weight_pairs()
                .to_vec();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            Arc::new(pairs)
        })
        .clone()
}

/// `∫_lo^hi f` with the `n`-point rule.
pub fn integrate(n: usize, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre(n);
    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut acc = 0.0;
    for &(x, w) in rule.iter() {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Pairwise summation with a fixed split topology.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
