//! Brute-force references shared by the oracle and acceptance targets.
#![allow(dead_code)]

use ppm_attack::ppm::RoundInput;

/// Output of a machine with row-major weights `w`, by counting bits.
pub fn naive_output(x: &[u8], w: &[u8], n: usize, k: usize) -> (Vec<u8>, u8) {
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let mut ones = 0;
        for i in 0..n {
            if x[i * k + j] != w[i * k + j] {
                ones += 1;
            }
        }
        sigma.push(if 2 * ones > n { 1 } else { 0 });
    }
    let tau = sigma.iter().filter(|&&s| s == 1).count() % 2;
    (sigma, tau as u8)
}

pub fn bits_of(v: u32, len: usize) -> Vec<u8> {
    (0..len).map(|b| ((v >> b) & 1) as u8).collect()
}

/// Exact `P(s_i = 0 | τ)` for every distinct selected index under a product
/// prior, by enumerating all assignments of those indices.
pub fn exact_posterior(belief: &[f64], round: &RoundInput, tau_a: u8) -> Vec<(usize, f64)> {
    let (n, k) = (round.pi.rows(), round.pi.cols());
    let mut distinct: Vec<usize> = round.pi.entries().to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let d = distinct.len();
    let mut zero_mass = vec![0.0; d];
    let mut total = 0.0;
    for v in 0..(1u32 << d) {
        let assign = bits_of(v, d);
        let weight: f64 = assign
            .iter()
            .zip(&distinct)
            .map(|(&b, &i)| if b == 0 { belief[i] } else { 1.0 - belief[i] })
            .product();
        let w: Vec<u8> = round
            .pi
            .entries()
            .iter()
            .map(|e| assign[distinct.iter().position(|x| x == e).unwrap()])
            .collect();
        if naive_output(round.x.row_major(), &w, n, k).1 == tau_a {
            total += weight;
            for (slot, &b) in assign.iter().enumerate() {
                if b == 0 {
                    zero_mass[slot] += weight;
                }
            }
        }
    }
    distinct.into_iter().zip(zero_mass.into_iter().map(|z| z / total)).collect()
}

/// `P(at most ⌊N/2⌋ ones)` when bit `i` is 1 with probability `q[i]`.
pub fn poisson_binomial_tail(q: &[f64]) -> f64 {
    let n = q.len();
    (0..(1u32 << n))
        .filter(|v| 2 * v.count_ones() as usize <= n)
        .map(|v| {
            (0..n)
                .map(|i| if (v >> i) & 1 == 1 { q[i] } else { 1.0 - q[i] })
                .product::<f64>()
        })
        .sum()
}
