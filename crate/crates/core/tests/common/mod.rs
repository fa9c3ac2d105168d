#![allow(dead_code)]

use std::collections::BTreeMap;

use scgf_core::cloning::CloneSizeDistribution;
use scgf_core::model::{registry_model, JumpModel};
use scgf_core::tilt::TiltedDynamics;

pub fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

pub fn two_state(a: f64, b: f64) -> JumpModel {
    registry_model("two_state", &params(&[("a", a), ("b", b)])).unwrap()
}

pub fn pos(a: f64) -> f64 {
    a.max(0.0)
}

pub fn neg(a: f64) -> f64 {
    (-a).max(0.0)
}

/// All size-`n` subsets of `0..total`, in lexicographic order.
pub fn subsets(total: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, total: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for j in start..total {
            cur.push(j);
            rec(j + 1, total, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, total, n, &mut Vec::new(), &mut out);
    out
}

/// Every configuration of `n` particles on `s` states.
pub fn configurations(n: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..s).map(move |x| {
                    let mut c = c.clone();
                    c.push(x);
                    c
                })
            })
            .collect();
    }
    out
}

/// Visits every transition `(rate, new configuration)` of the cloning
/// generator from `conf`, listed directly from its definition.
pub fn for_each_cloning_event(td: &TiltedDynamics, law: &CloneSizeDistribution, conf: &[usize], mut visit: impl FnMut(f64, &[usize])) {
    let n = conf.len();
    let v = td.potential();
    let mut next = conf.to_vec();
    for i in 0..n {
        let x = conf[i];
        for (size, &p) in law.law[x].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let sets = subsets(n, size);
            let per_set = p / sets.len() as f64;
            for a in &sets {
                for t in td.transitions(x) {
                    next.copy_from_slice(conf);
                    for &j in a {
                        next[j] = x;
                    }
                    next[i] = t.to;
                    visit(per_set * t.rate, &next);
                }
            }
        }
        let kill = neg(v[x] - law.c);
        if kill > 0.0 {
            for j in 0..n {
                next.copy_from_slice(conf);
                next[i] = conf[j];
                visit(kill / n as f64, &next);
            }
        }
    }
}

pub fn empirical(conf: &[usize], s: usize) -> Vec<f64> {
    let mut mu = vec![0.0; s];
    for &x in conf {
        mu[x] += 1.0 / conf.len() as f64;
    }
    mu
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `L_{mu,c} f(x) = L^ f(x) + sum_y W~_c(x,y) (f(y) - f(x)) mu(y)`.
pub fn mckean_generator(td: &TiltedDynamics, c: f64, mu: &[f64], f: &[f64]) -> Vec<f64> {
    let v = td.potential();
    let s = td.size();
    (0..s)
        .map(|x| {
            let mutation: f64 = td.transitions(x).iter().map(|t| t.rate * (f[t.to] - f[x])).sum();
            let selection: f64 = (0..s).map(|y| (neg(v[x] - c) + pos(v[y] - c)) * (f[y] - f[x]) * mu[y]).sum();
            mutation + selection
        })
        .collect()
}

/// Transition-rate matrix (as rows of `(target, rate)`) of the state counts of
/// the two-state mean-field engine with killing/cloning selection: index `j`
/// is the number of particles in state 0.
pub fn meanfield_count_chain(td: &TiltedDynamics, c: f64, n: usize) -> Vec<Vec<(usize, f64)>> {
    let v = td.potential();
    let w = |x: usize, y: usize| neg(v[x] - c) + pos(v[y] - c);
    let lam = td.tilted_escape();
    let nf = n as f64;
    (0..=n)
        .map(|j| {
            let (a, b) = (j as f64, (n - j) as f64);
            let down = a * lam[0] + a * b / nf * w(0, 1);
            let up = b * lam[1] + b * a / nf * w(1, 0);
            let mut row = Vec::new();
            if j > 0 {
                row.push((j - 1, down));
            }
            if j < n {
                row.push((j + 1, up));
            }
            row
        })
        .collect()
}

/// Law at time `horizon` of a chain given by rate rows, by RK4 on the forward equation.
pub fn evolve_chain(rows: &[Vec<(usize, f64)>], p0: &[f64], horizon: f64, steps: usize) -> Vec<f64> {
    let m = rows.len();
    let out_rate: Vec<f64> = rows.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
    let rhs = |p: &[f64]| {
        let mut d: Vec<f64> = (0..m).map(|i| -out_rate[i] * p[i]).collect();
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                d[j] += w * p[i];
            }
        }
        d
    };
    let h = horizon / steps as f64;
    let mut p = p0.to_vec();
    for _ in 0..steps {
        let k1 = rhs(&p);
        let k2 = rhs(&p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect::<Vec<_>>());
        let k3 = rhs(&p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect::<Vec<_>>());
        let k4 = rhs(&p.iter().zip(&k3).map(|(a, b)| a + h * b).collect::<Vec<_>>());
        for i in 0..m {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

/// Binomial(n, q) probability vector.
pub fn binomial(n: usize, q: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    let mut log_choose = 0.0f64;
    for j in 0..=n {
        if j > 0 {
            log_choose += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        p[j] = if q == 0.0 {
            if j == 0 { 1.0 } else { 0.0 }
        } else if q == 1.0 {
            if j == n { 1.0 } else { 0.0 }
        } else {
            (log_choose + j as f64 * q.ln() + (n - j) as f64 * (1.0 - q).ln()).exp()
        };
    }
    p
}
