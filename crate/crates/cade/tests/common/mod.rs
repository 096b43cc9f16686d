//! Independent oracles shared by the integration suites. Everything here
//! deliberately avoids the library's computation paths: the transport cost
//! is solved as a flow program, the t-distribution tail is integrated
//! numerically, and gamma uses Spouge's series rather than Lanczos.

#![allow(dead_code)]
#![allow(clippy::too_many_arguments)]

/// Optimal-transport cost between two pmfs on five points with |i - j|
/// ground cost, solved exactly as a min-cost flow by successive shortest
/// paths on the residual network.
pub fn transport_cost_flow(p: &[f64; 5], q: &[f64; 5]) -> f64 {
    const N: usize = 5;
    const EPS: f64 = 1e-14;

    let mut supply = *p;
    let mut demand = *q;
    let mut flow = [[0.0f64; N]; N];

    // masses drift by ulps as augmentations subtract; anything below the
    // dust threshold is treated as exhausted (cost impact < 1e-11)
    const DUST: f64 = 1e-12;
    let mut rounds = 0;
    loop {
        rounds += 1;
        assert!(rounds <= 500, "transport oracle failed to converge");
        let total_supply: f64 = supply.iter().sum();
        let total_demand: f64 = demand.iter().sum();
        if total_supply <= DUST || total_demand <= DUST {
            break;
        }

        // Bellman-Ford over nodes: 0..5 sources, 5..10 sinks, 10 = super
        // source attached to every source with remaining supply.
        const NODES: usize = 11;
        let mut dist = [f64::INFINITY; NODES];
        let mut prev: [Option<usize>; NODES] = [None; NODES];
        dist[10] = 0.0;
        for _ in 0..NODES {
            let mut changed = false;
            for i in 0..N {
                if supply[i] > EPS && dist[10] < dist[i] {
                    dist[i] = dist[10];
                    prev[i] = Some(10);
                    changed = true;
                }
            }
            for i in 0..N {
                for j in 0..N {
                    let cost = (i as f64 - j as f64).abs();
                    // forward edge i -> sink j
                    if dist[i] + cost < dist[N + j] - 1e-15 {
                        dist[N + j] = dist[i] + cost;
                        prev[N + j] = Some(i);
                        changed = true;
                    }
                    // residual edge sink j -> i
                    if flow[i][j] > EPS && dist[N + j] - cost < dist[i] - 1e-15 {
                        dist[i] = dist[N + j] - cost;
                        prev[i] = Some(N + j);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        // cheapest reachable sink with remaining demand
        let mut best: Option<usize> = None;
        for j in 0..N {
            if demand[j] > EPS
                && dist[N + j].is_finite()
                && best.is_none_or(|b| dist[N + j] < dist[N + b])
            {
                best = Some(j);
            }
        }
        let sink = best.expect("feasible transport problem");

        // trace the path back, finding the bottleneck
        let mut path = Vec::new();
        let mut node = N + sink;
        while node != 10 {
            let p = prev[node].expect("path to super source");
            path.push((p, node));
            node = p;
        }
        path.reverse();

        let mut bottleneck = f64::min(demand[sink], f64::INFINITY);
        for &(a, b) in &path {
            if a == 10 {
                bottleneck = bottleneck.min(supply[b]);
            } else if a < N && b >= N {
                // forward edge, unbounded
            } else if a >= N && b < N {
                bottleneck = bottleneck.min(flow[b][a - N]);
            }
        }

        for &(a, b) in &path {
            if a < N && b >= N {
                flow[a][b - N] += bottleneck;
            } else if a >= N && a != 10 && b < N {
                flow[b][a - N] -= bottleneck;
            }
        }
        // the first hop marks the chosen source
        let source = path[0].1;
        supply[source] -= bottleneck;
        demand[sink] -= bottleneck;
    }

    let mut cost = 0.0;
    for (i, row) in flow.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            cost += f * (i as f64 - j as f64).abs();
        }
    }
    cost
}

/// ln Gamma by Spouge's approximation (a = 13), independent of the Lanczos
/// form used in the library. Larger a would tighten the series bound but
/// blow up coefficient cancellation in f64; a = 13 keeps both near 1e-11.
fn spouge_ln_gamma(z: f64) -> f64 {
    const A: usize = 13;
    if z < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - spouge_ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = (2.0 * std::f64::consts::PI).sqrt();
    let mut factorial = 1.0f64;
    for k in 1..A {
        if k > 1 {
            factorial *= -(k as f64 - 1.0);
        }
        let ak = A as f64 - k as f64;
        let ck = ak.powf(k as f64 - 0.5) * ak.exp() / factorial;
        acc += ck / (z + k as f64);
    }
    let t = z + A as f64;
    (z + 0.5) * t.ln() - t + acc.ln()
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, m, fa, fm, flm, left, eps * 0.5, depth - 1)
            + adaptive_simpson(f, m, b, fm, fb, frm, right, eps * 0.5, depth - 1)
    }
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_simpson(f, a, b, fa, fb, fm, whole, eps, 40)
}

/// Upper-tail probability P(T > t) of Student's t with `df` degrees of
/// freedom, by numerical integration of the density.
pub fn student_t_upper_tail_quadrature(t: f64, df: f64) -> f64 {
    if t < 0.0 {
        return 1.0 - student_t_upper_tail_quadrature(-t, df);
    }
    let ln_c = spouge_ln_gamma(0.5 * (df + 1.0))
        - spouge_ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let density = move |x: f64| (ln_c - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp();
    // map [t, inf) onto [0, 1) with x = t + u / (1 - u)
    let g = move |u: f64| {
        let one_minus = 1.0 - u;
        density(t + u / one_minus) / (one_minus * one_minus)
    };
    integrate(&g, 0.0, 1.0 - 1e-9, 1e-13)
}

/// Pearson correlation with Neumaier-compensated accumulation.
pub fn pearson_compensated(x: &[f64], y: &[f64]) -> f64 {
    fn csum(values: impl Iterator<Item = f64>) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for v in values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }
    let n = x.len() as f64;
    let mean_x = csum(x.iter().copied()) / n;
    let mean_y = csum(y.iter().copied()) / n;
    let cov = csum(x.iter().zip(y).map(|(a, b)| (a - mean_x) * (b - mean_y)));
    let var_x = csum(x.iter().map(|a| (a - mean_x) * (a - mean_x)));
    let var_y = csum(y.iter().map(|b| (b - mean_y) * (b - mean_y)));
    cov / (var_x.sqrt() * var_y.sqrt())
}
