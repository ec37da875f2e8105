//! Small quadrature toolkit: Gauss-Legendre panels, adaptive Simpson, and
//! geometric panel layouts for integrands with boundary concentration.

use std::sync::OnceLock;

/// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton iteration
/// on the Legendre polynomial.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn order(k: usize) -> &'static GaussRule {
        static RULES: OnceLock<Vec<GaussRule>> = OnceLock::new();
        let rules = RULES.get_or_init(|| (0..=32).map(GaussRule::build).collect());
        &rules[k]
    }

    fn build(k: usize) -> GaussRule {
        let mut nodes = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for i in 0..k {
            // Chebyshev initial guess, Newton refinement
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_deriv(k, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_and_deriv(k, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(c + h * x);
        }
        sum * h
    }
}

fn legendre_and_deriv(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive quadrature with interior split points (kinks, indicator edges).
pub fn adaptive_split<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, splits: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = splits
        .iter()
        .copied()
        .filter(|&t| t > a && t < b)
        .collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let per = tol / (pts.len() - 1) as f64;
    pts.windows(2).map(|w| adaptive(f, w[0], w[1], per)).sum()
}

/// Panel edges growing geometrically from `from` towards `to`, starting with
/// panel size `first` and growth `ratio`. Always includes both endpoints.
pub fn geometric_edges(from: f64, to: f64, first: f64, ratio: f64) -> Vec<f64> {
    assert!(to > from && first > 0.0 && ratio > 1.0);
    let mut edges = vec![from];
    let mut step = first;
    let mut x = from;
    loop {
        x += step;
        if x >= to - 1e-15 * to.abs().max(1.0) {
            edges.push(to);
            return edges;
        }
        edges.push(x);
        step *= ratio;
    }
}

/// Integrate over geometric panels with a fixed Gauss rule per panel.
pub fn panel_integrate<F: FnMut(f64) -> f64>(edges: &[f64], order: usize, mut f: F) -> f64 {
    let rule = GaussRule::order(order);
    edges
        .windows(2)
        .map(|w| rule.integrate(w[0], w[1], &mut f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_exact_on_polynomials() {
        let r = GaussRule::order(8);
        // degree 15 is integrated exactly by 8 nodes
        let v = r.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_mild_singularity() {
        // integral of x^{-1/2} on (0, 1] = 2
        let v = adaptive(&|x: f64| x.max(1e-300).powf(-0.5), 1e-12, 1.0, 1e-9);
        assert!((v - 2.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn split_points_recover_indicator_accuracy() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let v = adaptive_split(&f, 0.0, 1.0, &[0.3], 1e-12);
        assert!((v - 1.7).abs() < 1e-12);
    }

    #[test]
    fn geometric_edges_cover_range() {
        let e = geometric_edges(1.0, 100.0, 0.1, 1.5);
        assert_eq!(e.first().copied(), Some(1.0));
        assert_eq!(e.last().copied(), Some(100.0));
        assert!(e.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn panel_quadrature_power_law_tail() {
        // integral of x^{-2} from 1 to 1000 = 1 - 1e-3
        let edges = geometric_edges(1.0, 1000.0, 0.05, 1.3);
        let v = panel_integrate(&edges, 12, |x| x.powi(-2));
        assert!((v - (1.0 - 1e-3)).abs() < 1e-12);
    }
}
