//! Regular grid on the probability simplex with Freudenthal-triangulation
//! interpolation (the standard construction for grid-based belief MDPs).
//!
//! Nodes are the points `c / M` with `c` a composition of the resolution `M`
//! into `K` non-negative parts. Any point of the simplex is a convex
//! combination of at most `K` neighbouring nodes, so interpolation never
//! extrapolates and is non-expansive in the sup norm.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexGrid {
    pub dim: usize,
    pub resolution: usize,
    #[serde(skip)]
    nodes: Vec<Vec<u32>>,
    #[serde(skip)]
    index: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    /// A single-regime grid has exactly one node whatever the resolution.
    pub fn new(dim: usize, resolution: usize) -> Self {
        assert!(dim >= 1, "simplex dimension must be positive");
        let resolution = if dim == 1 { 1 } else { resolution.max(1) };
        let mut nodes = Vec::new();
        let mut current = vec![0u32; dim];
        compositions(resolution as u32, 0, &mut current, &mut nodes);
        let index = nodes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        SimplexGrid {
            dim,
            resolution,
            nodes,
            index,
        }
    }

    /// Rebuilds the node list after deserialization.
    pub fn rebuilt(&self) -> Self {
        Self::new(self.dim, self.resolution)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let m = self.resolution as f64;
        self.nodes[i].iter().map(|&c| c as f64 / m).collect()
    }

    /// Node indices and convex weights whose combination reproduces `w`.
    /// `w` is renormalized first; it must have non-negative entries and a
    /// positive sum.
    pub fn interpolate(&self, w: &[f64]) -> Vec<(usize, f64)> {
        let k = self.dim;
        if k == 1 {
            return vec![(0, 1.0)];
        }
        let total: f64 = w.iter().sum();
        let m = self.resolution as f64;
        // x_i = M * sum_{j >= i} w_j, so x_0 = M and x is non-increasing
        let mut x = vec![0.0; k];
        let mut acc = 0.0;
        for i in (0..k).rev() {
            acc += w[i].max(0.0) / total;
            let xi = (m * acc).min(m);
            // snap rounding noise so grid points map to a single node
            x[i] = if (xi - xi.round()).abs() < 1e-9 { xi.round() } else { xi };
        }
        x[0] = m;
        let base: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
        let frac: Vec<f64> = x.iter().zip(&base).map(|(v, b)| v - *b as f64).collect();

        // coordinates 1..k by decreasing fractional part; coordinate 0 has none
        let mut order: Vec<usize> = (1..k).collect();
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

        // vertices with zero weight may sit outside the simplex; skip them
        let mut out = Vec::with_capacity(k);
        let mut vertex = base;
        let first_weight = 1.0 - frac[order[0]];
        if first_weight > 0.0 {
            out.push((self.node_of(&vertex), first_weight));
        }
        for (pos, &i) in order.iter().enumerate() {
            vertex[i] += 1;
            let next = order.get(pos + 1).map_or(0.0, |&j| frac[j]);
            let weight = frac[i] - next;
            if weight > 0.0 {
                out.push((self.node_of(&vertex), weight));
            }
        }
        out
    }

    /// Evaluates a node-indexed table at `w`.
    pub fn eval(&self, values: &[f64], w: &[f64]) -> f64 {
        self.interpolate(w)
            .into_iter()
            .map(|(i, weight)| weight * values[i])
            .sum()
    }

    fn node_of(&self, x: &[i64]) -> usize {
        let k = x.len();
        let comp: Vec<u32> = (0..k)
            .map(|i| {
                let next = if i + 1 < k { x[i + 1] } else { 0 };
                let c = x[i] - next;
                debug_assert!(c >= 0, "vertex {x:?} leaves the simplex");
                c.max(0) as u32
            })
            .collect();
        self.index[&comp]
    }
}

fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let k = current.len();
    if pos == k - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for c in (0..=remaining).rev() {
        current[pos] = c;
        compositions(remaining - c, pos + 1, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn node_counts() {
        assert_eq!(SimplexGrid::new(1, 20).len(), 1);
        assert_eq!(SimplexGrid::new(2, 20).len(), 21);
        assert_eq!(SimplexGrid::new(3, 4).len(), 15);
    }

    #[test]
    fn nodes_interpolate_to_themselves() {
        let g = SimplexGrid::new(3, 5);
        for i in 0..g.len() {
            let w = g.point(i);
            let parts = g.interpolate(&w);
            assert_eq!(parts.len(), 1, "{w:?} -> {parts:?}");
            assert_eq!(parts[0].0, i);
            assert!((parts[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_functions_are_exact() {
        let g = SimplexGrid::new(3, 4);
        let coef = [0.3, -1.2, 2.5];
        let values: Vec<f64> = (0..g.len())
            .map(|i| g.point(i).iter().zip(coef).map(|(a, b)| a * b).sum())
            .collect();
        let w = [0.17, 0.51, 0.32];
        let expect: f64 = w.iter().zip(coef).map(|(a, b)| a * b).sum();
        assert!((g.eval(&values, &w) - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_form_a_convex_combination(
            raw in proptest::collection::vec(0.0f64..1.0, 2..5),
            res in 1usize..12,
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let g = SimplexGrid::new(w.len(), res);
            let parts = g.interpolate(&w);
            let sum: f64 = parts.iter().map(|p| p.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(parts.iter().all(|p| p.1 >= 0.0));
            let mut rebuilt = vec![0.0; w.len()];
            for (i, weight) in parts {
                for (r, c) in rebuilt.iter_mut().zip(g.point(i)) {
                    *r += weight * c;
                }
            }
            for (a, b) in rebuilt.iter().zip(&w) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
