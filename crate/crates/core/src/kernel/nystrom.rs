use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{eval_op_kernel, gram, DiffOp, KernelSpec, Point};
use crate::error::{invalid, Result};
use crate::functional::{atoms, Functional};

/// Eigenfeatures of a kernel from its Gram matrix on a node set.
///
/// `phi_k(x) = sum_j u_jk K(x, node_j) / vartheta_k` extends the k-th
/// eigenvector off the nodes, and `psi_k = sqrt(vartheta_k) phi_k`.
/// Eigenvalues are those of the node Gram matrix itself (no `1/N` scaling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kernel: KernelSpec,
    pub nodes: Vec<Point>,
    pub eigenvalues: Vec<f64>,
    /// One eigenvector (over the nodes) per feature.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Features with eigenvalue at or below this cutoff are identically zero.
    pub cutoff: f64,
}

impl FeatureMap {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `<psi_k, xi>` for every feature k.
    pub fn features_of(&self, xi: &Functional) -> Result<Vec<f64>> {
        let sections = self.node_sections(xi)?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&val, vec)| {
                if val <= self.cutoff {
                    0.0
                } else {
                    vec.iter().zip(&sections).map(|(u, k)| u * k).sum::<f64>() / val.sqrt()
                }
            })
            .collect())
    }

    /// `phi_k(x)`; equals the eigenvector entry at a node.
    pub fn eigenfunction(&self, k: usize, x: &Point) -> Result<f64> {
        let sections = self.node_sections(&Functional::point(x.clone()))?;
        let val = self.eigenvalues[k];
        if val <= self.cutoff {
            return Ok(0.0);
        }
        Ok(self.eigenvectors[k].iter().zip(&sections).map(|(u, s)| u * s).sum::<f64>() / val)
    }

    fn node_sections(&self, xi: &Functional) -> Result<Vec<f64>> {
        let parts = atoms(xi);
        self.nodes
            .iter()
            .map(|node| {
                parts.iter().try_fold(0.0, |acc, (w, op, x)| {
                    Ok(acc + w * eval_op_kernel(&self.kernel, *op, x, DiffOp::Identity, node)?)
                })
            })
            .collect()
    }
}

/// Top-`m` eigenpairs of the node Gram matrix, sorted nonincreasing.
pub fn nystrom_features(spec: &KernelSpec, nodes: &[Point], m: usize) -> Result<FeatureMap> {
    if m == 0 || m > nodes.len() {
        return invalid(format!("requested {m} eigenfeatures from {} nodes", nodes.len()));
    }
    let fs: Vec<Functional> = nodes.iter().cloned().map(Functional::point).collect();
    let g = gram(spec, &fs)?;
    let trace = g.trace();
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    // stable sort keeps equal eigenvalues in solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Vec::with_capacity(m);
    for &k in order.iter().take(m) {
        eigenvalues.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.push(col.iter().map(|v| sign * v).collect());
    }
    Ok(FeatureMap { kernel: *spec, nodes: nodes.to_vec(), eigenvalues, eigenvectors, cutoff: 1e-12 * trace.abs() })
}

/// `per_axis^dim` tensor grid of cell midpoints on `[lo, hi]^dim`.
pub fn tensor_grid(per_axis: usize, dim: usize, lo: f64, hi: f64) -> Vec<Point> {
    let axis: Vec<f64> = (0..per_axis).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64).collect();
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0.0; dim];
            for slot in c.iter_mut() {
                *slot = axis[idx % per_axis];
                idx /= per_axis;
            }
            Point(c)
        })
        .collect()
}

/// Nodes used when no explicit Nyström node set is given: 64 points on `[0,1]^d`.
pub fn default_nodes(dim: usize) -> Vec<Point> {
    match dim {
        1 => tensor_grid(64, 1, 0.0, 1.0),
        2 => tensor_grid(8, 2, 0.0, 1.0),
        _ => tensor_grid(2, dim, 0.0, 1.0),
    }
}
